"""SDE system and payoff abstractions, with Heston and GBM built in.

All evaluators are vectorized: states may carry arbitrary leading axes, with
the last axis holding the d components.  drift(state, t) -> (..., d),
diffusion(state, t) -> (..., d, D), h_tensor(state, t) -> (..., d, D, D).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SdeSystem",
    "Payoff",
    "heston_system",
    "gbm_system",
    "builtin_payoffs",
    "h_tensor_from_diffusion",
]


@dataclass(frozen=True)
class SdeSystem:
    """Ito SDE dS_i = a_i dt + sum_j b_ij dW_j on [0, T].

    h_tensor holds h_ijk = (1/2) sum_l b_lk * db_ij/dx_l, the second-order
    coefficient of the Milstein-type steps.
    """

    d: int
    D: int
    drift: Callable
    diffusion: Callable
    h_tensor: Callable
    initial_state: np.ndarray
    horizon: float
    correlation_root: Optional[np.ndarray] = None

    @property
    def correlation(self):
        """Omega = R R^T; identity when no root is supplied."""
        if self.correlation_root is None:
            return np.eye(self.D)
        R = np.asarray(self.correlation_root)
        return R @ R.T


@dataclass(frozen=True)
class Payoff:
    """Scalar terminal-state functional, with derivatives when smooth.

    smoothness is one of "C2", "Lipschitz", "Linear".  C2 and Linear payoffs
    carry analytic gradient and hessian.
    """

    name: str
    value: Callable
    smoothness: str
    gradient: Optional[Callable] = None
    hessian: Optional[Callable] = None

    def __post_init__(self):
        if self.smoothness in ("C2", "Linear"):
            if self.gradient is None or self.hessian is None:
                raise ValueError(
                    f"payoff {self.name!r} is {self.smoothness} but lacks "
                    "gradient/hessian")


def heston_system(kappa=1.0, theta=1.0, xi=1.0, mu=1.0, eta=0.25,
                  S0=(0.5, 1.0), T=0.125):
    """Stochastic-volatility model: volatility S1, asset price S2.

        dS1 = kappa (theta - S1) dt + xi sqrt(S1) dW1
        dS2 = mu S2 dt + eta sqrt(S1) S2 dW2

    sqrt(S1) is evaluated as sqrt(max(S1, 0)) so discrete paths that cross
    zero volatility stay evaluable.
    """
    S0 = np.asarray(S0, dtype=np.float64)
    if S0[0] <= 0.0:
        raise ValueError(f"initial volatility must be positive, got {S0[0]}")
    for name, v in (("kappa", kappa), ("theta", theta), ("xi", xi),
                    ("mu", mu), ("eta", eta)):
        if not np.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v}")

    def drift(state, t):
        s1 = state[..., 0]
        s2 = state[..., 1]
        return np.stack([kappa * (theta - s1), mu * s2], axis=-1)

    def diffusion(state, t):
        s1 = np.sqrt(np.maximum(state[..., 0], 0.0))
        s2 = state[..., 1]
        b = np.zeros(state.shape[:-1] + (2, 2))
        b[..., 0, 0] = xi * s1
        b[..., 1, 1] = eta * s1 * s2
        return b

    def h_tensor(state, t):
        # Nonzero entries by hand differentiation:
        #   h_111 = xi^2 / 4
        #   h_221 = xi * eta * S2 / 4
        #   h_222 = eta^2 * S1 * S2 / 2
        s1 = np.maximum(state[..., 0], 0.0)
        s2 = state[..., 1]
        h = np.zeros(state.shape[:-1] + (2, 2, 2))
        h[..., 0, 0, 0] = xi * xi / 4.0
        h[..., 1, 1, 0] = xi * eta * s2 / 4.0
        h[..., 1, 1, 1] = eta * eta * s1 * s2 / 2.0
        return h

    return SdeSystem(d=2, D=2, drift=drift, diffusion=diffusion,
                     h_tensor=h_tensor, initial_state=S0, horizon=T)


def gbm_system(mu=1.0, sigma=0.2, S0=1.0, T=0.125):
    """Geometric Brownian motion; analytic mean S0 * exp(mu * T)."""
    if S0 <= 0.0:
        raise ValueError(f"S0 must be positive, got {S0}")

    def drift(state, t):
        return mu * state

    def diffusion(state, t):
        return sigma * state[..., None]

    def h_tensor(state, t):
        return 0.5 * sigma * sigma * state[..., None, None]

    return SdeSystem(d=1, D=1, drift=drift, diffusion=diffusion,
                     h_tensor=h_tensor,
                     initial_state=np.array([S0]), horizon=T)


def h_tensor_from_diffusion(diffusion, d, D, rel_step=1e-6):
    """Central finite-difference h-tensor for user models without an
    analytic one.  Lower accuracy than a hand-coded tensor; prefer the
    analytic form where available.
    """

    def h_tensor(state, t):
        state = np.asarray(state, dtype=np.float64)
        b0 = diffusion(state, t)
        h = np.zeros(state.shape[:-1] + (d, D, D))
        for l in range(d):
            step = rel_step * (1.0 + np.abs(state[..., l]))
            up = state.copy()
            up[..., l] += step
            dn = state.copy()
            dn[..., l] -= step
            db = (diffusion(up, t) - diffusion(dn, t)) / (2.0 * step)[..., None, None]
            # h_ijk += (1/2) b_lk * db_ij/dx_l
            h += 0.5 * db[..., :, :, None] * b0[..., l, :][..., None, None, :]
        return h

    return h_tensor


def _component_selector(m, d):
    if not 1 <= m <= d:
        raise IndexError(f"component {m} out of range for dimension {d}")
    return m - 1


def european_call(strike, component=2):
    """max(0, S_component - strike); Lipschitz, kink at the strike."""

    def value(state):
        return np.maximum(state[..., component - 1] - strike, 0.0)

    return Payoff(name=f"call(K={strike:g})", value=value,
                  smoothness="Lipschitz")


def sin_of_component(m, d=2):
    i = _component_selector(m, d)

    def value(state):
        return np.sin(state[..., i])

    def gradient(state):
        g = np.zeros(state.shape)
        g[..., i] = np.cos(state[..., i])
        return g

    def hessian(state):
        H = np.zeros(state.shape + (d,))
        H[..., i, i] = -np.sin(state[..., i])
        return H

    return Payoff(name=f"sin(S{m})", value=value, smoothness="C2",
                  gradient=gradient, hessian=hessian)


def linear(m, d=2):
    i = _component_selector(m, d)

    def value(state):
        return state[..., i]

    def gradient(state):
        g = np.zeros(state.shape)
        g[..., i] = 1.0
        return g

    def hessian(state):
        return np.zeros(state.shape + (d,))

    return Payoff(name=f"S{m}", value=value, smoothness="Linear",
                  gradient=gradient, hessian=hessian)


def quadratic(i, j, d=2):
    ii = _component_selector(i, d)
    jj = _component_selector(j, d)

    def value(state):
        return state[..., ii] * state[..., jj]

    def gradient(state):
        g = np.zeros(state.shape)
        g[..., ii] += state[..., jj]
        g[..., jj] += state[..., ii]
        return g

    def hessian(state):
        H = np.zeros(state.shape + (d,))
        H[..., ii, jj] += 1.0
        H[..., jj, ii] += 1.0
        return H

    return Payoff(name=f"S{i}*S{j}", value=value, smoothness="C2",
                  gradient=gradient, hessian=hessian)


def builtin_payoffs():
    """Factories for the shipped payoffs, keyed by CLI name."""
    return {
        "call": european_call,
        "sin": sin_of_component,
        "linear": linear,
        "quadratic": quadratic,
    }
