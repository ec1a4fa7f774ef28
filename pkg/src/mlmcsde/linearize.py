"""Ito linearization: fold a smooth payoff into the SDE as a new component.

Ito's lemma gives the payoff its own SDE.  Appending that component turns the
problem into one with a linear selector payoff, whose single-step base-level
expectation is known in closed form, so level 0 needs no sampling at all.
"""

from dataclasses import dataclass

import numpy as np

from .models import Payoff, SdeSystem, linear
from .schemes import ConfigurationError

__all__ = ["AugmentedSystem", "augment", "base_level_expectation"]


@dataclass(frozen=True)
class AugmentedSystem:
    """(d+1)-dimensional system whose last component tracks the payoff."""

    inner: SdeSystem
    system: SdeSystem
    payoff: Payoff          # the original payoff, for reference
    selector: Payoff        # linear selector on the last component


def augment(system, payoff):
    """Augmented system carrying the payoff's Ito dynamics.

    The extra drift is sum_i a_i P_xi + (1/2) sum_j sum_ik b_ij b_kj P_xixk
    and the extra diffusion row is sum_i b_ij P_xi.  The extra h-tensor row
    follows from differentiating that diffusion row:

        h_(d+1)jk = sum_i P_xi h_ijk + (1/2) sum_il b_ij b_lk P_xixl,

    which needs only the payoff's gradient and hessian, so all built-in C2
    payoffs get an exact augmented tensor.
    """
    if payoff.smoothness not in ("C2", "Linear"):
        raise ConfigurationError(
            f"payoff {payoff.name!r} is {payoff.smoothness}; Ito "
            "linearization needs two continuous derivatives")
    d, D = system.d, system.D

    def split(state):
        return state[..., :d]

    def drift(state, t):
        x = split(state)
        a = system.drift(x, t)
        b = system.diffusion(x, t)
        g = payoff.gradient(x)
        H = payoff.hessian(x)
        extra = (np.einsum("...i,...i->...", a, g)
                 + 0.5 * np.einsum("...ij,...kj,...ik->...", b, b, H))
        return np.concatenate([a, extra[..., None]], axis=-1)

    def diffusion(state, t):
        x = split(state)
        b = system.diffusion(x, t)
        g = payoff.gradient(x)
        row = np.einsum("...ij,...i->...j", b, g)
        return np.concatenate([b, row[..., None, :]], axis=-2)

    def h_tensor(state, t):
        x = split(state)
        b = system.diffusion(x, t)
        h = system.h_tensor(x, t)
        g = payoff.gradient(x)
        H = payoff.hessian(x)
        row = (np.einsum("...i,...ijk->...jk", g, h)
               + 0.5 * np.einsum("...ij,...lk,...il->...jk", b, b, H))
        return np.concatenate([h, row[..., None, :, :]], axis=-3)

    x0 = system.initial_state
    initial = np.concatenate([x0, np.atleast_1d(payoff.value(x0))])
    aug = SdeSystem(d=d + 1, D=D, drift=drift, diffusion=diffusion,
                    h_tensor=h_tensor, initial_state=initial,
                    horizon=system.horizon,
                    correlation_root=system.correlation_root)
    return AugmentedSystem(inner=system, system=aug, payoff=payoff,
                           selector=linear(d + 1, d=d + 1))


def base_level_expectation(aug, T=None):
    """Exact single-step base-level mean: P(S0) + alpha_{d+1}(S0, 0) * T.

    The stochastic terms of the one-step discretization all have zero mean,
    so level 0 contributes this constant with zero variance (N_0 = 1).
    """
    if T is None:
        T = aug.system.horizon
    s0 = aug.system.initial_state
    alpha = aug.system.drift(s0, 0.0)
    return float(s0[-1] + alpha[-1] * T)
