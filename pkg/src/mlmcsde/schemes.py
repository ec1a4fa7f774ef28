"""Discretization kernels and coupled fine/coarse path evolvers.

Each evolver produces the per-path level-difference samples that the MLMC
driver accumulates.  Fine and coarse paths always consume the same Brownian
grid; the coarse path sees only aggregated increments.

Batched variants (suffix ``_batch``) evolve many paths at once and are the
hot path; the per-path functions wrap them and return a CoupledSample.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .brownian import (
    _coarse_increment_block,
    _levy_quadrature_block,
    sample_increment_block,
)

__all__ = [
    "ConfigurationError",
    "CoupledSample",
    "SchemeDescriptor",
    "SCHEMES",
    "euler_step",
    "milstein_fine_step",
    "approx_milstein_coarse_step",
    "evolve_euler_coupled",
    "evolve_milstein_coupled",
    "evolve_antithetic_coupled",
    "evolve_approx_milstein_coupled",
    "evolve_base_level",
    "evolve_coupled_batch",
    "evolve_base_level_batch",
]


class ConfigurationError(ValueError):
    """Incompatible scheme/payoff/model combination."""


@dataclass(frozen=True)
class SchemeDescriptor:
    """Orders, expected variance decay, and per-path cost rule of a scheme.

    A level-l coupled path costs fine_cost * M^l + coarse_cost * M^(l-1)
    time steps, before any dimension weighting.
    """

    name: str
    weak_order: float
    strong_order: float
    beta: float
    fine_cost: int
    coarse_cost: int

    def __post_init__(self):
        if not self.weak_order >= self.strong_order > 0:
            raise ValueError("scheme orders must satisfy p >= q > 0")


SCHEMES = {
    "euler": SchemeDescriptor("euler", 1.0, 0.5, 1.0, 1, 1),
    "milstein": SchemeDescriptor("milstein", 1.0, 1.0, 2.0, 1, 1),
    "antithetic": SchemeDescriptor("antithetic", 1.0, 0.5, 2.0, 2, 1),
    "approx-milstein": SchemeDescriptor("approx-milstein", 1.0, 0.5, 2.0, 1, 2),
}


@dataclass
class CoupledSample:
    """One path's contribution to a level-difference estimator."""

    fine_payoff: float
    coarse_payoff: Optional[float]
    fine_terminal: np.ndarray
    coarse_terminal: Optional[np.ndarray]
    steps_taken: int


@dataclass
class _BatchResult:
    fine_payoff: np.ndarray
    coarse_payoff: Optional[np.ndarray]
    fine_terminal: np.ndarray
    coarse_terminal: Optional[np.ndarray]
    steps_per_path: int
    # antithetic partner or starred path, when the scheme has one
    aux_terminal: Optional[np.ndarray] = None


def euler_step(system, state, t, h, dW):
    """state + a h + b dW."""
    a = system.drift(state, t)
    b = system.diffusion(state, t)
    return state + a * h + np.einsum("...ij,...j->...i", b, dW)


def _second_order_term(system, state, t, q):
    ht = system.h_tensor(state, t)
    return np.einsum("...ijk,...jk->...i", ht, q)


def milstein_fine_step(system, state, t, h, dW, omega=None):
    """Milstein step with Levy areas omitted: the D^f increment applied.

    state + a h + b dW + sum_jk h_jk (dW_j dW_k - Omega_jk h).
    """
    if omega is None:
        omega = system.correlation
    q = dW[..., :, None] * dW[..., None, :] - omega * h
    return euler_step(system, state, t, h, dW) + _second_order_term(
        system, state, t, q)


def approx_milstein_coarse_step(system, star_state, coarse_state, t, Delta_t,
                                grid, omega=None):
    """The D^{c,M} increment applied to coarse_state.

    Drift is evaluated at the starred state, diffusion and h-tensor at the
    coarse state; the antisymmetric Levy quadrature (A - A^T) is subtracted
    inside the second-order term.
    """
    dW = _coarse_increment_block(grid.increments[None])[0]
    A = _levy_quadrature_block(grid.increments[None])[0]
    return _approx_milstein_coarse(system, star_state, coarse_state, t,
                                   Delta_t, dW, A,
                                   system.correlation if omega is None else omega)


def _approx_milstein_coarse(system, star_state, coarse_state, t, Delta_t,
                            dW, A, omega):
    a = system.drift(star_state, t)
    b = system.diffusion(coarse_state, t)
    q = (dW[..., :, None] * dW[..., None, :] - omega * Delta_t
         - A + np.swapaxes(A, -1, -2))
    return (coarse_state + a * Delta_t
            + np.einsum("...ij,...j->...i", b, dW)
            + _second_order_term(system, coarse_state, t, q))


def _draw_level_grids(system, level, M, global_seed, path_indices):
    """All fine increments of the given paths at one level.

    Returns (increments, n_coarse, delta_t, Delta_t) with increments of
    shape (B, n_coarse, M, D).
    """
    T = system.horizon
    delta_t = T * M ** (-level)
    Delta_t = M * delta_t
    n_coarse = M ** (level - 1)
    incs = sample_increment_block(
        global_seed, level, path_indices, np.arange(n_coarse),
        M, system.D, delta_t, system.correlation_root)
    return incs, n_coarse, delta_t, Delta_t


def _broadcast_initial(system, n_paths):
    return np.broadcast_to(system.initial_state, (n_paths, system.d)).copy()


def _steps_per_path(descr, level, M):
    return descr.fine_cost * M**level + descr.coarse_cost * M ** (level - 1)


def _evolve_euler_like(step, descr, system, payoff, level, M, global_seed,
                       path_indices):
    incs, n_coarse, delta_t, Delta_t = _draw_level_grids(
        system, level, M, global_seed, path_indices)
    B = len(path_indices)
    Sf = _broadcast_initial(system, B)
    Sc = _broadcast_initial(system, B)
    omega = system.correlation
    for n in range(n_coarse):
        tn = n * Delta_t
        for m in range(M):
            Sf = step(system, Sf, tn + m * delta_t, delta_t, incs[:, n, m],
                      omega)
        Sc = step(system, Sc, tn, Delta_t,
                  _coarse_increment_block(incs[:, n]), omega)
    return _BatchResult(
        fine_payoff=payoff.value(Sf), coarse_payoff=payoff.value(Sc),
        fine_terminal=Sf, coarse_terminal=Sc,
        steps_per_path=_steps_per_path(descr, level, M))


def evolve_euler_coupled_batch(system, payoff, level, M, global_seed,
                               path_indices):
    if level < 1:
        raise ValueError("coupled evolution requires level >= 1")

    def step(sys_, S, t, h, dW, omega):
        return euler_step(sys_, S, t, h, dW)

    return _evolve_euler_like(step, SCHEMES["euler"], system, payoff, level,
                              M, global_seed, path_indices)


def evolve_milstein_coupled_batch(system, payoff, level, M, global_seed,
                                  path_indices):
    """Full Milstein coupling; only valid when D = 1 (Levy areas vanish)."""
    if system.D != 1:
        raise ConfigurationError(
            "full Milstein is implemented only for scalar noise (D=1)")
    if level < 1:
        raise ValueError("coupled evolution requires level >= 1")

    def step(sys_, S, t, h, dW, omega):
        return milstein_fine_step(sys_, S, t, h, dW, omega)

    return _evolve_euler_like(step, SCHEMES["milstein"], system, payoff,
                              level, M, global_seed, path_indices)


def evolve_antithetic_coupled_batch(system, payoff, level, M, global_seed,
                                    path_indices):
    """Antithetic pair driven by forward and reversed sub-step orderings.

    The averaged fine payoff (P(S^f) + P(S^a)) / 2 cancels the leading
    Levy-area contribution against the coarse Milstein-without-areas path.
    """
    if level < 1:
        raise ValueError("coupled evolution requires level >= 1")
    if M < 2:
        raise ValueError("antithetic coupling requires M >= 2")
    incs, n_coarse, delta_t, Delta_t = _draw_level_grids(
        system, level, M, global_seed, path_indices)
    B = len(path_indices)
    Sf = _broadcast_initial(system, B)
    Sa = _broadcast_initial(system, B)
    Sc = _broadcast_initial(system, B)
    omega = system.correlation
    for n in range(n_coarse):
        tn = n * Delta_t
        for m in range(M):
            tm = tn + m * delta_t
            Sf = milstein_fine_step(system, Sf, tm, delta_t, incs[:, n, m],
                                    omega)
            Sa = milstein_fine_step(system, Sa, tm, delta_t,
                                    incs[:, n, M - 1 - m], omega)
        Sc = milstein_fine_step(system, Sc, tn, Delta_t,
                                _coarse_increment_block(incs[:, n]), omega)
    fine_pay = 0.5 * (payoff.value(Sf) + payoff.value(Sa))
    return _BatchResult(
        fine_payoff=fine_pay, coarse_payoff=payoff.value(Sc),
        fine_terminal=Sf, coarse_terminal=Sc,
        steps_per_path=_steps_per_path(SCHEMES["antithetic"], level, M),
        aux_terminal=Sa)


def evolve_approx_milstein_coupled_batch(system, payoff, level, M,
                                         global_seed, path_indices):
    """Fine Milstein-without-areas path against the starred/coarse pair.

    The equal-expectations identity holds componentwise, so the payoff must
    be a linear coordinate selector (normally the last component of the
    Ito-augmented system).
    """
    if level < 1:
        raise ValueError("coupled evolution requires level >= 1")
    if payoff.smoothness != "Linear":
        raise ConfigurationError(
            "approx-milstein requires a linear selector payoff; apply Ito "
            "linearization to the system first")
    incs, n_coarse, delta_t, Delta_t = _draw_level_grids(
        system, level, M, global_seed, path_indices)
    B = len(path_indices)
    Sf = _broadcast_initial(system, B)
    Sc = _broadcast_initial(system, B)
    Sstar = _broadcast_initial(system, B)
    omega = system.correlation
    for n in range(n_coarse):
        tn = n * Delta_t
        for m in range(M):
            Sf = milstein_fine_step(system, Sf, tn + m * delta_t, delta_t,
                                    incs[:, n, m], omega)
        dW = _coarse_increment_block(incs[:, n])
        A = _levy_quadrature_block(incs[:, n])
        Sc_next = _approx_milstein_coarse(system, Sstar, Sc, tn, Delta_t,
                                          dW, A, omega)
        Sstar = milstein_fine_step(system, Sstar, tn, Delta_t, dW, omega)
        Sc = Sc_next
    return _BatchResult(
        fine_payoff=payoff.value(Sf), coarse_payoff=payoff.value(Sc),
        fine_terminal=Sf, coarse_terminal=Sc,
        steps_per_path=_steps_per_path(SCHEMES["approx-milstein"], level, M),
        aux_terminal=Sstar)


def evolve_base_level_batch(system, payoff, M, global_seed, path_indices,
                            scheme="euler"):
    """Single-step level-0 samples: one fine path, no coarse partner."""
    T = system.horizon
    incs = sample_increment_block(global_seed, 0, path_indices, [0], 1,
                                  system.D, T, system.correlation_root)
    dW = incs[:, 0, 0]
    S0 = _broadcast_initial(system, len(path_indices))
    if scheme == "euler":
        S = euler_step(system, S0, 0.0, T, dW)
    else:
        S = milstein_fine_step(system, S0, 0.0, T, dW)
    return _BatchResult(fine_payoff=payoff.value(S), coarse_payoff=None,
                        fine_terminal=S, coarse_terminal=None,
                        steps_per_path=1)


_BATCH_EVOLVERS = {
    "euler": evolve_euler_coupled_batch,
    "milstein": evolve_milstein_coupled_batch,
    "antithetic": evolve_antithetic_coupled_batch,
    "approx-milstein": evolve_approx_milstein_coupled_batch,
}


def evolve_coupled_batch(scheme, system, payoff, level, M, global_seed,
                         path_indices):
    try:
        evolver = _BATCH_EVOLVERS[scheme]
    except KeyError:
        raise ConfigurationError(
            f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    return evolver(system, payoff, level, M, global_seed, path_indices)


def _single(batch_fn, system, payoff, level, M, seed):
    r = batch_fn(system, payoff, level, M, seed.global_seed,
                 [seed.path_index])
    return CoupledSample(
        fine_payoff=float(r.fine_payoff[0]),
        coarse_payoff=(None if r.coarse_payoff is None
                       else float(r.coarse_payoff[0])),
        fine_terminal=r.fine_terminal[0],
        coarse_terminal=(None if r.coarse_terminal is None
                         else r.coarse_terminal[0]),
        steps_taken=r.steps_per_path)


def evolve_euler_coupled(system, payoff, level, M, seed):
    return _single(evolve_euler_coupled_batch, system, payoff, level, M, seed)


def evolve_milstein_coupled(system, payoff, level, M, seed):
    return _single(evolve_milstein_coupled_batch, system, payoff, level, M,
                   seed)


def evolve_antithetic_coupled(system, payoff, level, M, seed):
    return _single(evolve_antithetic_coupled_batch, system, payoff, level, M,
                   seed)


def evolve_approx_milstein_coupled(system, payoff, level, M, seed):
    return _single(evolve_approx_milstein_coupled_batch, system, payoff,
                   level, M, seed)


def evolve_base_level(system, payoff, M, seed, scheme="euler"):
    r = evolve_base_level_batch(system, payoff, M, seed.global_seed,
                                [seed.path_index], scheme)
    return CoupledSample(
        fine_payoff=float(r.fine_payoff[0]), coarse_payoff=None,
        fine_terminal=r.fine_terminal[0], coarse_terminal=None,
        steps_taken=1)
