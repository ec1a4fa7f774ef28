"""Hierarchically consistent Brownian increments for coupled level pairs.

Every increment is addressed by (global_seed, level, path_index,
coarse_step_index, draw) and computed by a counter-based generator, so any
sub-step of any path can be produced independently, in any order, on any
worker, with identical results.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "PathSeed",
    "IncrementGrid",
    "sample_increments",
    "sample_increment_block",
    "coarse_increment",
    "levy_quadrature",
    "reverse_substeps",
]

# Bit layout of the 64-bit counter: level | path | coarse step | draw.
_LEVEL_BITS = 4
_PATH_BITS = 32
_STEP_BITS = 16
_DRAW_BITS = 12

_GAMMA = np.uint64(0x9E3779B97F4A7C15)


@dataclass(frozen=True)
class PathSeed:
    """Addresses the increment stream of one coarse interval of one path."""

    global_seed: int
    level: int
    path_index: int
    coarse_step_index: int = 0


@dataclass
class IncrementGrid:
    """The M fine sub-step increments spanning one coarse interval.

    ``increments[m, j]`` is the j-th component of the m-th sub-step increment,
    each marginally N(0, delta_t * Omega_jj).
    """

    M: int
    D: int
    delta_t: float
    increments: np.ndarray


def _mix(x):
    # Stafford mix13 finalizer (SplittableRandom); bijective on uint64.
    # Multiplication wraps mod 2^64 by design.
    x = np.uint64(x) if np.isscalar(x) else x
    with np.errstate(over="ignore"):
        x ^= x >> np.uint64(30)
        x *= np.uint64(0xBF58476D1CE4E5B9)
        x ^= x >> np.uint64(27)
        x *= np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
    return x


def _key(global_seed):
    return _mix(np.uint64(global_seed & 0xFFFFFFFFFFFFFFFF) + _GAMMA)


def _check_counter_fields(level, path_index, coarse_step_index, n_draws):
    if not 0 <= level < (1 << _LEVEL_BITS):
        raise ValueError(f"level {level} out of range [0, {1 << _LEVEL_BITS})")
    if not 0 <= path_index < (1 << _PATH_BITS):
        raise ValueError(f"path_index {path_index} exceeds {_PATH_BITS} bits")
    if not 0 <= coarse_step_index < (1 << _STEP_BITS):
        raise ValueError(
            f"coarse_step_index {coarse_step_index} exceeds {_STEP_BITS} bits"
        )
    if n_draws > (1 << _DRAW_BITS):
        raise ValueError(f"too many draws per coarse step ({n_draws})")


def _uniform_from_counter(counter, key):
    # Two mixing rounds decorrelate structured counters and nearby seeds.
    z = _mix(_mix(counter) ^ key)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def sample_increment_block(global_seed, level, path_indices, step_indices,
                           M, D, delta_t, correlation_root=None):
    """Correlated normal increments for a block of paths and coarse steps.

    Returns an array of shape (len(path_indices), len(step_indices), M, D).
    Values depend only on the counter fields, never on the block shape, so
    any batching or worker assignment reproduces the same numbers.
    """
    if M < 1 or D < 1:
        raise ValueError(f"invalid grid dimensions M={M}, D={D}")
    if delta_t <= 0.0:
        raise ValueError(f"delta_t must be positive, got {delta_t}")
    paths = np.asarray(path_indices, dtype=np.uint64)
    steps = np.asarray(step_indices, dtype=np.uint64)
    _check_counter_fields(level, int(paths.max(initial=0)),
                          int(steps.max(initial=0)), M * D)

    draw = np.arange(M * D, dtype=np.uint64)
    counter = (
        (np.uint64(level) << np.uint64(_PATH_BITS + _STEP_BITS + _DRAW_BITS))
        | (paths[:, None, None] << np.uint64(_STEP_BITS + _DRAW_BITS))
        | (steps[None, :, None] << np.uint64(_DRAW_BITS))
        | draw[None, None, :]
    )
    u = _uniform_from_counter(counter, _key(global_seed))
    z = ndtri(u).reshape(len(paths), len(steps), M, D)
    z *= np.sqrt(delta_t)
    if correlation_root is not None:
        root = np.asarray(correlation_root, dtype=np.float64)
        if root.shape != (D, D):
            raise ValueError(f"correlation_root must be {D}x{D}, got {root.shape}")
        if not np.allclose(root, np.eye(D)):
            z = z @ root.T
    return z


def sample_increments(seed, M, D, delta_t, correlation_root=None):
    """The M x D grid of fine increments for one coarse interval."""
    block = sample_increment_block(
        seed.global_seed, seed.level, [seed.path_index],
        [seed.coarse_step_index], M, D, delta_t, correlation_root)
    return IncrementGrid(M=M, D=D, delta_t=delta_t, increments=block[0, 0])


def coarse_increment(grid):
    """Sum of the sub-step increments, component by component.

    Summation runs in ascending sub-step order for bit-reproducibility.
    """
    return _coarse_increment_block(grid.increments[None, None])[0, 0]


def _coarse_increment_block(increments):
    # increments: (..., M, D); left-to-right sum over the M axis.
    out = increments[..., 0, :].copy()
    for m in range(1, increments.shape[-2]):
        out += increments[..., m, :]
    return out


def levy_quadrature(grid):
    """Discrete Levy-area quadrature over the sub-steps of one grid.

    A[j, k] = sum_{m=1}^{M-1} dW_k[m] * (sum_{q<m} dW_j[q]), evaluated with a
    running prefix sum: O(M * D^2) work.
    """
    return _levy_quadrature_block(grid.increments[None, None])[0, 0]


def _levy_quadrature_block(increments):
    # increments: (..., M, D) -> (..., D, D)
    M, D = increments.shape[-2:]
    lead = increments.shape[:-2]
    A = np.zeros(lead + (D, D))
    if M == 1:
        return A
    prefix = np.cumsum(increments, axis=-2)
    # A_jk accumulates prefix_j[m-1] * dW_k[m], ascending m.
    for m in range(1, M):
        A += prefix[..., m - 1, :, None] * increments[..., m, None, :]
    return A


def reverse_substeps(grid):
    """Same grid with the sub-step order reversed (the antithetic driver)."""
    return IncrementGrid(M=grid.M, D=grid.D, delta_t=grid.delta_t,
                         increments=grid.increments[::-1].copy())
