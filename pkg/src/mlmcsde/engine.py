"""Adaptive MLMC driver: level management, streaming statistics, optimal
sample allocation, convergence testing, and weighted-step cost accounting.

Path generation is embarrassingly parallel.  Paths are processed in
fixed-size chunks whose boundaries depend only on the configuration, and
chunk statistics merge in ascending path order, so results are identical for
any worker count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linearize import AugmentedSystem, augment, base_level_expectation
from .schemes import (
    SCHEMES,
    ConfigurationError,
    evolve_base_level_batch,
    evolve_coupled_batch,
)

__all__ = [
    "LevelStats",
    "MlmcConfig",
    "MlmcResult",
    "optimal_sample_sizes",
    "initial_samples",
    "converged",
    "run",
    "total_cost",
]

# Upper bound on values held in flight per chunk; keeps the per-chunk
# increment block ~100 MB while leaving chunk boundaries config-determined.
_CHUNK_VALUE_BUDGET = 2**23
_MAX_CHUNK = 2**14


@dataclass
class LevelStats:
    """Streaming count/mean/variance of one level's difference samples.

    Welford-style accumulation with pairwise merging, so chunks computed on
    different workers combine to the same result as a single pass.
    """

    level: int
    h: float
    n: int = 0
    mean: float = 0.0
    _m2: float = 0.0
    step_cost: int = 0

    @property
    def variance(self):
        """Unbiased sample variance; undefined below two samples."""
        if self.n < 2:
            raise ValueError(f"level {self.level} has {self.n} samples; "
                             "variance needs at least 2")
        return self._m2 / (self.n - 1)

    def push(self, samples, step_cost=0):
        samples = np.asarray(samples, dtype=np.float64)
        self.merge_moments(len(samples), float(samples.mean()) if len(samples)
                           else 0.0,
                           float(((samples - samples.mean()) ** 2).sum())
                           if len(samples) else 0.0)
        self.step_cost += step_cost

    def merge_moments(self, n, mean, m2):
        if n == 0:
            return
        tot = self.n + n
        delta = mean - self.mean
        self.mean += delta * n / tot
        self._m2 += m2 + delta * delta * self.n * n / tot
        self.n = tot

    def merge(self, other):
        self.merge_moments(other.n, other.mean, other._m2)
        self.step_cost += other.step_cost
        return self


@dataclass
class MlmcConfig:
    """Target accuracy and scheme selection for one adaptive run.

    ito_linearize=None resolves per scheme: approx-milstein implies it.
    Setting it to False with approx-milstein keeps the (mandatory) payoff
    augmentation but estimates the base level by sampling, which is the
    meaningful "without linearization" comparison for that scheme.
    """

    epsilon: float
    M: int = 2
    scheme: str = "euler"
    ito_linearize: Optional[bool] = None
    initial_samples_L1: int = 400
    max_level: int = 12
    global_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ConfigurationError("epsilon must be positive")
        if self.M < 2:
            raise ConfigurationError("refinement factor M must be >= 2")
        if self.max_level < 2:
            raise ConfigurationError("max_level must be >= 2")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(
                f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEMES)}")


@dataclass
class MlmcResult:
    """Final estimate with per-level diagnostics."""

    estimate: float
    levels: list
    total_cost: float
    converged: bool
    bias_proxy: float
    base_expectation: Optional[float] = None
    inner_dimension: int = 0
    augmented: bool = False      # solved the (d+1)-dimensional system
    exact_base: bool = False     # level 0 evaluated in closed form
    scheme: str = ""
    M: int = 2
    epsilon: float = 0.0


def optimal_sample_sizes(stats, epsilon):
    """Lagrange-optimal per-level counts, ceiling rounded.

    N_l = ceil((2 / eps^2) sqrt(V_l h_l) sum_over_present sqrt(V_l / h_l)).
    The sum runs over exactly the levels present in ``stats``.
    """
    if epsilon <= 0.0:
        raise ConfigurationError("epsilon must be positive")
    V = np.array([s.variance for s in stats])
    h = np.array([s.h for s in stats])
    total = np.sqrt(V / h).sum()
    raw = 2.0 / epsilon**2 * np.sqrt(V * h) * total
    return [int(math.ceil(x)) if x > 0 else 2 for x in raw]


def initial_samples(L, M, beta, previous_N, default=400):
    """First-pass sample count for a newly opened level.

    Level 1 gets the configured default; deeper levels scale the previous
    level's count by M^(-(beta + 1) / 2), never below 2.
    """
    if L < 1:
        raise ValueError("initial_samples applies to levels >= 1")
    if L == 1:
        return default
    return max(2, math.ceil(M ** (-(beta + 1.0) / 2.0) * previous_N))


def converged(Y_L, Y_Lm1, M, epsilon, L):
    """Bias proxy test: both of the two finest levels must look converged."""
    if L < 2:
        return False
    return max(abs(Y_L), abs(Y_Lm1) / M) <= epsilon / math.sqrt(2.0)


def _chunk_size(level, M, D):
    if level == 0:
        values = D
    else:
        values = M**level * D
    return max(64, min(_MAX_CHUNK, _CHUNK_VALUE_BUDGET // values))


def _chunk_ranges(start, count, chunk):
    # Chunk boundaries align to absolute path indices so top-ups reproduce
    # the same per-chunk partition regardless of request history.
    edges = []
    lo = start
    while lo < start + count:
        hi = min(start + count, (lo // chunk + 1) * chunk)
        edges.append((lo, hi))
        lo = hi
    return edges


class _Sampler:
    """Generates level samples and merges them into LevelStats."""

    def __init__(self, system, payoff, config):
        self.system = system
        self.payoff = payoff
        self.config = config
        self.next_path = {}

    def _evolve(self, level, lo, hi):
        paths = np.arange(lo, hi)
        c = self.config
        if level == 0:
            r = evolve_base_level_batch(self.system, self.payoff, c.M,
                                        c.global_seed, paths, c.scheme)
            diffs = r.fine_payoff
        else:
            r = evolve_coupled_batch(c.scheme, self.system, self.payoff,
                                     level, c.M, c.global_seed, paths)
            diffs = r.fine_payoff - r.coarse_payoff
        n = len(diffs)
        mean = float(diffs.mean())
        m2 = float(((diffs - mean) ** 2).sum())
        return n, mean, m2, n * r.steps_per_path

    def extend(self, stats, target_n):
        """Top a level's statistics up to target_n samples."""
        level = stats.level
        c = self.config
        start = self.next_path.get(level, 0)
        add = target_n - start
        if add <= 0:
            return
        ranges = _chunk_ranges(start, add,
                               _chunk_size(level, c.M, self.system.D))
        if c.threads > 1 and len(ranges) > 1:
            with ThreadPoolExecutor(max_workers=c.threads) as pool:
                results = list(pool.map(
                    lambda r: self._evolve(level, *r), ranges))
        else:
            results = [self._evolve(level, lo, hi) for lo, hi in ranges]
        for n, mean, m2, cost in results:
            stats.merge_moments(n, mean, m2)
            stats.step_cost += cost
        self.next_path[level] = target_n


def _dimension_factor(inner_d, ito_linearized):
    return (inner_d + 1) / inner_d if ito_linearized else 1.0


def total_cost(result, scheme=None, d=None):
    """Weighted step count from the per-level table.

    K = w * sum_l N_l (c_f / h_l + c_c / h_{l-1}), with level 0 charging
    N_0 / h_0 only, and w = (d+1)/d when the run solved the augmented
    system.  An exact base level contributes nothing.
    """
    descr = SCHEMES[scheme or result.scheme]
    d = d or result.inner_dimension
    w = _dimension_factor(d, result.augmented)
    K = 0.0
    for s in result.levels:
        if s.level == 0:
            if result.exact_base:
                continue  # N_0 = 1 at zero stochastic cost
            K += s.n / s.h
        else:
            h_coarse = s.h * result.M
            K += s.n * (descr.fine_cost / s.h + descr.coarse_cost / h_coarse)
    return w * K


def run(system, payoff, config):
    """The adaptive MLMC algorithm.

    Opens levels one at a time, re-optimizes all sample counts whenever the
    variance table changes, and stops when the two finest level means pass
    the bias test (or max_level is hit, which flags non-convergence).
    """
    c = config
    descr = SCHEMES[c.scheme]
    beta = descr.beta
    if descr.name == "antithetic" and payoff.smoothness == "Lipschitz":
        beta = 1.5  # kinked payoffs: variance decays like h^(3/2)

    augmented = bool(c.ito_linearize) or c.scheme == "approx-milstein"
    exact_base = c.ito_linearize if c.ito_linearize is not None \
        else c.scheme == "approx-milstein"
    inner_d = system.d
    base_exp = None
    if augmented:
        aug = system if isinstance(system, AugmentedSystem) else \
            augment(system, payoff)
        if exact_base:
            base_exp = base_level_expectation(aug)
        system, payoff = aug.system, aug.selector

    T = system.horizon
    sampler = _Sampler(system, payoff, c)
    stats = {}

    def open_level(l, n0):
        stats[l] = LevelStats(level=l, h=T * c.M ** (-l))
        sampler.extend(stats[l], n0)

    if not exact_base:
        # the base level has no variance-scaling prior; reuse the L=1 default
        open_level(0, c.initial_samples_L1)

    L = 1
    open_level(1, initial_samples(1, c.M, beta, 0, c.initial_samples_L1))
    is_converged = False
    while True:
        # Re-optimize and top up until the allocation is self-consistent;
        # keeps the realized sampling error inside the eps^2/2 budget.
        for _ in range(20):
            levels = [stats[l] for l in sorted(stats)]
            targets = optimal_sample_sizes(levels, c.epsilon)
            deficit = False
            for s, n_opt in zip(levels, targets):
                if s.n < max(2, n_opt):
                    deficit = True
                    sampler.extend(s, max(2, n_opt))
            if not deficit:
                break
        if L >= 2:
            bias = max(abs(stats[L].mean), abs(stats[L - 1].mean) / c.M)
            if converged(stats[L].mean, stats[L - 1].mean, c.M, c.epsilon, L):
                is_converged = True
                break
        else:
            bias = math.inf
        if L >= c.max_level:
            break
        L += 1
        open_level(L, initial_samples(L, c.M, beta, stats[L - 1].n,
                                      c.initial_samples_L1))

    estimate = sum(stats[l].mean for l in sorted(stats))
    if exact_base:
        estimate += base_exp
        stats[0] = LevelStats(level=0, h=T, n=1, mean=base_exp)
    result = MlmcResult(
        estimate=estimate, levels=[stats[l] for l in sorted(stats)],
        total_cost=0.0, converged=is_converged, bias_proxy=bias,
        base_expectation=base_exp, inner_dimension=inner_d,
        augmented=augmented, exact_base=exact_base,
        scheme=c.scheme, M=c.M, epsilon=c.epsilon)
    result.total_cost = total_cost(result)
    return result
