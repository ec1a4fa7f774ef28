import math

import numpy as np
import pytest

from mlmcsde.brownian import IncrementGrid, PathSeed, sample_increment_block
from mlmcsde.linearize import augment
from mlmcsde.models import (
    SdeSystem,
    gbm_system,
    heston_system,
    linear,
    quadratic,
    sin_of_component,
)
from mlmcsde.schemes import (
    SCHEMES,
    ConfigurationError,
    approx_milstein_coarse_step,
    euler_step,
    evolve_antithetic_coupled,
    evolve_antithetic_coupled_batch,
    evolve_approx_milstein_coupled_batch,
    evolve_base_level,
    evolve_euler_coupled,
    evolve_euler_coupled_batch,
    evolve_milstein_coupled_batch,
    milstein_fine_step,
)


def _constant_system(d, D, b_matrix, drift_vec=None):
    b_matrix = np.asarray(b_matrix, dtype=np.float64)
    a = np.zeros(d) if drift_vec is None else np.asarray(drift_vec)
    return SdeSystem(
        d=d, D=D,
        drift=lambda s, t: np.broadcast_to(a, s.shape).copy(),
        diffusion=lambda s, t: np.broadcast_to(b_matrix, s.shape[:-1] + (d, D)).copy(),
        h_tensor=lambda s, t: np.zeros(s.shape[:-1] + (d, D, D)),
        initial_state=np.ones(d), horizon=0.125)


class TestSteps:
    def test_euler_zero_coefficients(self):
        sys_ = _constant_system(2, 2, np.zeros((2, 2)))
        s = np.array([0.4, -1.2])
        np.testing.assert_array_equal(
            euler_step(sys_, s, 0.0, 0.1, np.array([0.3, 0.3])), s)

    def test_euler_deterministic_gbm(self):
        sys_ = gbm_system(mu=1.0, sigma=0.0)
        out = euler_step(sys_, np.array([1.0]), 0.0, 0.1, np.array([0.2]))
        assert out[0] == pytest.approx(1.1, rel=1e-12)

    def test_euler_hand_value(self):
        sys_ = gbm_system(mu=1.0, sigma=1.0)
        out = euler_step(sys_, np.array([1.0]), 0.0, 0.1, np.array([0.2]))
        assert out[0] == pytest.approx(1.3, rel=1e-10)

    def test_milstein_hand_value(self):
        sys_ = gbm_system(mu=1.0, sigma=1.0)
        out = milstein_fine_step(sys_, np.array([1.0]), 0.0, 0.1,
                                 np.array([0.2]))
        # 1 + 0.1 + 0.2 + 0.5 * (0.04 - 0.1)
        assert out[0] == pytest.approx(1.27, rel=1e-10)

    def test_milstein_zero_increment(self):
        sys_ = gbm_system(mu=0.0, sigma=1.0)
        out = milstein_fine_step(sys_, np.array([1.0]), 0.0, 0.1,
                                 np.array([0.0]))
        assert out[0] == pytest.approx(1.0 + 0.5 * (0.0 - 0.1), rel=1e-12)

    def test_milstein_correction_has_zero_mean(self):
        sys_ = gbm_system(mu=1.0, sigma=1.0)
        h = 0.1
        rng = np.random.default_rng(7)
        dW = rng.normal(0.0, math.sqrt(h), size=(10**6, 1))
        s = np.ones((10**6, 1))
        term = milstein_fine_step(sys_, s, 0.0, h, dW) - euler_step(
            sys_, s, 0.0, h, dW)
        se = term.std(ddof=1) / math.sqrt(len(term))
        assert abs(term.mean()) <= 3 * se

    def test_approx_coarse_hand_value_d1(self):
        sys_ = gbm_system(mu=1.0, sigma=1.0)
        grid = IncrementGrid(M=2, D=1, delta_t=0.1,
                             increments=np.array([[0.1], [0.1]]))
        out = approx_milstein_coarse_step(sys_, np.array([1.0]),
                                          np.array([1.0]), 0.0, 0.2, grid)
        # 1 + 0.2 + 0.2 + 0.5 * (0.04 - 0.2); antisymmetric correction is 0
        assert out[0] == pytest.approx(1.32, rel=1e-10)

    def test_approx_coarse_reduces_to_fine_at_m1(self):
        sys_ = heston_system()
        state = np.array([0.6, 1.1])
        dW = np.array([0.07, -0.04])
        grid = IncrementGrid(M=1, D=2, delta_t=0.05, increments=dW[None, :])
        coarse = approx_milstein_coarse_step(sys_, state, state, 0.0, 0.05,
                                             grid)
        fine = milstein_fine_step(sys_, state, 0.0, 0.05, dW)
        np.testing.assert_allclose(coarse, fine, rtol=1e-14)

    def test_approx_coarse_antisymmetric_correction(self):
        # constant-coefficient system with an artificial constant h-tensor,
        # driven by the grid whose quadrature is A12=1, A21=0
        h_const = np.arange(8, dtype=np.float64).reshape(2, 2, 2) / 10.0
        sys_ = SdeSystem(
            d=2, D=2,
            drift=lambda s, t: np.zeros_like(s),
            diffusion=lambda s, t: np.broadcast_to(np.eye(2), s.shape[:-1] + (2, 2)),
            h_tensor=lambda s, t: np.broadcast_to(h_const, s.shape[:-1] + (2, 2, 2)),
            initial_state=np.zeros(2), horizon=1.0)
        grid = IncrementGrid(M=2, D=2, delta_t=0.5,
                             increments=np.array([[1.0, 0.0], [0.0, 1.0]]))
        state = np.zeros(2)
        out = approx_milstein_coarse_step(sys_, state, state, 0.0, 1.0, grid)
        dW = np.array([1.0, 1.0])
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        q = np.outer(dW, dW) - np.eye(2) * 1.0 - A + A.T
        expected = dW + np.einsum("ijk,jk->i", h_const, q)
        np.testing.assert_allclose(out, expected, rtol=1e-12)


class TestCoupledEvolution:
    def test_additive_noise_couples_exactly(self):
        # constant diffusion, zero drift: fine and coarse terminals both
        # equal S0 + sum of all increments
        sys_ = _constant_system(2, 2, [[1.0, 0.0], [0.3, 0.7]])
        pay = linear(1, d=2)
        r = evolve_euler_coupled_batch(sys_, pay, 3, 2, 5, np.arange(50))
        np.testing.assert_allclose(r.fine_terminal, r.coarse_terminal,
                                   rtol=1e-12)

    def test_deterministic_difference_shrinks_linearly(self):
        sys_ = gbm_system(mu=1.0, sigma=0.0)
        pay = linear(1, d=1)
        diffs = []
        for level in (3, 4, 5):
            s = evolve_euler_coupled(sys_, pay, level, 2,
                                     PathSeed(0, level, 0))
            diffs.append(s.fine_payoff - s.coarse_payoff)
        assert diffs[0] / diffs[1] == pytest.approx(2.0, rel=0.1)
        assert diffs[1] / diffs[2] == pytest.approx(2.0, rel=0.05)

    def test_antithetic_deterministic_paths_coincide(self):
        sys_ = gbm_system(mu=1.0, sigma=0.0)
        pay = linear(1, d=1)
        r = evolve_antithetic_coupled_batch(sys_, pay, 2, 4, 0, np.arange(8))
        np.testing.assert_array_equal(r.fine_terminal, r.aux_terminal)

    def test_antithetic_matches_manual_reconstruction(self):
        sys_ = heston_system()
        pay = sin_of_component(2)
        level, M, seed = 2, 3, 9
        paths = np.arange(6)
        r = evolve_antithetic_coupled_batch(sys_, pay, level, M, seed, paths)

        delta_t = sys_.horizon * M ** (-level)
        n_coarse = M ** (level - 1)
        incs = sample_increment_block(seed, level, paths,
                                      np.arange(n_coarse), M, 2, delta_t)
        Sf = np.tile(sys_.initial_state, (len(paths), 1))
        Sa = Sf.copy()
        Sc = Sf.copy()
        for n in range(n_coarse):
            tn = n * M * delta_t
            for m in range(M):
                Sf = milstein_fine_step(sys_, Sf, tn + m * delta_t, delta_t,
                                        incs[:, n, m])
                Sa = milstein_fine_step(sys_, Sa, tn + m * delta_t, delta_t,
                                        incs[:, n, M - 1 - m])
            Sc = milstein_fine_step(sys_, Sc, tn, M * delta_t,
                                    incs[:, n].sum(axis=1))
        np.testing.assert_allclose(r.fine_terminal, Sf, rtol=1e-12)
        np.testing.assert_allclose(r.aux_terminal, Sa, rtol=1e-12)
        np.testing.assert_allclose(r.coarse_terminal, Sc, rtol=1e-12)
        np.testing.assert_allclose(
            r.fine_payoff, 0.5 * (pay.value(Sf) + pay.value(Sa)), rtol=1e-12)

    def test_d1_star_and_coarse_paths_coincide(self):
        # with scalar noise the antisymmetric correction vanishes, so the
        # starred and coarse recursions are identical from the shared start
        aug = augment(gbm_system(mu=1.0, sigma=0.5), quadratic(1, 1, d=1))
        r = evolve_approx_milstein_coupled_batch(
            aug.system, aug.selector, 3, 2, 4, np.arange(100))
        np.testing.assert_allclose(r.coarse_terminal, r.aux_terminal,
                                   rtol=1e-12)

    def test_strong_coupling_slope(self):
        aug = augment(heston_system(), sin_of_component(2))
        gaps = []
        for level in range(1, 5):
            r = evolve_approx_milstein_coupled_batch(
                aug.system, aug.selector, level, 2, 11, np.arange(20000))
            gaps.append(np.sum((r.fine_terminal - r.coarse_terminal) ** 2,
                               axis=1).mean())
        x = np.log([2.0 ** -l for l in range(1, 5)])
        slope = np.polyfit(x, np.log(gaps), 1)[0]
        assert 1.6 <= slope <= 2.4

    def test_weak_closeness_of_star_and_coarse(self):
        # the mean gap halves with the coarse step, up to sampling noise
        aug = augment(heston_system(eta=1.0, T=0.5), sin_of_component(2))
        gaps, ses = [], []
        for level in (1, 2):
            r = evolve_approx_milstein_coupled_batch(
                aug.system, aug.selector, level, 2, 12, np.arange(100000))
            d = aug.selector.value(r.coarse_terminal) - aug.selector.value(
                r.aux_terminal)
            gaps.append(d.mean())
            ses.append(d.std(ddof=1) / math.sqrt(len(d)))
        assert abs(gaps[1]) <= 0.5 * abs(gaps[0]) + 3 * (ses[0] / 2 + ses[1])


class TestValidationAndCost:
    def test_milstein_rejects_vector_noise(self):
        with pytest.raises(ConfigurationError):
            evolve_milstein_coupled_batch(heston_system(), sin_of_component(2),
                                          1, 2, 0, np.arange(2))

    def test_approx_milstein_rejects_nonlinear_payoff(self):
        with pytest.raises(ConfigurationError):
            evolve_approx_milstein_coupled_batch(
                heston_system(), sin_of_component(2), 1, 2, 0, np.arange(2))

    def test_coupled_level_must_be_positive(self):
        with pytest.raises(ValueError):
            evolve_euler_coupled_batch(heston_system(), sin_of_component(2),
                                       0, 2, 0, np.arange(2))

    @pytest.mark.parametrize("scheme,expected", [
        ("euler", 9 + 3), ("antithetic", 18 + 3), ("approx-milstein", 9 + 6),
    ])
    def test_steps_taken_rule(self, scheme, expected):
        descr = SCHEMES[scheme]
        assert descr.fine_cost * 3**2 + descr.coarse_cost * 3 == expected
        if scheme == "euler":
            s = evolve_euler_coupled(heston_system(), sin_of_component(2), 2,
                                     3, PathSeed(0, 2, 0))
            assert s.steps_taken == expected
        if scheme == "antithetic":
            s = evolve_antithetic_coupled(heston_system(), sin_of_component(2),
                                          2, 3, PathSeed(0, 2, 0))
            assert s.steps_taken == expected

    def test_base_level_sample(self):
        sys_ = gbm_system(mu=1.0, sigma=0.0)
        s = evolve_base_level(sys_, linear(1, d=1), 2, PathSeed(0, 0, 0))
        assert s.coarse_payoff is None
        assert s.steps_taken == 1
        assert s.fine_payoff == pytest.approx(1.0 + 1.0 * 0.125, rel=1e-12)

    def test_base_level_linear_payoff_structure(self):
        # sample = S_m0 + a_m T + sum_j b_mj W_j(T), checked against the
        # increments the counter generator produced
        sys_ = heston_system()
        pay = linear(2, d=2)
        from mlmcsde.schemes import evolve_base_level_batch
        paths = np.arange(1000)
        r = evolve_base_level_batch(sys_, pay, 2, 3, paths)
        incs = sample_increment_block(3, 0, paths, [0], 1, 2, 0.125)
        W = incs[:, 0, 0]
        b = sys_.diffusion(sys_.initial_state, 0.0)
        expected = 1.0 + 1.0 * 0.125 + b[1, 1] * W[:, 1]
        np.testing.assert_allclose(r.fine_payoff, expected, rtol=1e-12)
