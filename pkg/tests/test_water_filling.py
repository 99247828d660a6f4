"""Water-filling solver vs KKT conditions and brute-force simplex search."""

import math

import numpy as np
import pytest

from decorrlab.gmm import AffineMechanism, GaussianMixtureSpec, map_accuracy_closed_form
from decorrlab.water_filling import solve_water_filling, theory_frontier


def detection_objective(mu, sigma_sq, noise):
    return float((mu**2 / (sigma_sq + noise)).sum())


def simplex_grid_best(mu, sigma_sq, budget, coarse=0.02, fine=1e-3):
    """Two-stage grid search over noise allocations summing to the budget.

    Stage one scans the whole simplex at ``coarse * budget`` resolution;
    stage two refines around the winner at ``fine * budget``.  Returns the
    best objective value found.
    """
    m = mu.size
    assert m == 4, "grid oracle written for 4 coordinates"

    def scan(center, step, width):
        ticks = np.arange(-width, width + step / 2, step)
        best = math.inf
        for a in center[0] + ticks:
            if a < 0 or a > budget:
                continue
            for b in center[1] + ticks:
                if b < 0 or a + b > budget:
                    continue
                for c in center[2] + ticks:
                    d = budget - a - b - c
                    if c < 0 or d < 0:
                        continue
                    val = detection_objective(mu, sigma_sq, np.array([a, b, c, d]))
                    if val < best:
                        best = val
                        best_alloc = np.array([a, b, c, d])
        return best, best_alloc

    center = np.full(4, budget / 4)
    _, alloc = scan(center, coarse * budget, budget)
    best, alloc = scan(alloc, fine * budget, 1.5 * coarse * budget)
    return best, alloc


class TestSolveWaterFilling:
    def test_single_coordinate_takes_budget(self):
        spec = GaussianMixtureSpec(0.5, [1.0], [1.0])
        sol = solve_water_filling(spec, 2.0)
        np.testing.assert_allclose(sol.mech.sigma_p_sq, [2.0], atol=1e-9)
        assert sol.lambda0 == pytest.approx(1.0 / 9.0, abs=1e-9)
        assert np.all(sol.mech.beta == 0.0)

    def test_symmetric_split(self):
        spec = GaussianMixtureSpec(0.5, [1.0, 1.0], [1.0, 1.0])
        sol = solve_water_filling(spec, 2.0)
        np.testing.assert_allclose(sol.mech.sigma_p_sq, [1.0, 1.0], atol=1e-9)

    def test_zero_budget(self):
        spec = GaussianMixtureSpec(0.5, [0.5, 1.5], [1.0, 2.0])
        sol = solve_water_filling(spec, 0.0)
        assert np.all(sol.mech.sigma_p_sq == 0.0)
        assert sol.distortion_used == 0.0
        assert not sol.degenerate

    def test_degenerate_zero_means(self):
        spec = GaussianMixtureSpec(0.5, [0.0, 0.0], [1.0, 1.0])
        sol = solve_water_filling(spec, 5.0)
        assert sol.degenerate
        assert np.all(sol.mech.sigma_p_sq == 0.0)
        assert map_accuracy_closed_form(spec, sol.mech) == 0.5

    def test_negative_budget_rejected(self):
        spec = GaussianMixtureSpec(0.5, [1.0], [1.0])
        with pytest.raises(ValueError):
            solve_water_filling(spec, -1.0)

    def test_budget_met_to_tolerance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            mu = rng.uniform(-2, 2, size=5)
            sigma_sq = rng.uniform(0.2, 3.0, size=5)
            budget = float(rng.uniform(0.01, 50.0))
            spec = GaussianMixtureSpec(0.5, mu, sigma_sq)
            sol = solve_water_filling(spec, budget)
            assert abs(sol.mech.sigma_p_sq.sum() - budget) <= 1e-10 * max(budget, 1.0)

    def test_kkt_stationarity_on_active_coordinates(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            mu = rng.uniform(-2, 2, size=4)
            sigma_sq = rng.uniform(0.2, 2.0, size=4)
            budget = float(rng.uniform(0.1, 20.0))
            spec = GaussianMixtureSpec(0.5, mu, sigma_sq)
            sol = solve_water_filling(spec, budget)
            active = sol.mech.sigma_p_sq > 0
            level = np.abs(mu[active]) / math.sqrt(sol.lambda0)
            residual = level - (sigma_sq[active] + sol.mech.sigma_p_sq[active])
            assert np.all(np.abs(residual) < 1e-8)

    def test_threshold_coordinates_get_no_noise(self):
        # high base variance relative to separation stays noise-free
        spec = GaussianMixtureSpec(0.5, [1.0, 0.05], [1.0, 1.0])
        sol = solve_water_filling(spec, 1.0)
        assert sol.mech.sigma_p_sq[1] == 0.0
        assert sol.mech.sigma_p_sq[0] == pytest.approx(1.0, abs=1e-9)

    def test_matches_simplex_grid_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            mu = rng.uniform(-1.5, 1.5, size=4)
            sigma_sq = rng.uniform(0.3, 2.0, size=4)
            budget = float(rng.uniform(0.5, 10.0))
            spec = GaussianMixtureSpec(0.5, mu, sigma_sq)
            sol = solve_water_filling(spec, budget)
            ours = detection_objective(mu, sigma_sq, sol.mech.sigma_p_sq)
            grid_best, _ = simplex_grid_best(mu, sigma_sq, budget)
            assert ours <= grid_best + 1e-12

    def test_local_budget_transfers_never_help(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            mu = rng.uniform(-2, 2, size=5)
            sigma_sq = rng.uniform(0.3, 2.0, size=5)
            budget = float(rng.uniform(1.0, 10.0))
            spec = GaussianMixtureSpec(0.5, mu, sigma_sq)
            sol = solve_water_filling(spec, budget)
            noise = sol.mech.sigma_p_sq
            base = detection_objective(mu, sigma_sq, noise)
            active = np.flatnonzero(noise > 1e-4 * budget)
            eps = 1e-4 * budget
            for i in active:
                for j in active:
                    if i == j:
                        continue
                    moved = noise.copy()
                    moved[i] -= eps
                    moved[j] += eps
                    if moved[i] < 0:
                        continue
                    assert detection_objective(mu, sigma_sq, moved) >= base - 1e-12


class TestFrontier:
    def test_monotone_and_bounded(self):
        spec = GaussianMixtureSpec(0.75, 0.2 + 0.3 * np.arange(8) / 7, np.ones(8))
        points = theory_frontier(spec, [0, 1, 2, 4, 8, 16, 32, 1000])
        accs = [p.accuracy for p in points]
        assert all(b <= a + 1e-12 for a, b in zip(accs, accs[1:]))
        assert all(a >= 0.75 - 1e-12 for a in accs)

    def test_zero_budget_is_noiseless_detector(self):
        spec = GaussianMixtureSpec(0.6, [0.7, 0.3], [1.0, 1.0])
        point = theory_frontier(spec, [0.0])[0]
        noiseless = map_accuracy_closed_form(spec, AffineMechanism([0.0, 0.0], [0.0, 0.0]))
        assert point.accuracy == noiseless

    def test_symmetric_prior_limit(self):
        spec = GaussianMixtureSpec(0.5, [0.5, 0.5], [1.0, 1.0])
        point = theory_frontier(spec, [1000000.0])[0]
        assert point.accuracy == pytest.approx(0.5, abs=1e-3)

    def test_input_validation(self):
        spec = GaussianMixtureSpec(0.5, [1.0], [1.0])
        with pytest.raises(ValueError):
            theory_frontier(spec, [])
        with pytest.raises(ValueError):
            theory_frontier(spec, [1.0, 0.5])
        with pytest.raises(ValueError):
            theory_frontier(spec, [-1.0, 2.0])
