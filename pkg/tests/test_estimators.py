"""Placebo resampling, bandwidth selection, and difference-in-transports."""

import io

import numpy as np
import pytest

from diftrans.errors import SelectionError, ValidationError
from diftrans.estimators import (
    BandwidthScan,
    PlaceboConfig,
    ScanRow,
    bandwidth_scan,
    before_after,
    d_floor,
    diff_in_transports,
    displacement_floor,
    equal_displacement_curves,
    placebo_cost,
    placebo_cost_matrix,
    quantile_label,
    select_bandwidth,
    select_dstar,
)
from diftrans.pmf import PricePMF
from diftrans.transport import ot_cost

from _oracles import random_pmf


@pytest.fixture
def two_point():
    a = PricePMF(np.array([1, 2]), np.array([0.75, 0.25]), 8)
    b = PricePMF(np.array([1, 2]), np.array([0.25, 0.75]), 4)
    return a, b


class TestBeforeAfter:
    def test_worked_example(self, two_point):
        a, b = two_point
        assert before_after(a, b, 0) == 0.5

    def test_equal_distributions(self, two_point):
        a, _ = two_point
        assert before_after(a, a, 0) == 0.0

    def test_delegates_to_transport(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            a = random_pmf(rng)
            b = random_pmf(rng)
            d = int(rng.integers(0, 500))
            assert before_after(a, b, d) == ot_cost(a, b, d)


class TestPlacebo:
    def test_point_mass_has_no_noise(self):
        base = PricePMF.from_counts([50_000], [10])
        mean, sd, qs = placebo_cost(base, 40, 60, 0, PlaceboConfig(n_sims=50, seed=1))
        assert mean == 0.0 and sd == 0.0
        assert all(q == 0.0 for q in qs)

    def test_free_beyond_span(self):
        base = PricePMF.from_counts([10, 500], [5, 5])
        mean, _, _ = placebo_cost(base, 30, 30, 490, PlaceboConfig(n_sims=50, seed=1))
        assert mean == 0.0

    def test_binomial_oracle_two_point(self):
        # Uniform mass on two far-apart prices: the placebo cost at d=0 is
        # |B1 - B2| / n with B_i binomial(n, 1/2); check against a direct
        # Monte Carlo of that expression.
        n = 100
        base = PricePMF.from_counts([0, 10**6], [1, 1])
        cfg = PlaceboConfig(n_sims=2000, seed=9)
        mean, sd, _ = placebo_cost(base, n, n, 0, cfg)
        rng = np.random.default_rng(123)
        b1 = rng.binomial(n, 0.5, size=200_000)
        b2 = rng.binomial(n, 0.5, size=200_000)
        target = np.abs(b1 - b2).mean() / n
        se = 3 * sd / np.sqrt(cfg.n_sims)
        assert abs(mean - target) <= se
        assert mean == pytest.approx(0.0563, abs=3 * se + 1e-3)

    def test_reproducible_and_thread_invariant(self):
        base = PricePMF.from_counts([1, 5, 9, 40], [3, 4, 2, 1])
        cfg = PlaceboConfig(n_sims=40, seed=77)
        grid = [0, 2, 10]
        m1 = placebo_cost_matrix(base, 50, 80, grid, cfg, threads=1)
        m2 = placebo_cost_matrix(base, 50, 80, grid, cfg, threads=4)
        m3 = placebo_cost_matrix(base, 50, 80, grid, cfg, threads=1)
        assert np.array_equal(m1, m2)
        assert np.array_equal(m1, m3)

    def test_per_replicate_monotone_in_d(self):
        base = PricePMF.from_counts([1, 3, 8, 20, 50], [5, 1, 2, 2, 4])
        grid = [0, 2, 5, 12, 30, 49]
        matrix = placebo_cost_matrix(base, 60, 60, grid, PlaceboConfig(n_sims=60, seed=5))
        assert np.all(np.diff(matrix, axis=1) <= 1e-12)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            PlaceboConfig(n_sims=0)
        with pytest.raises(ValidationError):
            PlaceboConfig(quantiles=(0.0, 0.5))


class TestSelectBandwidth:
    def test_point_mass_selects_grid_minimum(self):
        base = PricePMF.from_counts([100], [5])
        cfg = PlaceboConfig(n_sims=20, seed=0)
        assert select_bandwidth(base, 10, 10, [3, 7, 11], cfg) == 3

    def test_single_span_plus_one_grid(self):
        base = PricePMF.from_counts([0, 200], [5, 5])
        cfg = PlaceboConfig(n_sims=20, seed=0)
        assert select_bandwidth(base, 30, 30, [201], cfg) == 201

    def test_tighter_threshold_weakly_raises_d(self):
        base = PricePMF.from_counts([0, 100_000], [12, 8])
        cfg = PlaceboConfig(n_sims=300, seed=3)
        grid = list(range(0, 120_001, 10_000))
        loose = select_bandwidth(base, 40, 40, grid, cfg, threshold=0.005)
        tight = select_bandwidth(base, 40, 40, grid, cfg, threshold=0.0005)
        assert tight >= loose

    def test_failure_lists_minimum(self):
        base = PricePMF.from_counts([0, 100_000], [1, 1])
        cfg = PlaceboConfig(n_sims=50, seed=0)
        with pytest.raises(SelectionError, match="minimum placebo mean"):
            select_bandwidth(base, 10, 10, [0, 1], cfg, threshold=1e-9)

    def test_quantile_rule_option(self):
        base = PricePMF.from_counts([100], [5])
        cfg = PlaceboConfig(n_sims=20, seed=0)
        assert select_bandwidth(base, 10, 10, [2], cfg, use_quantile=0.975) == 2


class TestDifferenceInTransports:
    def test_shared_pair_is_nonpositive(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            a = random_pmf(rng, max_points=10)
            b = random_pmf(rng, max_points=10)
            d = int(rng.integers(0, 600))
            assert diff_in_transports(a, b, a, b, d) <= 0.0

    def test_degenerate_control(self, two_point):
        a, b = two_point
        c = PricePMF.from_counts([7], [3])
        assert diff_in_transports(a, b, c, c, 0) == 0.5

    def test_triangle_rearrangement_on_random_draws(self):
        # With the control pre-distribution equal to the treated one, the
        # estimate never exceeds the treated-vs-control-post displacement.
        rng = np.random.default_rng(9)
        for _ in range(200):
            a = random_pmf(rng, max_points=12)
            b = random_pmf(rng, max_points=12)
            cb = random_pmf(rng, max_points=12)
            d = int(rng.integers(0, 600))
            assert diff_in_transports(a, b, a, cb, d) <= ot_cost(b, cb, d) + 1e-10

    def test_reported_verbatim_when_negative(self):
        near = PricePMF.from_counts([0, 1], [1, 1])
        far = PricePMF.from_counts([1000, 2000], [1, 1])
        value = diff_in_transports(near, near, near, far, 0)
        assert value == -1.0


def scan_from_rows(rows):
    return BandwidthScan(tuple(ScanRow(*r) for r in rows), (0.5,))


class TestSelectDstar:
    def base_row(self, d, dit):
        return (d, 0.5, 0.0, 0.0, (0.0,), dit)

    def test_single_admissible_row(self):
        scan = scan_from_rows([self.base_row(5, 0.2)])
        assert select_dstar(scan, 0) == (5, 0.2)

    def test_reference_style_rows(self):
        scan = scan_from_rows(
            [
                self.base_row(7000, 0.1187),
                self.base_row(10000, 0.1015),
                self.base_row(15000, 0.0683),
            ]
        )
        assert select_dstar(scan, 7000) == (7000, 0.1187)

    def test_tie_breaks_to_smaller_d(self):
        scan = scan_from_rows([self.base_row(d, 0.1) for d in (2, 4, 8)])
        assert select_dstar(scan, 0) == (2, 0.1)

    def test_invariant_to_rows_below_floor(self):
        high = [self.base_row(10, 0.3), self.base_row(20, 0.1)]
        padded = [self.base_row(1, 0.9)] + high
        assert select_dstar(scan_from_rows(high), 10) == select_dstar(
            scan_from_rows(padded), 10
        )

    def test_empty_admissible_set(self):
        scan = scan_from_rows([self.base_row(5, 0.2)])
        with pytest.raises(SelectionError):
            select_dstar(scan, 6)

    def test_missing_dit_column(self):
        scan = scan_from_rows([self.base_row(5, None)])
        with pytest.raises(ValidationError):
            select_dstar(scan, 0)


class TestFloors:
    def test_d_floor_examples(self):
        assert d_floor(7000, 2000) == 7000
        assert d_floor(0, 0) == 0
        assert d_floor(3000, 9000) == 9000

    def test_displacement_floor(self):
        curves = [(0, 0.5, 0.2, 0.3), (10, 0.2, 0.19, 0.01), (20, 0.1, 0.099, 0.001)]
        assert displacement_floor(curves, tau=0.02) == 10
        with pytest.raises(SelectionError):
            displacement_floor(curves, tau=1e-4)


class TestEqualDisplacement:
    def test_identical_pairs_difference_zero(self):
        rng = np.random.default_rng(10)
        a = random_pmf(rng)
        b = random_pmf(rng)
        rows = equal_displacement_curves(a, b, a, b, [0, 5, 50])
        assert all(diff == 0.0 for _, _, _, diff in rows)

    def test_degenerate_second_pair(self):
        rng = np.random.default_rng(11)
        a = random_pmf(rng)
        b = random_pmf(rng)
        c = PricePMF.from_counts([3], [1])
        rows = equal_displacement_curves(a, b, c, c, [0, 5, 50])
        for d, cost_a, cost_b, diff in rows:
            assert cost_b == 0.0
            assert diff == cost_a == ot_cost(a, b, d)

    def test_columns_nonincreasing(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            rows = equal_displacement_curves(
                random_pmf(rng, max_points=10),
                random_pmf(rng, max_points=10),
                random_pmf(rng, max_points=10),
                random_pmf(rng, max_points=10),
                [0, 2, 8, 40, 200, 999],
            )
            costs_a = [r[1] for r in rows]
            costs_b = [r[2] for r in rows]
            assert all(y <= x + 1e-12 for x, y in zip(costs_a, costs_a[1:]))
            assert all(y <= x + 1e-12 for x, y in zip(costs_b, costs_b[1:]))


class TestScan:
    def test_scan_rows_and_csv(self, two_point):
        a, b = two_point
        cfg = PlaceboConfig(n_sims=30, seed=2)
        scan = bandwidth_scan(a, b, [0, 1], cfg, control=(a, b))
        assert [row.d for row in scan.rows] == [0, 1]
        assert scan.rows[0].real_cost == 0.5
        assert scan.rows[0].dit_value is not None
        buf = io.StringIO()
        scan.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "d,real_cost,placebo_mean,placebo_sd,q025,q25,q50,q75,q975,dit"
        assert len(lines) == 3

    def test_scan_is_deterministic(self, two_point):
        a, b = two_point
        cfg = PlaceboConfig(n_sims=25, seed=4)
        s1 = bandwidth_scan(a, b, [0, 1], cfg, threads=1)
        s2 = bandwidth_scan(a, b, [0, 1], cfg, threads=3)
        for r1, r2 in zip(s1.rows, s2.rows):
            assert r1 == r2

    def test_rejects_unsorted_grid(self, two_point):
        a, b = two_point
        with pytest.raises(ValidationError):
            bandwidth_scan(a, b, [5, 1], PlaceboConfig(n_sims=2, seed=0))

    def test_quantile_labels(self):
        assert quantile_label(0.025) == "q025"
        assert quantile_label(0.25) == "q25"
        assert quantile_label(0.5) == "q50"
        assert quantile_label(0.75) == "q75"
        assert quantile_label(0.975) == "q975"
        assert quantile_label(0.1) == "q10"
