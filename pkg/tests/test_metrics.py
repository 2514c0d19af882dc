import math

import numpy as np
import pytest

from resonator.activation import ActivationSpec
from resonator.metrics import (
    EntropyConfig,
    InputHistogram,
    average_state_entropy,
    collect_histogram,
    instantaneous_state_entropy,
    ise_series,
    pointwise_curvature,
    weighted_curvature,
    write_ise_csv,
)


def _gauss(d, s):
    return math.exp(-d * d / (2 * s * s)) / (math.sqrt(2 * math.pi) * s)


def parabola(x):
    # Test-only surrogate with textbook curvature 1 at its vertex.
    return 0.5 * np.square(x)


class TestHistogram:
    def test_constant_samples_fill_one_bin(self):
        h = collect_histogram(np.zeros(50), 10)
        assert h.total == 50
        assert np.count_nonzero(h.counts) == 1
        assert h.bin_edges[0] < 0 < h.bin_edges[-1]

    def test_uniform_grid_is_flat(self):
        h = collect_histogram(np.linspace(-1, 1, 1000), 10)
        assert np.all(np.abs(h.counts - 100) <= 1)
        assert h.bin_edges[0] == -1 and h.bin_edges[-1] == 1

    def test_mass_is_conserved(self):
        h = collect_histogram(np.random.default_rng(0).normal(size=9999), 37)
        assert h.probabilities.sum() == pytest.approx(1.0, abs=1e-15)
        assert h.counts.sum() == h.total

    @pytest.mark.parametrize("args", [(np.array([]), 10), (np.ones(4), 1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            collect_histogram(*args)

    def test_invariants_checked(self):
        with pytest.raises(ValueError):
            InputHistogram(np.array([0.0, 0.0, 1.0]), np.array([1, 1]), 2)
        with pytest.raises(ValueError):
            InputHistogram(np.array([0.0, 1.0]), np.array([3]), 2)

    def test_csv(self, tmp_path):
        h = collect_histogram(np.arange(10.0), 2)
        h.to_csv(tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines == ["bin_center,probability", "2.25,0.5", "6.75,0.5"]


class TestCurvature:
    def test_linear_branch(self):
        assert pointwise_curvature(ActivationSpec("leaky_relu"), 10.0) == pytest.approx(0.0, abs=1e-5)

    def test_tanh_inflection(self):
        assert pointwise_curvature(ActivationSpec("shifted_tanh", bias=0.0), 0.0) == pytest.approx(0.0, abs=1e-4)

    def test_parabola_vertex(self):
        assert pointwise_curvature(parabola, 0.0) == pytest.approx(1.0, abs=1e-5)

    def test_parabola_off_vertex(self):
        x = 0.7
        assert pointwise_curvature(parabola, x) == pytest.approx(1.0 / (1.0 + x * x) ** 1.5, abs=1e-5)

    def test_linear_activation_has_zero_weighted_curvature(self):
        h = collect_histogram(np.random.default_rng(1).uniform(0.5, 4.5, 1000), 50)
        assert weighted_curvature(ActivationSpec("leaky_relu"), h) == pytest.approx(0.0, abs=1e-5)

    def test_point_mass(self):
        h = InputHistogram(np.array([0.2, 0.4, 0.6]), np.array([0, 7]), 7)
        spec = ActivationSpec("swish", beta=0.6)
        assert weighted_curvature(spec, h) == pytest.approx(float(pointwise_curvature(spec, 0.5)), rel=1e-12)

    def test_is_nonnegative(self):
        h = collect_histogram(np.random.default_rng(2).normal(0, 2, 5000), 200)
        for spec in (ActivationSpec("gelu"), ActivationSpec("mishra"), ActivationSpec("hard_tanh")):
            assert weighted_curvature(spec, h) >= 0.0


class TestEntropy:
    def test_all_equal_closed_form(self):
        s = 0.37
        assert instantaneous_state_entropy(np.full(25, -1.2), sigma=s) == pytest.approx(math.log(math.sqrt(2 * math.pi) * s), abs=1e-10)

    def test_all_equal_uses_floor(self):
        assert instantaneous_state_entropy(np.full(5, 2.0)) == pytest.approx(math.log(math.sqrt(2 * math.pi) * 1e-12), abs=1e-9)

    def test_two_component_hand_sum(self):
        d, s = 0.8, 0.5
        expected = -math.log(0.25 * (2 * _gauss(0, s) + 2 * _gauss(d, s)))
        assert instantaneous_state_entropy([0.0, d], sigma=s) == pytest.approx(expected, abs=1e-12)

    def test_default_width_is_sample_std(self):
        r = np.array([0.0, 1.0, 3.0])
        s = 0.3 * np.std(r, ddof=1)
        assert instantaneous_state_entropy(r) == pytest.approx(instantaneous_state_entropy(r, sigma=s), abs=1e-14)

    @pytest.mark.parametrize("c", [0.01, 0.5, 7.0])
    def test_scaling_identity(self, c):
        r = np.random.default_rng(3).normal(size=40)
        assert instantaneous_state_entropy(c * r) == pytest.approx(instantaneous_state_entropy(r) + math.log(c), abs=1e-8)

    def test_permutation_invariance(self):
        r = np.random.default_rng(4).normal(size=30)
        perm = np.random.default_rng(5).permutation(30)
        assert instantaneous_state_entropy(r[perm]) == pytest.approx(instantaneous_state_entropy(r), abs=1e-12)

    def test_spreading_increases_entropy(self):
        s = 0.1
        clustered = instantaneous_state_entropy(np.zeros(10), sigma=s)
        spread = instantaneous_state_entropy(np.linspace(0, 1, 10), sigma=s)
        assert spread > clustered

    def test_needs_two_components(self):
        with pytest.raises(ValueError):
            instantaneous_state_entropy([1.0])

    def test_sigma_factor_validated(self):
        with pytest.raises(ValueError):
            EntropyConfig(sigma_factor=0.0)


class TestAverageEntropy:
    def test_constant_sequence(self):
        r = np.random.default_rng(6).normal(size=12)
        states = np.tile(r, (5, 1))
        assert average_state_entropy(states, 5) == pytest.approx(instantaneous_state_entropy(r), abs=1e-12)

    def test_single_step(self):
        states = np.random.default_rng(7).normal(size=(4, 12))
        assert average_state_entropy(states, 1) == pytest.approx(instantaneous_state_entropy(states[0]), abs=1e-12)

    def test_mean_of_series(self):
        states = np.random.default_rng(8).normal(size=(9, 15))
        series = ise_series(states)
        assert average_state_entropy(states, 6) == pytest.approx(series[:6].mean(), abs=1e-12)

    def test_zero_index_is_absent(self):
        assert average_state_entropy(np.ones((3, 4)), 0) is None

    def test_global_width(self):
        states = np.random.default_rng(9).normal(size=(3, 10))
        s = 0.3 * np.std(states, ddof=1)
        got = ise_series(states, EntropyConfig(per_step=False))
        want = [instantaneous_state_entropy(r, sigma=s) for r in states]
        np.testing.assert_allclose(got, want, atol=1e-14)


def test_ise_csv_phases(tmp_path):
    path = tmp_path / "ise.csv"
    write_ise_csv(path, [1.0, 2.0, 3.0, 4.0], 2, 0.02, 0.906)
    rows = [line.split(",") for line in path.read_text().splitlines()]
    assert rows[0] == ["step", "lyapunov_time", "ise", "phase"]
    assert [r[3] for r in rows[1:]] == ["pre_fh", "pre_fh", "post_fh", "post_fh"]
    assert float(rows[2][1]) == pytest.approx(0.906 * 0.02)
