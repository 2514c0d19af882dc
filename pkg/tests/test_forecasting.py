import json
import math

import numpy as np
import pytest

from resonator.activation import ActivationSpec
from resonator.forecasting import (
    STREAMS,
    TrialConfig,
    TrialResult,
    aggregate_trials,
    derive_seed,
    forecast_horizon,
    run_trial,
)
from resonator.lorenz import LYAPUNOV_EXPONENT, Trajectory, generate_trajectory
from resonator.reservoir import ReservoirConfig

SMALL = TrialConfig(reservoir=ReservoirConfig(n_nodes=60), train_samples=1500, predict_samples=300, master_seed=3)


def _series(n=200, seed=0):
    return np.random.default_rng(seed).normal(scale=3.0, size=(n, 3))


class TestForecastHorizon:
    def test_identical_is_censored(self):
        a = _series()
        fh, censored, idx = forecast_horizon(a, a.copy())
        assert censored and idx == 200
        assert fh == pytest.approx(LYAPUNOV_EXPONENT * 200 * 0.02)

    def test_constructed_crossing(self):
        a = _series()
        p = a.copy()
        p[100:, 0] += 5.01
        fh, censored, idx = forecast_horizon(a, p, tau=0.02)
        assert (fh, censored, idx) == (pytest.approx(1.812), False, 100)

    def test_threshold_is_strict(self):
        a = np.zeros((50, 3))
        assert forecast_horizon(a, a + 5.0)[1]

    def test_only_x_counts(self):
        a = np.zeros((50, 3))
        p = a.copy()
        p[:, 1:] = 100.0
        assert forecast_horizon(a, p)[1]

    def test_nan_counts_as_divergence(self):
        a = _series()
        p = a.copy()
        p[37, 0] = np.nan
        assert forecast_horizon(a, p)[2] == 37

    def test_truncated_prediction(self):
        a = _series()
        fh, censored, idx = forecast_horizon(a, a[:60], window=200)
        assert idx == 60 and not censored

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            forecast_horizon(_series(10), _series(9))

    def test_trajectory_inputs(self):
        a = Trajectory(_series(), tau=0.05)
        p = Trajectory(a.samples.copy(), tau=0.05)
        p.samples[10, 0] += 6.0
        fh, _, idx = forecast_horizon(a, p)
        assert idx == 10 and fh == pytest.approx(LYAPUNOV_EXPONENT * 10 * 0.05)

    def test_tau_mismatch(self):
        with pytest.raises(ValueError):
            forecast_horizon(Trajectory(_series(), 0.02), Trajectory(_series(), 0.05))

    def test_appending_after_divergence(self):
        a, p = _series(seed=1), _series(seed=2)
        base = forecast_horizon(a, p)
        longer = forecast_horizon(np.vstack([a, _series(50, 3)]), np.vstack([p, _series(50, 4)]))
        assert base[2] == longer[2] and base[2] < 200

    def test_tighter_threshold_never_longer(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(300, 3))
        p = a + np.cumsum(rng.normal(scale=0.3, size=(300, 3)), axis=0)
        fhs = [forecast_horizon(a, p, threshold=t)[0] for t in (0.5, 1.0, 2.0, 5.0, 10.0)]
        assert fhs == sorted(fhs)


class TestSeeds:
    def test_streams_are_distinct(self):
        seeds = {SMALL.seed(name) for name in STREAMS}
        assert len(seeds) == len(STREAMS)

    def test_path_changes_seeds(self):
        assert SMALL.seed("data") != SMALL.with_(seed_path=(1,)).seed("data")

    def test_derivation_is_stable(self):
        a = derive_seed(5, (1, 2), "adjacency").generate_state(2)
        b = derive_seed(5, (1, 2), "adjacency").generate_state(2)
        assert np.array_equal(a, b)


class TestConfig:
    def test_sample_units(self):
        cfg = TrialConfig()
        assert (cfg.n_train, cfg.n_predict) == (5000, 1250)

    def test_model_time_units(self):
        cfg = TrialConfig(units="model_time", train_samples=100.0, predict_samples=25.0)
        assert (cfg.n_train, cfg.n_predict) == (5000, 1250)

    @pytest.mark.parametrize("kw", [{"threshold": 0.0}, {"units": "hours"}, {"predict_samples": 0}, {"tau": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrialConfig(**kw)


class TestRunTrial:
    def test_deterministic(self):
        assert run_trial(SMALL) == run_trial(SMALL)

    def test_fields_populated(self):
        r = run_trial(SMALL)
        assert r.ok and r.failed_stage is None
        assert 0 <= r.fh <= LYAPUNOV_EXPONENT * 300 * 0.02
        assert r.fh == pytest.approx(LYAPUNOV_EXPONENT * r.fh_index * 0.02)
        assert r.weighted_curvature is not None and r.weighted_curvature >= 0
        assert r.ase is not None and math.isfinite(r.ase)
        assert set(r.seeds) == set(STREAMS)

    def test_censored_means_capped(self):
        r = run_trial(SMALL.with_(threshold=1e9))
        assert r.censored and r.fh == pytest.approx(LYAPUNOV_EXPONENT * 300 * 0.02)

    def test_ground_truth_untouched(self):
        # The scored window is the generated series, bit for bit.
        cfg = SMALL
        data = generate_trajectory(cfg.seed("data"), cfg.n_train + cfg.n_predict).samples
        frozen = data.copy()
        run_trial(cfg)
        assert np.array_equal(data, frozen)

    def test_emit_ise(self):
        r = run_trial(SMALL.with_(emit_ise=True))
        assert len(r.ise_series) == 300
        assert "ise_series" in json.loads(r.to_json())
        assert "ise_series" not in run_trial(SMALL).to_dict()

    def test_r_relu_runs_reproducibly(self):
        cfg = SMALL.with_(activation=ActivationSpec("r_relu"))
        assert run_trial(cfg) == run_trial(cfg)

    def test_failure_is_reported_with_stage(self):
        cfg = SMALL.with_(activation=ActivationSpec("softplus", bound=None), reservoir=ReservoirConfig(n_nodes=60, spectral_radius=50.0))
        r = run_trial(cfg)
        assert not r.ok and r.failed_stage in ("drive", "predict", "fit")
        assert r.fh == 0.0

    def test_json_round_trip(self):
        d = json.loads(run_trial(SMALL).to_json())
        assert {"fh", "censored", "ase", "weighted_curvature", "seeds"} <= set(d)


def _result(fh, censored=False):
    return TrialResult(fh=fh, censored=censored, fh_index=0)


class TestAggregate:
    def test_single(self):
        s = aggregate_trials([_result(4.2)])
        assert s.mean_fh == 4.2 and s.stderr_fh == 0.0 and s.n_trials == 1

    def test_identical(self):
        s = aggregate_trials([_result(3.0)] * 5)
        assert s.mean_fh == 3.0 and s.stderr_fh == 0.0

    def test_hand_arithmetic(self):
        s = aggregate_trials([_result(10.0), _result(12.0), _result(14.0, censored=True)])
        assert s.mean_fh == pytest.approx(12.0)
        assert s.std_fh == pytest.approx(2.0)
        assert s.stderr_fh == pytest.approx(2.0 / math.sqrt(3))
        assert s.n_censored == 1

    def test_failures_excluded(self):
        bad = TrialResult(0.0, False, 0, error="boom", failed_stage="drive")
        s = aggregate_trials([_result(2.0), bad])
        assert s.n_trials == 1 and s.n_failed == 1 and s.mean_fh == 2.0

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate_trials([])
