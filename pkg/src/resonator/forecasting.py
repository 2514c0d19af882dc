"""Single-trial pipeline and the forecast-horizon score."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from resonator.activation import ActivationSpec
from resonator.errors import NumericalBlowUp
from resonator.lorenz import LYAPUNOV_EXPONENT, LorenzParams, Trajectory, generate_trajectory
from resonator.metrics import EntropyConfig, average_state_entropy, collect_histogram, ise_series, weighted_curvature
from resonator.reservoir import ReservoirConfig, ReservoirInstance, run_autonomous, run_driven
from resonator.training import RidgeConfig, ridge_fit

log = logging.getLogger(__name__)

# Independent random streams of one trial.
STREAMS = {"data": 0, "adjacency": 1, "input": 2, "r_relu": 3}


def derive_seed(master_seed: int, path: Sequence[int] = (), stream: Optional[str] = None) -> np.random.SeedSequence:
    key = tuple(int(p) for p in path)
    if stream is not None:
        key += (STREAMS[stream],)
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrialConfig:
    """Everything one train/predict trial depends on.

    ``train_samples`` and ``predict_samples`` are sample counts when
    ``units == "samples"`` and model-time lengths when
    ``units == "model_time"`` (converted with ``tau``).
    """

    reservoir: ReservoirConfig = ReservoirConfig()
    activation: ActivationSpec = ActivationSpec(kind="swish", beta=0.6)
    ridge: RidgeConfig = RidgeConfig()
    train_samples: float = 5000
    predict_samples: float = 1250
    tau: float = 0.02
    threshold: float = 5.0
    master_seed: int = 0
    seed_path: Tuple[int, ...] = ()
    units: str = "samples"
    transient_steps: int = 1000
    lorenz: LorenzParams = LorenzParams()
    hist_bins: int = 200
    compute_curvature: bool = True
    compute_ase: bool = True
    emit_ise: bool = False
    entropy: EntropyConfig = EntropyConfig()

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.units not in ("samples", "model_time"):
            raise ValueError("units must be 'samples' or 'model_time'")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.n_train < 1 or self.n_predict < 1:
            raise ValueError("train and predict lengths must be >= 1 sample")

    def _count(self, value: float) -> int:
        return int(round(value / self.tau)) if self.units == "model_time" else int(value)

    @property
    def n_train(self) -> int:
        return self._count(self.train_samples)

    @property
    def n_predict(self) -> int:
        return self._count(self.predict_samples)

    def with_(self, **changes) -> "TrialConfig":
        return replace(self, **changes)

    def seed(self, stream: str) -> int:
        return seed_int(derive_seed(self.master_seed, self.seed_path, stream))


@dataclass
class TrialResult:
    fh: float
    censored: bool
    fh_index: int
    ase: Optional[float] = None
    weighted_curvature: Optional[float] = None
    seeds: dict = field(default_factory=dict)
    rank_deficient: bool = False
    truncated: bool = False
    error: Optional[str] = None
    failed_stage: Optional[str] = None
    ise_series: Optional[List[float]] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self, include_ise: bool = True) -> dict:
        d = asdict(self)
        if not include_ise or d["ise_series"] is None:
            d.pop("ise_series")
        return d

    def to_json(self, include_ise: bool = True) -> str:
        return json.dumps(self.to_dict(include_ise), allow_nan=True)


def forecast_horizon(
    actual,
    predicted,
    threshold: float = 5.0,
    tau: Optional[float] = None,
    lyapunov_exponent: Optional[float] = None,
    window: Optional[int] = None,
) -> Tuple[float, bool, int]:
    """Lyapunov-time horizon before the predicted x first strays by > threshold.

    ``actual`` and ``predicted`` are Trajectories or (n, 3) arrays. A
    prediction shorter than ``window`` (default: the actual length) or
    containing non-finite values counts as diverged at the first missing
    or bad index.

    Returns:
        (fh, censored, index) where ``fh = lyapunov_exponent * index * tau``.
    """
    if isinstance(actual, Trajectory):
        tau = actual.tau if tau is None else tau
        lyapunov_exponent = actual.lyapunov_exponent if lyapunov_exponent is None else lyapunov_exponent
        actual = actual.samples
    if isinstance(predicted, Trajectory):
        if tau is not None and not math.isclose(predicted.tau, tau):
            raise ValueError("actual and predicted trajectories use different tau")
        predicted = predicted.samples
    tau = 0.02 if tau is None else tau
    lyapunov_exponent = LYAPUNOV_EXPONENT if lyapunov_exponent is None else lyapunov_exponent
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    n = len(actual) if window is None else window
    if window is None and len(predicted) != len(actual):
        raise ValueError(f"length mismatch: actual {len(actual)} vs predicted {len(predicted)}")
    if len(predicted) > n or len(actual) < n:
        raise ValueError(f"length mismatch: window {n}, actual {len(actual)}, predicted {len(predicted)}")
    m = len(predicted)
    with np.errstate(invalid="ignore"):
        err = np.abs(actual[:m, 0] - predicted[:, 0])
    bad = ~(err <= threshold)  # NaN counts as a crossing
    hits = np.flatnonzero(bad)
    if hits.size:
        idx, censored = int(hits[0]), False
    elif m < n:
        idx, censored = m, False
    else:
        idx, censored = n, True
    return lyapunov_exponent * idx * tau, censored, idx


def run_trial(cfg: TrialConfig) -> TrialResult:
    """Generate data, build and train a reservoir, forecast and score.

    Numerical failures do not raise; they come back as a result with
    ``error`` and ``failed_stage`` set and fh = 0.
    """
    seeds = {name: cfg.seed(name) for name in STREAMS}
    n_train, n_predict = cfg.n_train, cfg.n_predict
    stage = "data"
    try:
        data = generate_trajectory(
            seeds["data"], n_train + n_predict, cfg.tau, cfg.transient_steps, cfg.lorenz
        )
        source = data.samples
        train = source[:n_train]
        targets = source[1:n_train + 1]
        actual = source[n_train:n_train + n_predict]

        stage = "build"
        act = cfg.activation
        if act.kind == "r_relu":
            act = act.with_(rng_stream=seeds["r_relu"])
        res = ReservoirInstance.build(cfg.reservoir, act, seeds["adjacency"], seeds["input"])

        stage = "drive"
        states, pre = run_driven(res, train, collect_preactivations=cfg.compute_curvature)

        stage = "fit"
        fit = ridge_fit(states, targets, cfg.ridge)
        if not np.isfinite(fit.w_out).all():
            raise NumericalBlowUp("readout contains non-finite weights", stage="fit")

        k_value = None
        if cfg.compute_curvature:
            hist = collect_histogram(pre[cfg.ridge.washout:], cfg.hist_bins)
            k_value = weighted_curvature(act, hist)
            del pre

        stage = "predict"
        run = run_autonomous(res, fit.w_out, n_predict, cfg.tau)
        fh, censored, idx = forecast_horizon(
            actual, run.predictions, cfg.threshold, cfg.tau, data.lyapunov_exponent, window=n_predict
        )

        stage = "entropy"
        ase = average_state_entropy(run.states, idx, cfg.entropy) if cfg.compute_ase else None
        series = ise_series(run.states, cfg.entropy).tolist() if cfg.emit_ise else None
    except (NumericalBlowUp, np.linalg.LinAlgError, FloatingPointError) as exc:
        failed = getattr(exc, "stage", None) or stage
        log.warning("trial %s/%s failed in %s: %s", cfg.master_seed, cfg.seed_path, failed, exc)
        return TrialResult(0.0, False, 0, seeds=seeds, error=str(exc), failed_stage=failed)
    return TrialResult(
        fh=fh,
        censored=censored,
        fh_index=idx,
        ase=ase,
        weighted_curvature=k_value,
        seeds=seeds,
        rank_deficient=fit.rank_deficient,
        truncated=run.truncated,
        ise_series=series,
    )


@dataclass
class TrialStats:
    mean_fh: float
    std_fh: float
    stderr_fh: float
    mean_ase: Optional[float]
    mean_k: Optional[float]
    n_trials: int
    n_censored: int
    n_failed: int = 0


def _mean_of(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def aggregate_trials(results: Sequence[TrialResult]) -> TrialStats:
    """Mean, sample std and standard error of FH over successful trials.

    Censored trials enter at their capped horizon. Failed trials are
    counted but excluded.
    """
    if not results:
        raise ValueError("cannot aggregate an empty list of trials")
    good = [r for r in results if r.ok]
    if not good:
        return TrialStats(math.nan, math.nan, math.nan, None, None, 0, 0, len(results))
    fh = np.array([r.fh for r in good])
    n = len(fh)
    std = float(np.std(fh, ddof=1)) if n > 1 else 0.0
    return TrialStats(
        mean_fh=float(fh.mean()),
        std_fh=std,
        stderr_fh=std / math.sqrt(n),
        mean_ase=_mean_of(r.ase for r in good),
        mean_k=_mean_of(r.weighted_curvature for r in good),
        n_trials=n,
        n_censored=sum(r.censored for r in good),
        n_failed=len(results) - n,
    )
