"""Multi-trial experiments over parameter grids.

Every trial's seed is derived from ``(master_seed, *seed_path, i, j, t)``
where ``i, j`` index the grid cell and ``t`` the trial, so any cell can be
recomputed on its own and the table does not depend on how work is
scheduled.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from resonator.lorenz import LYAPUNOV_EXPONENT
from resonator.forecasting import TrialConfig, TrialResult, aggregate_trials, run_trial
from resonator.metrics import write_ise_csv

log = logging.getLogger(__name__)

_ACTIVATION_KEYS = {"kind", "beta", "bias", "bound", "leak"}
_RESERVOIR_KEYS = {"n_nodes", "mean_degree", "spectral_radius", "input_scale", "weights", "input_layer"}
_RIDGE_KEYS = {"lam", "washout"}


def apply_param(cfg: TrialConfig, name: str, value) -> TrialConfig:
    """Return ``cfg`` with one named parameter replaced.

    Names are the flat field names of the nested configs (``beta``,
    ``n_nodes``, ``lam``, ...) or top-level TrialConfig fields.
    """
    if name in _ACTIVATION_KEYS:
        return replace(cfg, activation=replace(cfg.activation, **{name: value}))
    if name in _RESERVOIR_KEYS:
        if name == "n_nodes":
            value = int(value)
        return replace(cfg, reservoir=replace(cfg.reservoir, **{name: value}))
    if name in _RIDGE_KEYS:
        if name == "washout":
            value = int(value)
        return replace(cfg, ridge=replace(cfg.ridge, **{name: value}))
    if name in TrialConfig.__dataclass_fields__:
        return replace(cfg, **{name: value})
    raise KeyError(f"unknown sweep parameter {name!r}")


def read_param(cfg: TrialConfig, name: str):
    for sub in ("activation", "reservoir", "ridge"):
        obj = getattr(cfg, sub)
        if name in obj.__dataclass_fields__:
            return getattr(obj, name)
    return getattr(cfg, name)


@dataclass
class GridSpec:
    axis1: Tuple[str, Sequence]
    axis2: Tuple[str, Sequence]
    trials_per_cell: int = 50
    base: TrialConfig = TrialConfig()

    def __post_init__(self):
        if not len(self.axis1[1]) or not len(self.axis2[1]):
            raise ValueError("grid axes must be nonempty")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")

    def cell_config(self, i: int, j: int) -> TrialConfig:
        cfg = apply_param(self.base, self.axis1[0], self.axis1[1][i])
        return apply_param(cfg, self.axis2[0], self.axis2[1][j])

    def trial_config(self, i: int, j: int, t: int) -> TrialConfig:
        """Config of trial ``t`` in cell ``(i, j)``; enough to rerun it alone."""
        cfg = self.cell_config(i, j)
        return replace(cfg, seed_path=tuple(self.base.seed_path) + (i, j, t))


def linear_beta_axis(n: int = 50, lo: float = 0.01, hi: float = 1.0) -> list:
    return [float(v) for v in np.linspace(lo, hi, n)]


def node_axis(n: int = 50, lo: int = 10, hi: int = 1000) -> list:
    return [int(v) for v in np.rint(np.linspace(lo, hi, n))]


def bias_axis(n: int = 25, lo: float = -3.0, hi: float = 3.0) -> list:
    return [float(v) for v in np.linspace(lo, hi, n)]


@dataclass
class SweepRow:
    axis1: float
    axis2: float
    mean_fh: float
    stderr_fh: float
    std_fh: float
    mean_ase: Optional[float]
    mean_k: Optional[float]
    n_trials: int
    n_censored: int
    n_failed: int = 0
    fh: List[float] = field(default_factory=list, repr=False)


@dataclass
class SweepTable:
    axis1_name: str
    axis2_name: str
    rows: List[SweepRow]

    COLUMNS = ("axis1", "axis2", "mean_fh", "stderr_fh", "mean_ase", "mean_k", "n_trials", "n_censored")

    def cell(self, a1, a2) -> SweepRow:
        for r in self.rows:
            if r.axis1 == a1 and r.axis2 == a2:
                return r
        raise KeyError((a1, a2))

    def matrix(self, attr: str = "mean_fh") -> np.ndarray:
        """Values laid out as [axis1 index, axis2 index]; failed cells are NaN."""
        a1 = sorted({r.axis1 for r in self.rows}, key=self._order1.index)
        a2 = sorted({r.axis2 for r in self.rows}, key=self._order2.index)
        out = np.full((len(a1), len(a2)), np.nan)
        for r in self.rows:
            v = getattr(r, attr)
            out[a1.index(r.axis1), a2.index(r.axis2)] = np.nan if v is None else v
        return out

    @property
    def _order1(self):
        return list(dict.fromkeys(r.axis1 for r in self.rows))

    @property
    def _order2(self):
        return list(dict.fromkeys(r.axis2 for r in self.rows))

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        """Write the heatmap-ready long table; returns the CSV text."""
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            vals = [r.axis1, r.axis2, r.mean_fh, r.stderr_fh, r.mean_ase, r.mean_k]
            lines.append(",".join(_fmt(v) for v in vals) + f",{r.n_trials},{r.n_censored}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def _run_cell(args) -> List[TrialResult]:
    cfg, trials = args
    return [run_trial(replace(cfg, seed_path=tuple(cfg.seed_path) + (t,))) for t in range(trials)]


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_cells(
    cells: Sequence[TrialConfig],
    trials: int,
    parallelism: Optional[int] = None,
    progress: bool = False,
) -> List[List[TrialResult]]:
    """Run ``trials`` trials for each cell config, returned in cell order.

    Trial ``t`` of a cell uses ``seed_path + (t,)``.
    """
    jobs = default_jobs() if parallelism is None else max(1, int(parallelism))
    work = [(c, trials) for c in cells]
    out: List[List[TrialResult]] = []
    if jobs == 1 or len(work) == 1:
        results = map(_run_cell, work)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(_run_cell, work)
    try:
        for k, res in enumerate(results):
            out.append(res)
            if progress:
                print(f"cell {k + 1}/{len(work)} done", file=sys.stderr, flush=True)
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def run_grid(spec: GridSpec, parallelism: Optional[int] = None, progress: bool = False) -> SweepTable:
    """Run every cell of the grid and aggregate per cell.

    Cells are the unit of work. Results are merged by cell index, so the
    table is identical for any ``parallelism``. A cell whose trials all
    fail is dropped from the table (and logged); partially failed cells keep
    their successful trials.
    """
    index = [(i, j) for i in range(len(spec.axis1[1])) for j in range(len(spec.axis2[1]))]
    cells = [replace(spec.cell_config(i, j), seed_path=tuple(spec.base.seed_path) + (i, j)) for i, j in index]
    per_cell = run_cells(cells, spec.trials_per_cell, parallelism, progress)
    rows = []
    for (i, j), res in zip(index, per_cell):
        stats = aggregate_trials(res)
        a1, a2 = spec.axis1[1][i], spec.axis2[1][j]
        if stats.n_trials == 0:
            log.warning("cell %s=%s, %s=%s: all %d trials failed", spec.axis1[0], a1, spec.axis2[0], a2, len(res))
            continue
        if stats.n_failed:
            log.warning("cell %s=%s, %s=%s: %d trial(s) failed", spec.axis1[0], a1, spec.axis2[0], a2, stats.n_failed)
        rows.append(
            SweepRow(
                a1, a2, stats.mean_fh, stats.stderr_fh, stats.std_fh, stats.mean_ase, stats.mean_k,
                stats.n_trials, stats.n_censored, stats.n_failed, [r.fh for r in res if r.ok],
            )
        )
    return SweepTable(spec.axis1[0], spec.axis2[0], rows)


def run_lambda_sweep(base: TrialConfig, lambdas: Sequence[float], trials: int, parallelism: Optional[int] = None) -> SweepTable:
    if not len(lambdas) or any(l < 0 for l in lambdas):
        raise ValueError("lambdas must be a nonempty list of values >= 0")
    spec = GridSpec(("lam", list(lambdas)), ("n_nodes", [base.reservoir.n_nodes]), trials, base)
    return run_grid(spec, parallelism)


def run_bound_sweep(
    base: TrialConfig,
    bounds: Sequence[float],
    beta_axis: Sequence[float],
    n_axis: Sequence[int],
    trials: int,
    parallelism: Optional[int] = None,
) -> Dict[float, SweepTable]:
    """A beta x N grid for each clamp bound; keyed by bound."""
    if not len(bounds) or any(b < 0 for b in bounds):
        raise ValueError("bounds must be a nonempty list of values >= 0")
    out = {}
    for k, b in enumerate(bounds):
        cfg = apply_param(base, "bound", float(b))
        cfg = replace(cfg, seed_path=tuple(base.seed_path) + (k,))
        out[float(b)] = run_grid(GridSpec(("beta", list(beta_axis)), ("n_nodes", list(n_axis)), trials, cfg), parallelism)
    return out


def bound_table_name(bound: float) -> str:
    return f"sweep_bound_B{bound:g}.csv"


@dataclass
class FHHistogram:
    fh: List[float]
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    std: float
    n_censored: int = 0

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                w.writerow([f"{lo:.9g}", f"{hi:.9g}", int(c)])

    def stats(self) -> dict:
        return {"mean": self.mean, "std": self.std, "trials": len(self.fh), "n_censored": self.n_censored, "fh": self.fh}


def run_fh_histogram(
    base: TrialConfig,
    trials: int,
    n_bins: int = 20,
    parallelism: Optional[int] = None,
    identical_seeds: bool = False,
) -> FHHistogram:
    """FH distribution over repeated trials of one configuration.

    ``identical_seeds`` reruns the very same trial every time (a check of
    determinism; the spread is then zero).
    """
    if trials < 2:
        raise ValueError("need at least two trials for a histogram")
    if identical_seeds:
        results = [run_trial(base)] * trials
    else:
        configs = [replace(base, seed_path=tuple(base.seed_path) + (t,)) for t in range(trials)]
        jobs = default_jobs() if parallelism is None else max(1, int(parallelism))
        if jobs == 1:
            results = [run_trial(c) for c in configs]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(run_trial, configs))
    good = [r for r in results if r.ok]
    fh = np.array([r.fh for r in good])
    counts, edges = np.histogram(fh, bins=n_bins)
    return FHHistogram(
        fh.tolist(), edges, counts, float(fh.mean()), float(np.std(fh, ddof=1)) if len(fh) > 1 else 0.0,
        sum(r.censored for r in good),
    )


@dataclass
class ISECapture:
    ise: List[float]
    fh_index: int
    result: TrialResult
    tau: float
    lyapunov_exponent: float

    @property
    def phases(self) -> List[str]:
        return ["pre_fh" if k < self.fh_index else "post_fh" for k in range(len(self.ise))]

    def to_csv(self, path: Union[str, Path]) -> None:
        write_ise_csv(path, self.ise, self.fh_index, self.tau, self.lyapunov_exponent)


def run_ise_capture(base: TrialConfig) -> ISECapture:
    """ISE over the whole prediction window of one trial, tagged by FH."""
    res = run_trial(replace(base, emit_ise=True))
    if not res.ok:
        raise RuntimeError(f"trial failed in stage {res.failed_stage}: {res.error}")
    return ISECapture(res.ise_series, res.fh_index, res, base.tau, LYAPUNOV_EXPONENT)
