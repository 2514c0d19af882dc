"""Diagnostics: input-weighted activation curvature and state entropy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from resonator.activation import derivative

SQRT_2PI = math.sqrt(2.0 * math.pi)
SIGMA_FLOOR = 1e-12


@dataclass
class InputHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts)
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if len(self.counts) != len(self.bin_edges) - 1:
            raise ValueError("need exactly one count per bin")
        if self.total <= 0 or int(self.counts.sum()) != self.total:
            raise ValueError("counts must sum to a positive total")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center", "probability"])
            for c, p in zip(self.centers, self.probabilities):
                w.writerow([f"{c:.9g}", f"{p:.9g}"])


def collect_histogram(pre_activations, n_bins: int = 200) -> InputHistogram:
    """Uniform-bin histogram over the sample range.

    A constant sample is binned over ``value +/- 1e-6`` so all mass lands in
    the middle bin.
    """
    x = np.asarray(pre_activations, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples to bin")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 1e-6, hi + 1e-6
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    return InputHistogram(edges, counts, int(x.size))


def pointwise_curvature(spec, x):
    """``|f''| / (1 + f'^2)^(3/2)`` from finite differences."""
    d1 = derivative(spec, x, 1)
    d2 = derivative(spec, x, 2)
    return np.abs(d2) / (1.0 + np.square(d1)) ** 1.5


def weighted_curvature(spec, hist: InputHistogram) -> float:
    """Curvature averaged over the input distribution, evaluated at bin centres."""
    p = hist.probabilities
    used = p > 0
    kappa = pointwise_curvature(spec, hist.centers[used])
    return float(np.dot(np.atleast_1d(kappa), p[used]))


@dataclass(frozen=True)
class EntropyConfig:
    sigma_factor: float = 0.3
    # per_step: kernel width from each state's own spread; otherwise a
    # caller-supplied width (e.g. from the whole trajectory) is used.
    per_step: bool = True

    def __post_init__(self):
        if not self.sigma_factor > 0:
            raise ValueError("sigma_factor must be positive")


def kernel_width(state: np.ndarray, cfg: EntropyConfig = EntropyConfig()) -> float:
    return cfg.sigma_factor * float(np.std(state, ddof=1))


def instantaneous_state_entropy(
    state,
    cfg: EntropyConfig = EntropyConfig(),
    sigma: Optional[float] = None,
) -> float:
    """Quadratic Renyi entropy estimate of the spread of one state vector.

    ``-log( mean_ij K_sigma(r_j - r_i) )`` with a Gaussian kernel of width
    ``sigma``; by default ``sigma`` is ``sigma_factor`` times the sample
    standard deviation of the components. A zero width is floored at 1e-12.
    """
    r = np.asarray(state, dtype=float).ravel()
    n = r.size
    if n < 2:
        raise ValueError("state needs at least two components")
    s = kernel_width(r, cfg) if sigma is None else float(sigma)
    s = max(s, SIGMA_FLOOR)
    diff = (r[None, :] - r[:, None]) / s
    total = np.exp(-0.5 * np.square(diff)).sum()
    return -math.log(total / (n * n * SQRT_2PI * s))


def ise_series(states: np.ndarray, cfg: EntropyConfig = EntropyConfig(), sigma: Optional[float] = None) -> np.ndarray:
    """ISE for every row of ``states``.

    With ``cfg.per_step`` False and no ``sigma``, one width is computed from
    all entries of ``states``.
    """
    states = np.asarray(states, dtype=float)
    if sigma is None and not cfg.per_step:
        sigma = cfg.sigma_factor * float(np.std(states, ddof=1))
    return np.array([instantaneous_state_entropy(r, cfg, sigma) for r in states])


def average_state_entropy(states: np.ndarray, fh_index: int, cfg: EntropyConfig = EntropyConfig()) -> Optional[float]:
    """Mean ISE over the first ``fh_index`` prediction states; None if empty."""
    if fh_index < 1:
        return None
    return float(np.mean(ise_series(states[:fh_index], cfg)))


def write_ise_csv(path: Union[str, Path], ise: Sequence[float], fh_index: int, tau: float, lyapunov_exponent: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "lyapunov_time", "ise", "phase"])
        for k, v in enumerate(ise):
            phase = "pre_fh" if k < fh_index else "post_fh"
            w.writerow([k, f"{lyapunov_exponent * k * tau:.9g}", f"{v:.9g}", phase])
