"""Ground-truth Lorenz trajectories.

The system is integrated with classical fourth-order Runge-Kutta at a fixed
step and sampled every ``tau`` model-time units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numba
import numpy as np

from resonator.errors import NumericalBlowUp

LYAPUNOV_EXPONENT = 0.906
# RK4 steps per 0.02 sample: one step errs by up to ~1e-3 on the attractor,
# four keep the per-sample error near 1e-6 or below.
DEFAULT_SUBSTEPS = 4


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta_l: float = 8.0 / 3.0

    def __post_init__(self):
        for name in ("sigma", "rho", "beta_l"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"LorenzParams.{name} must be finite")


@dataclass
class Trajectory:
    """A sampled 3-D series.

    Attributes:
        samples: array of shape (n, 3) holding (x, y, z) rows.
        tau: model-time units between consecutive samples.
        lyapunov_exponent: rate used to convert model time to Lyapunov time.
    """

    samples: np.ndarray
    tau: float = 0.02
    lyapunov_exponent: float = LYAPUNOV_EXPONENT

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError(f"samples must have shape (n, 3), got {self.samples.shape}")
        if len(self.samples) == 0:
            raise ValueError("trajectory must be nonempty")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.lyapunov_exponent > 0:
            raise ValueError("lyapunov_exponent must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(len(self.samples))

    def slice(self, start: int, stop: int) -> "Trajectory":
        return Trajectory(self.samples[start:stop], self.tau, self.lyapunov_exponent)

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "y", "z"])
            for t, (x, y, z) in zip(self.times, self.samples):
                writer.writerow([f"{v:.15g}" for v in (t, x, y, z)])

    @classmethod
    def from_csv(cls, path: Union[str, Path], lyapunov_exponent: float = LYAPUNOV_EXPONENT) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        tau = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 1.0
        return cls(data[:, 1:4], tau, lyapunov_exponent)


def lorenz_derivative(state, params: LorenzParams = LorenzParams()) -> np.ndarray:
    """Right-hand side of the Lorenz equations.

    ``state`` may be a single 3-vector or an array of shape (..., 3); the
    derivative is evaluated row-wise.
    """
    s = np.asarray(state, dtype=float)
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    return np.stack(
        [
            params.sigma * (y - x),
            x * (params.rho - z) - y,
            x * y - params.beta_l * z,
        ],
        axis=-1,
    )


def rk4_step(state, dt: float, params: LorenzParams = LorenzParams(), substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """Advance ``state`` by ``dt`` using ``substeps`` classical RK4 steps.

    Raises:
        ValueError: if ``dt`` is negative.
        NumericalBlowUp: if the result is not finite.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    s = np.array(state, dtype=float)
    h = dt / substeps
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(substeps):
            k1 = lorenz_derivative(s, params)
            k2 = lorenz_derivative(s + 0.5 * h * k1, params)
            k3 = lorenz_derivative(s + 0.5 * h * k2, params)
            k4 = lorenz_derivative(s + h * k3, params)
            s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(s)):
        raise NumericalBlowUp("RK4 step produced a non-finite state; reduce dt")
    return s


@numba.njit(cache=True)
def _integrate(x, y, z, n_steps, dt, sg, rh, bt, substeps):
    h = dt / substeps
    out = np.empty((n_steps, 3))
    for n in range(n_steps):
        for _ in range(substeps):
            a1, b1, c1 = sg * (y - x), x * (rh - z) - y, x * y - bt * z
            xs, ys, zs = x + 0.5 * h * a1, y + 0.5 * h * b1, z + 0.5 * h * c1
            a2, b2, c2 = sg * (ys - xs), xs * (rh - zs) - ys, xs * ys - bt * zs
            xs, ys, zs = x + 0.5 * h * a2, y + 0.5 * h * b2, z + 0.5 * h * c2
            a3, b3, c3 = sg * (ys - xs), xs * (rh - zs) - ys, xs * ys - bt * zs
            xs, ys, zs = x + h * a3, y + h * b3, z + h * c3
            a4, b4, c4 = sg * (ys - xs), xs * (rh - zs) - ys, xs * ys - bt * zs
            x += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            y += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            z += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        out[n, 0] = x
        out[n, 1] = y
        out[n, 2] = z
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            return out, n
    return out, -1


def generate_trajectory(
    seed,
    n_samples: int,
    tau: float = 0.02,
    transient_steps: int = 1000,
    params: LorenzParams = LorenzParams(),
    substeps: int = DEFAULT_SUBSTEPS,
) -> Trajectory:
    """Sample a Lorenz trajectory from a seeded initial condition.

    The start point is (1, 1, 1) plus a uniform perturbation in
    [-0.5, 0.5]^3. The first ``transient_steps`` samples are discarded so the
    returned series lies on the attractor.

    Args:
        seed: anything accepted by ``numpy.random.default_rng``.
        n_samples: number of samples to return.
        tau: sampling interval in model time.
        transient_steps: samples integrated and thrown away first.
        params: Lorenz parameters.
        substeps: RK4 steps per sample (internal step ``tau / substeps``).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if transient_steps < 0:
        raise ValueError("transient_steps must be >= 0")
    if not tau > 0:
        raise ValueError("tau must be positive")
    rng = np.random.default_rng(seed)
    x0 = 1.0 + rng.uniform(-0.5, 0.5, size=3)
    path, bad = _integrate(
        x0[0], x0[1], x0[2], transient_steps + n_samples, float(tau),
        params.sigma, params.rho, params.beta_l, int(substeps),
    )
    if bad >= 0:
        raise NumericalBlowUp(f"Lorenz integration blew up at step {bad}", step=bad, stage="data")
    return Trajectory(path[transient_steps:], tau)
