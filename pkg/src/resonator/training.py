"""Ridge-regression readout."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)

CHUNK_ROWS = 2048
EIG_CUTOFF = 1e-12


@dataclass(frozen=True)
class RidgeConfig:
    lam: float = 0.0
    washout: int = 100

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("ridge lambda must be >= 0")
        if self.washout < 0:
            raise ValueError("washout must be >= 0")


@dataclass
class RidgeFit:
    w_out: np.ndarray
    rank_deficient: bool = False

    def to_csv(self, path: Union[str, Path]) -> None:
        np.savetxt(path, self.w_out, delimiter=",", fmt="%.17g")


def gram_matrices(states: np.ndarray, targets: np.ndarray, chunk: int = CHUNK_ROWS):
    """Accumulate R^T R and R^T Z over row blocks, in row order."""
    n = states.shape[1]
    rtr = np.zeros((n, n))
    rtz = np.zeros((n, targets.shape[1]))
    for start in range(0, len(states), chunk):
        r = states[start:start + chunk]
        rtr += r.T @ r
        rtz += r.T @ targets[start:start + chunk]
    return rtr, rtz


def ridge_fit(states: np.ndarray, targets: np.ndarray, cfg: RidgeConfig = RidgeConfig()) -> RidgeFit:
    """Fit ``W_out`` minimising ``sum ||W_out r_n - z_n||^2 + lam * ||W_out||_F^2``.

    Rows of ``states`` and ``targets`` must already be paired; the first
    ``cfg.washout`` pairs are dropped. The normal equations are solved by
    Cholesky. If that fails (singular Gram matrix with ``lam == 0``) the
    least-norm solution is taken from an eigendecomposition with relative
    eigenvalue cutoff 1e-12 and the fit is flagged rank deficient.

    Returns:
        RidgeFit whose ``w_out`` has shape (targets.shape[1], states.shape[1]).
    """
    states = np.asarray(states, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if states.ndim != 2 or targets.ndim != 2 or len(states) != len(targets):
        raise ValueError(f"misaligned training data: states {states.shape}, targets {targets.shape}")
    if cfg.washout >= len(states):
        raise ValueError(f"washout {cfg.washout} leaves no training pairs out of {len(states)}")
    rtr, rtz = gram_matrices(states[cfg.washout:], targets[cfg.washout:])
    if cfg.lam:
        rtr[np.diag_indices_from(rtr)] += cfg.lam
    try:
        factor = linalg.cho_factor(rtr, lower=True, check_finite=True)
        w_t = linalg.cho_solve(factor, rtz)
        return RidgeFit(w_t.T)
    except linalg.LinAlgError:
        log.info("Gram matrix not positive definite; using least-norm eigen solution")
    evals, evecs = linalg.eigh(rtr)
    keep = evals > EIG_CUTOFF * max(evals.max(), 0.0)
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    w_t = evecs @ (inv[:, None] * (evecs.T @ rtz))
    return RidgeFit(w_t.T, rank_deficient=True)
