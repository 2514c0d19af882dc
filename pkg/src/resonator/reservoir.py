"""Random echo-state reservoir: construction and the driven/closed-loop maps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from resonator.activation import Activation, ActivationSpec
from resonator.errors import NumericalBlowUp
from resonator.lorenz import Trajectory

log = logging.getLogger(__name__)

MAX_REDRAWS = 16


@dataclass(frozen=True)
class ReservoirConfig:
    n_nodes: int = 300
    mean_degree: float = 6.0
    spectral_radius: float = 1.2
    input_scale: float = 0.1
    input_dim: int = 3
    # "uniform": nonzero entries ~ U(-1, 1); "binary": nonzero entries are 1.
    weights: str = "uniform"
    # "weighted": each node is driven by one input component;
    # "dense": every entry of W_in is drawn.
    input_layer: str = "weighted"

    def __post_init__(self):
        if self.weights not in ("binary", "uniform"):
            raise ValueError("weights must be 'binary' or 'uniform'")
        if self.input_layer not in ("weighted", "dense"):
            raise ValueError("input_layer must be 'weighted' or 'dense'")
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        if not self.spectral_radius > 0:
            raise ValueError("spectral_radius must be positive")
        if not self.input_scale > 0:
            raise ValueError("input_scale must be positive")
        if not 0 <= self.mean_degree <= self.n_nodes:
            raise ValueError("mean_degree must lie in [0, n_nodes]")

    @property
    def connection_probability(self) -> float:
        return self.mean_degree / self.n_nodes


def power_iteration(
    matrix: np.ndarray,
    seed=0,
    max_iter: int = 1000,
    rtol: float = 1e-10,
    shift: float = 0.0,
) -> float:
    """Estimate the dominant eigenvalue modulus of ``matrix`` by power iteration.

    With ``shift`` s the iteration runs on ``matrix + s*I`` and returns the
    estimate minus s. For a nonnegative matrix and s > 0 the Perron root is
    then strictly dominant, which avoids the non-convergence that periodic
    (e.g. cyclic) components cause in the plain iteration.
    """
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.5, 1.5, size=n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = matrix @ v
        if shift:
            w += shift * v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - est) <= rtol * norm:
            est = norm
            break
        est = norm
    else:
        log.warning("power iteration did not reach rtol=%g in %d iterations", rtol, max_iter)
    return est - shift


def spectral_radius(matrix: np.ndarray) -> float:
    """Largest eigenvalue modulus from a dense eigensolve.

    Used for signed matrices, whose dominant eigenvalues are often a complex
    pair that power iteration cannot separate.
    """
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def _has_cycle(adjacency: np.ndarray) -> bool:
    # A binary matrix has zero spectral radius exactly when its graph is acyclic.
    indeg = (adjacency != 0).sum(axis=0)
    alive = np.ones(len(indeg), dtype=bool)
    frontier = np.flatnonzero(indeg == 0)
    while frontier.size:
        alive[frontier] = False
        indeg = indeg - (adjacency[frontier] != 0).sum(axis=0)
        frontier = np.flatnonzero(alive & (indeg == 0))
    return bool(alive.any())


def build_adjacency(config: ReservoirConfig, seed) -> np.ndarray:
    """Random sparse adjacency rescaled to the configured spectral radius.

    Each of the N^2 entries (diagonal included) is nonzero with probability
    ``mean_degree / N``; nonzero entries are 1 (``weights="binary"``) or
    U(-1, 1) (``weights="uniform"``). Degenerate draws with zero spectral
    radius are redrawn from the same stream, up to 16 times.
    """
    n = config.n_nodes
    p = config.connection_probability
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_REDRAWS):
        mask = rng.random((n, n)) < p
        if not _has_cycle(mask):
            continue
        if config.weights == "binary":
            a0 = mask.astype(float)
            rho = power_iteration(a0, seed=rng.integers(2**63), shift=1.0)
        else:
            a0 = np.where(mask, rng.uniform(-1.0, 1.0, size=(n, n)), 0.0)
            rho = spectral_radius(a0)
        if rho < 1e-9:
            continue
        if attempt:
            log.debug("adjacency redrawn %d time(s)", attempt)
        return a0 * (config.spectral_radius / rho)
    raise NumericalBlowUp(f"no adjacency with nonzero spectral radius after {MAX_REDRAWS} draws", stage="build")


def build_input_matrix(config: ReservoirConfig, seed) -> np.ndarray:
    """Input matrix with entries drawn from U[-input_scale, input_scale].

    ``input_layer="dense"`` fills every entry. ``"weighted"`` splits the
    nodes into ``input_dim`` contiguous, nearly equal blocks and connects
    block i to input component i only; the other entries are zero.
    """
    rng = np.random.default_rng(seed)
    s = config.input_scale
    n, d = config.n_nodes, config.input_dim
    if config.input_layer == "dense":
        return rng.uniform(-s, s, size=(n, d))
    w = np.zeros((n, d))
    values = rng.uniform(-s, s, size=n)
    for i, block in enumerate(np.array_split(np.arange(n), d)):
        w[block, i] = values[block]
    return w


@dataclass
class ReservoirInstance:
    """A built reservoir and its current state.

    The matrices are treated as read-only after construction. ``state``
    and ``last_preactivation`` change as the reservoir is stepped.
    """

    adjacency: np.ndarray
    input_matrix: np.ndarray
    activation: ActivationSpec
    state: Optional[np.ndarray] = None
    last_preactivation: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency must be square")
        if self.input_matrix.shape[0] != n:
            raise ValueError("input_matrix rows must equal the number of nodes")
        if self.state is None:
            self.state = np.zeros(n)
        self._f = Activation(self.activation)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def build(cls, config: ReservoirConfig, activation: ActivationSpec, adjacency_seed, input_seed) -> "ReservoirInstance":
        return cls(build_adjacency(config, adjacency_seed), build_input_matrix(config, input_seed), activation)

    def reset(self, state: Optional[np.ndarray] = None) -> None:
        self.state = np.zeros(self.n_nodes) if state is None else np.array(state, dtype=float)

    def export_csv(self, directory: Union[str, Path]) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / "adjacency.csv", self.adjacency, delimiter=",", fmt="%.17g")
        np.savetxt(d / "w_in.csv", self.input_matrix, delimiter=",", fmt="%.17g")


def step_driven(res: ReservoirInstance, z) -> np.ndarray:
    """One driven update ``r <- f(A r + W_in z)``."""
    pre = res.adjacency @ res.state + res.input_matrix @ np.asarray(z, dtype=float)
    res.last_preactivation = pre
    new = res._f(pre)
    if not np.all(np.isfinite(new)):
        raise NumericalBlowUp("reservoir state became non-finite", step=0, stage="drive")
    res.state = new
    return new


def run_driven(
    res: ReservoirInstance,
    inputs: Union[Trajectory, np.ndarray],
    collect_preactivations: bool = False,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Drive the reservoir with an input series, starting from ``res.state``.

    Returns:
        (states, preactivations): ``states[n]`` is the state produced by
        feeding ``inputs[n]``; ``preactivations`` has the same shape and is
        None unless ``collect_preactivations`` is set.
    """
    z = inputs.samples if isinstance(inputs, Trajectory) else np.asarray(inputs, dtype=float)
    if len(z) == 0:
        raise ValueError("input series is empty")
    drive = z @ res.input_matrix.T
    a, f = res.adjacency, res._f
    t_len, n = drive.shape
    states = np.empty((t_len, n))
    pre_all = np.empty((t_len, n)) if collect_preactivations else None
    r = res.state
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(t_len):
            pre = a @ r
            pre += drive[k]
            r = f(pre)
            if not np.isfinite(r).all():
                raise NumericalBlowUp(f"reservoir state became non-finite at drive step {k}", step=k, stage="drive")
            states[k] = r
            if pre_all is not None:
                pre_all[k] = pre
    res.state = r
    res.last_preactivation = pre
    return states, pre_all


@dataclass
class AutonomousRun:
    predictions: np.ndarray
    states: np.ndarray
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.predictions)


def run_autonomous(res: ReservoirInstance, w_out: np.ndarray, n_steps: int, tau: float = 0.02) -> AutonomousRun:
    """Closed-loop forecast: the readout is fed back as the next input.

    ``predictions[k] = W_out @ states[k]`` and ``states[k+1]`` is the update
    driven by ``predictions[k]``; ``states[0]`` is the state on entry. A
    non-finite prediction stops the run there with ``truncated=True``.
    """
    a, win, f = res.adjacency, res.input_matrix, res._f
    n = res.n_nodes
    preds = np.empty((n_steps, w_out.shape[0]))
    states = np.empty((n_steps, n))
    r = res.state
    stop = n_steps
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            zhat = w_out @ r
            if not np.isfinite(zhat).all():
                stop = k
                break
            preds[k] = zhat
            states[k] = r
            pre = a @ r
            pre += win @ zhat
            r = f(pre)
            if not np.isfinite(r).all():
                stop = k + 1
                break
    res.state = r
    return AutonomousRun(preds[:stop], states[:stop], truncated=stop < n_steps)
