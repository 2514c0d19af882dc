"""Activation functions for reservoir nodes.

Every kind is wrapped by an input clamp: ``f(x)`` is evaluated at
``clip(x, -bound, bound)`` so that iterated maps cannot run away. The default
bound is 5 for all kinds; ``bound=None`` disables the clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, ndtr

KINDS = (
    "gelu",
    "hard_swish",
    "logish",
    "mish",
    "mishra",
    "pflu",
    "swish",
    "sigmoid",
    "shifted_tanh",
    "hard_sigmoid",
    "hard_tanh",
    "leaky_relu",
    "monotonic_swish",
    "r_relu",
    "selu",
    "softplus",
)

MONOTONIC = frozenset(
    {
        "sigmoid",
        "shifted_tanh",
        "hard_sigmoid",
        "hard_tanh",
        "leaky_relu",
        "monotonic_swish",
        "r_relu",
        "selu",
        "softplus",
    }
)

SELU_LAMBDA = 1.05070
SELU_ALPHA = 1.67326
RRELU_LOW, RRELU_HIGH = 1.0 / 8.0, 1.0 / 3.0

_USES_BETA = frozenset({"swish", "monotonic_swish"})


@dataclass(frozen=True)
class ActivationSpec:
    """A named activation and its parameters.

    Attributes:
        kind: one of ``KINDS``.
        beta: swish slope (swish, monotonic_swish).
        bias: input shift for shifted_tanh.
        bound: input clamp B >= 0, or None for no clamp.
        leak: negative-side slope of leaky_relu.
        rng_stream: seed of the per-evaluation slope stream used by r_relu.
    """

    kind: str = "swish"
    beta: float = 1.0
    bias: float = 0.0
    bound: Optional[float] = 5.0
    leak: float = 0.01
    rng_stream: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind in _USES_BETA and not self.beta > 0:
            raise ValueError(f"{self.kind} needs beta > 0, got {self.beta}")
        if self.bound is not None and not self.bound >= 0:
            raise ValueError(f"bound must be >= 0 or None, got {self.bound}")

    def with_(self, **changes) -> "ActivationSpec":
        return replace(self, **changes)

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "beta": self.beta,
            "bias": self.bias,
            "bound": "unbounded" if self.bound is None else self.bound,
            "leak": self.leak,
        }

    @classmethod
    def from_config(cls, block: dict) -> "ActivationSpec":
        kw = {}
        if "kind" in block:
            kw["kind"] = str(block["kind"])
        for key in ("beta", "bias", "leak"):
            if key in block:
                kw[key] = float(block[key])
        if "bound" in block:
            b = block["bound"]
            kw["bound"] = None if b is None or str(b).lower() in ("unbounded", "none", "inf") else float(b)
        if "rng_stream" in block:
            kw["rng_stream"] = int(block["rng_stream"])
        return cls(**kw)

    @property
    def label(self) -> str:
        if self.kind in _USES_BETA:
            return f"{self.kind}(beta={self.beta:g})"
        if self.kind == "shifted_tanh":
            return f"shifted_tanh(b={self.bias:g})"
        return self.kind


def classify_monotonic(spec: ActivationSpec) -> bool:
    """Monotonic/non-monotonic split used for the activation comparison table."""
    return spec.kind in MONOTONIC


@lru_cache(maxsize=256)
def argmin_swish(beta: float) -> float:
    """Location of the minimum of ``x * sigmoid(beta * x)``.

    The minimiser scales as ``u / beta`` where ``u`` is the root of
    ``s(u) + u s(u) (1 - s(u)) = 0`` with ``s`` the logistic sigmoid.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    u = brentq(_swish_unit_slope, -10.0, 0.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return u / beta


def _swish_unit_slope(u: float) -> float:
    s = 1.0 / (1.0 + math.exp(-u))
    return s + u * s * (1.0 - s)


def _swish(x, beta):
    return x * expit(beta * x)


def _pflu(x):
    # Nested fraction kept in the published form.
    q = 1.0 + x * x
    sq = np.sqrt(q)
    return x * 0.5 * (1.0 + x / (sq + x / (q * sq)))


def _core(spec: ActivationSpec, x: np.ndarray, slope=None) -> np.ndarray:
    k = spec.kind
    if k == "gelu":
        return x * ndtr(x)
    if k == "hard_swish":
        return x * np.clip((x + 3.0) / 6.0, 0.0, 1.0)
    if k == "logish":
        return x * np.log1p(expit(x))
    if k == "mish":
        return x * np.tanh(np.logaddexp(0.0, x))
    if k == "mishra":
        u = x / (1.0 + np.abs(x))
        return 0.5 * u * u + 0.5 * u
    if k == "pflu":
        return _pflu(x)
    if k == "swish":
        return _swish(x, spec.beta)
    if k == "sigmoid":
        return expit(x)
    if k == "shifted_tanh":
        return np.tanh(x + spec.bias)
    if k == "hard_sigmoid":
        return np.clip((x + 3.0) / 6.0, 0.0, 1.0)
    if k == "hard_tanh":
        return np.clip(x, -1.0, 1.0)
    if k == "leaky_relu":
        return np.maximum(spec.leak * x, x)
    if k == "monotonic_swish":
        xm = argmin_swish(spec.beta)
        return np.where(x > xm, _swish(x, spec.beta), _swish(xm, spec.beta))
    if k == "r_relu":
        return np.maximum(slope * x, x)
    if k == "selu":
        return np.where(x > 0, SELU_LAMBDA * x, SELU_LAMBDA * (SELU_ALPHA * np.expm1(np.minimum(x, 0.0))))
    if k == "softplus":
        return np.logaddexp(0.0, x)
    raise AssertionError(k)


def rrelu_stream(seed) -> np.random.Generator:
    """Counter-based generator for r_relu slopes."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("activation input must be finite")


def evaluate(spec: ActivationSpec, x, rng: Optional[np.random.Generator] = None):
    """Evaluate the clamped activation elementwise.

    For r_relu a fresh slope ``a ~ U(1/8, 1/3)`` is drawn for every element
    from ``rng``; when ``rng`` is None a generator seeded by
    ``spec.rng_stream`` is created (so a single call is reproducible).

    Raises:
        ValueError: on non-finite input.
    """
    arr = np.asarray(x, dtype=float)
    _check_finite(arr)
    scalar = arr.ndim == 0
    if spec.bound is not None:
        arr = np.clip(arr, -spec.bound, spec.bound)
    slope = None
    if spec.kind == "r_relu":
        if rng is None:
            rng = rrelu_stream(spec.rng_stream)
        slope = rng.uniform(RRELU_LOW, RRELU_HIGH, size=arr.shape)
    out = _core(spec, arr, slope)
    return float(out) if scalar else out


class Activation:
    """Callable form of a spec, owning the r_relu slope stream.

    One instance belongs to one reservoir run; it is not shared between
    threads.
    """

    def __init__(self, spec: ActivationSpec):
        self.spec = spec
        self._rng = rrelu_stream(spec.rng_stream) if spec.kind == "r_relu" else None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        s = self.spec
        if s.bound is not None:
            x = np.clip(x, -s.bound, s.bound)
        slope = None
        if self._rng is not None:
            slope = self._rng.uniform(RRELU_LOW, RRELU_HIGH, size=np.shape(x))
        return _core(s, x, slope)


ScalarFunction = Callable[[np.ndarray], np.ndarray]


def _as_function(spec: Union[ActivationSpec, ScalarFunction], x: np.ndarray) -> ScalarFunction:
    if callable(spec) and not isinstance(spec, ActivationSpec):
        return spec
    if spec.kind == "r_relu":
        # One slope per stencil so the three samples see the same function.
        rng = rrelu_stream(spec.rng_stream)
        slope = rng.uniform(RRELU_LOW, RRELU_HIGH, size=np.shape(x))

        def f(z):
            if spec.bound is not None:
                z = np.clip(z, -spec.bound, spec.bound)
            return _core(spec, z, slope)

        return f
    return lambda z: evaluate(spec, z)


def derivative(spec: Union[ActivationSpec, ScalarFunction], x, order: int = 1):
    """Central finite-difference derivative of order 1 or 2.

    The step is ``1e-4 * max(1, |x|)``. At kinks of piecewise-linear kinds
    (and at the clamp edges) the second derivative comes out as a large
    O(1/h) spike rather than a delta function.

    ``spec`` may also be a plain vectorised callable.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    arr = np.asarray(x, dtype=float)
    _check_finite(arr)
    f = _as_function(spec, arr)
    h = 1e-4 * np.maximum(1.0, np.abs(arr))
    fp, fm = f(arr + h), f(arr - h)
    if order == 1:
        out = (fp - fm) / (2.0 * h)
    else:
        out = (fp - 2.0 * f(arr) + fm) / (h * h)
    return float(out) if np.ndim(out) == 0 else out


def table_specs(bound: Optional[float] = 5.0) -> list:
    """The sixteen functions of the comparison table, with its parameters."""
    specs = []
    for kind in KINDS:
        kw = {"kind": kind, "bound": bound}
        if kind in _USES_BETA:
            kw["beta"] = 0.6
        if kind == "shifted_tanh":
            kw["bias"] = 1.0
        specs.append(ActivationSpec(**kw))
    return specs
