"""Finite metric spaces, discrete measures and Lagrangian kernels.

All objects are immutable after construction: their arrays are marked
read-only so they can be shared between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

TRIANGLE_TOL = 1e-12
NORMALIZATION_TOL = 1e-12


class SpaceError(ValueError):
    """Invalid distance data."""


class TriangleInequalityViolation(SpaceError):
    pass


class AsymmetricDistance(SpaceError):
    pass


class NegativeDistance(SpaceError):
    pass


class KernelError(ValueError):
    """Kernel violates symmetry (A1) or nonnegativity (A2)."""


class AsymmetricKernel(KernelError):
    pass


class NegativeKernelEntry(KernelError):
    pass


class DimensionMismatch(ValueError):
    pass


class InvalidMeasure(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MetricSpace:
    """A finite point set with a validated distance matrix."""

    dist: np.ndarray
    coords: Optional[np.ndarray] = None
    diameter: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "diameter", float(self.dist.max()) if self.dist.size else 0.0)

    @property
    def size(self) -> int:
        return self.dist.shape[0]

    def __len__(self) -> int:
        return self.size


def _check_triangle(d: np.ndarray, tol: float) -> None:
    n = d.shape[0]
    for k in range(n):
        # d[i, j] <= d[i, k] + d[k, j] for all i, j at once
        viol = d - (d[:, k : k + 1] + d[k : k + 1, :])
        if viol.max() > tol:
            i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
            raise TriangleInequalityViolation(
                f"d[{i}][{j}]={d[i, j]!r} exceeds d[{i}][{k}] + d[{k}][{j}]"
            )


def build_metric_space(
    coords: Optional[Sequence] = None,
    dist: Optional[Sequence] = None,
    check_triangle: bool = True,
) -> MetricSpace:
    """Build a :class:`MetricSpace` from Euclidean coordinates or a distance matrix.

    Exactly one of ``coords`` (shape ``(N, dim)`` or ``(N,)``) and ``dist``
    (shape ``(N, N)``) must be given. The triangle inequality check is
    ``O(N^3)``; pass ``check_triangle=False`` to skip it on large grids.
    """
    if (coords is None) == (dist is None):
        raise ValueError("give exactly one of coords or dist")
    xy = None
    if coords is not None:
        xy = np.asarray(coords, dtype=np.float64)
        if xy.ndim == 1:
            xy = xy[:, None]
        if xy.ndim != 2 or xy.shape[0] < 1:
            raise SpaceError("coords must be a nonempty (N, dim) array")
        diff = xy[:, None, :] - xy[None, :, :]
        d = np.sqrt((diff**2).sum(axis=-1))
    else:
        d = np.asarray(dist, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise SpaceError("dist must be a nonempty square matrix")
        if not np.all(np.isfinite(d)):
            raise SpaceError("dist has non-finite entries")
        if (d < 0).any():
            i, j = np.argwhere(d < 0)[0]
            raise NegativeDistance(f"d[{i}][{j}]={d[i, j]!r} < 0")
        if not np.array_equal(d, d.T):
            i, j = np.argwhere(d != d.T)[0]
            raise AsymmetricDistance(f"d[{i}][{j}]={d[i, j]!r} != d[{j}][{i}]={d[j, i]!r}")
        if np.any(np.diag(d) != 0):
            i = int(np.nonzero(np.diag(d))[0][0])
            raise SpaceError(f"d[{i}][{i}]={d[i, i]!r} must be 0")
    if check_triangle:
        _check_triangle(d, TRIANGLE_TOL)
    return MetricSpace(dist=_frozen(d), coords=None if xy is None else _frozen(xy))


@dataclass(frozen=True)
class SignedMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise InvalidMeasure("signed measure weights must be a finite vector")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class ProbabilityMeasure:
    """Nonnegative weights summing to one on the points of a space."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise InvalidMeasure("weights must be a nonempty vector")
        if not np.all(np.isfinite(w)) or (w < 0).any():
            raise InvalidMeasure("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > NORMALIZATION_TOL:
            raise InvalidMeasure(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]

    def __sub__(self, other: "ProbabilityMeasure") -> SignedMeasure:
        return SignedMeasure(self.weights - as_weights(other))

    @classmethod
    def dirac(cls, n: int, i: int) -> "ProbabilityMeasure":
        w = np.zeros(n)
        w[i] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, n: int) -> "ProbabilityMeasure":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, w) -> "ProbabilityMeasure":
        """Build from nonnegative weights, dividing by their total."""
        w = np.asarray(w, dtype=np.float64)
        return cls(w / w.sum())

    def support(self, threshold: float = 0.0) -> np.ndarray:
        return np.nonzero(self.weights > threshold)[0]


def as_weights(mu) -> np.ndarray:
    """Weight vector of a measure object or array-like."""
    if isinstance(mu, (ProbabilityMeasure, SignedMeasure)):
        return mu.weights
    return np.asarray(mu, dtype=np.float64)


@dataclass(frozen=True)
class Kernel:
    """Symmetric nonnegative Lagrangian on the grid.

    ``alpha`` and ``holder_const`` are optional user-supplied Hoelder data
    (exponent in (0, 1] and constant) used by the continuity diagnostics.
    """

    L: np.ndarray
    alpha: Optional[float] = None
    holder_const: Optional[float] = None

    def __post_init__(self):
        L = _frozen(self.L)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise DimensionMismatch("kernel must be a square matrix")
        object.__setattr__(self, "L", L)
        if self.alpha is not None and not (0.0 < self.alpha <= 1.0):
            raise ValueError("Hoelder exponent must lie in (0, 1]")
        if self.holder_const is not None and self.holder_const < 0:
            raise ValueError("Hoelder constant must be nonnegative")

    @property
    def size(self) -> int:
        return self.L.shape[0]

    def scaled(self, a: float) -> "Kernel":
        return Kernel(a * self.L, self.alpha, None if self.holder_const is None else a * self.holder_const)


def validate_kernel(K: Kernel, space: Optional[MetricSpace] = None) -> None:
    """Raise unless ``K`` is exactly symmetric (A1) and nonnegative (A2)."""
    L = K.L
    if space is not None and L.shape[0] != space.size:
        raise DimensionMismatch(f"kernel is {L.shape[0]}x{L.shape[0]}, space has {space.size} points")
    if not np.all(np.isfinite(L)):
        raise KernelError("kernel has non-finite entries")
    if (L < 0).any():
        i, j = np.argwhere(L < 0)[0]
        raise NegativeKernelEntry(f"(A2) L[{i}][{j}]={L[i, j]!r} < 0")
    if not np.array_equal(L, L.T):
        i, j = np.argwhere(L != L.T)[0]
        raise AsymmetricKernel(f"(A1) L[{i}][{j}]={L[i, j]!r} != L[{j}][{i}]={L[j, i]!r}")


def potential_kernel(V, c: float, space: MetricSpace) -> Kernel:
    """``L[i, j] = (V[i] + V[j]) / 2 + c * dist[i, j]**2``."""
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (space.size,):
        raise DimensionMismatch(f"V has shape {V.shape}, space has {space.size} points")
    if c < 0:
        raise ValueError("c must be nonnegative")
    L = 0.5 * (V[:, None] + V[None, :]) + c * space.dist**2
    K = Kernel(L)
    validate_kernel(K, space)
    return K


def potential_kernel_lipschitz(V, c: float, space: MetricSpace) -> float:
    """Lipschitz constant (per argument) of the potential kernel on the grid.

    ``|L(x', y) - L(x, y)| <= (Lip(V)/2 + 2 c diam) d(x, x')``.
    """
    V = np.asarray(V, dtype=np.float64)
    d = space.dist
    off = d > 0
    lip_v = float((np.abs(V[:, None] - V[None, :])[off] / d[off]).max()) if off.any() else 0.0
    return 0.5 * lip_v + 2.0 * c * space.diameter


# JSON ingestion ------------------------------------------------------------


def space_from_json(obj) -> MetricSpace:
    if isinstance(obj, (str, Path)):
        obj = json.loads(Path(obj).read_text())
    if "coords" in obj:
        return build_metric_space(coords=obj["coords"], check_triangle=obj.get("check_triangle", True))
    if "dist" in obj:
        return build_metric_space(dist=obj["dist"], check_triangle=obj.get("check_triangle", True))
    raise SpaceError('space needs "coords" or "dist"')


def kernel_from_json(obj, space: MetricSpace) -> Kernel:
    if isinstance(obj, (str, Path)):
        obj = json.loads(Path(obj).read_text())
    if "matrix" in obj:
        K = Kernel(np.asarray(obj["matrix"], dtype=np.float64), obj.get("alpha"), obj.get("holder_const"))
        validate_kernel(K, space)
        return K
    if "potential" in obj:
        pot = obj["potential"]
        return potential_kernel(pot["V"], float(pot.get("c", 0.0)), space)
    raise KernelError('kernel needs "matrix" or "potential"')
