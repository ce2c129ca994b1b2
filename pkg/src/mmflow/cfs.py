"""Causal fermion systems on a finite operator grid.

The grid points are real symmetric ``f x f`` operators of trace one with at
most ``n`` positive and ``n`` negative eigenvalues. Each operator ``x`` is
written as ``x = f(x) p`` with ``f(x) = ||x||`` (operator norm) and ``p`` on
the unit sphere, so a state (a probability vector ``m0`` on the grid) has
moment weights ``m_l = f**l * m0``. The kappa-Lagrangian is homogeneous of
degree two, which gives the identity ``S = sum L(p_k, p_l) m2_k m2_l``.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .flow import DiscreteFlow, FlowConfig, run_flow
from .metrics import FRECHET, MeasureDistance, MetricChoice, total_variation, wasserstein_equal_mass
from .metrics import WassersteinDistance
from .space import Kernel, MetricSpace, ProbabilityMeasure, as_weights, build_metric_space, validate_kernel

SYMMETRY_TOL = 1e-12
TRACE_TOL = 1e-10
ZERO_EIG = 1e-10
RANK_TOL = 1e-8
KERNEL_SYMMETRY_TOL = 1e-9
DEFAULT_Q = 3.0


class CfsError(ValueError):
    pass


class NotSymmetric(CfsError):
    pass


class TraceViolation(CfsError):
    pass


class SignatureViolation(CfsError):
    pass


class RankOverflow(CfsError):
    pass


class QOutOfRange(ValueError):
    pass


class EmbeddingMismatch(CfsError):
    pass


def threads() -> int:
    """Worker cap from ``MMFLOW_THREADS`` (default: CPU count)."""
    env = os.environ.get("MMFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def operator_norm(x: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(x)).max())


@dataclass(frozen=True)
class SymOperator:
    """Trace-one symmetric operator with the spin-dimension signature bound."""

    matrix: np.ndarray
    n: int
    eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.array(self.matrix, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise CfsError("operator must be a square matrix")
        if np.abs(x - x.T).max(initial=0.0) > SYMMETRY_TOL:
            raise NotSymmetric("operator is not symmetric")
        x = 0.5 * (x + x.T)
        tr = float(np.trace(x))
        if abs(tr - 1.0) > TRACE_TOL:
            raise TraceViolation(f"trace constraint tr x = 1 violated: tr x = {tr!r}")
        ev = np.linalg.eigvalsh(x)
        pos, neg = int((ev > ZERO_EIG).sum()), int((ev < -ZERO_EIG).sum())
        if pos > self.n or neg > self.n:
            raise SignatureViolation(
                f"operator has {pos} positive and {neg} negative eigenvalues, at most {self.n} of each allowed"
            )
        x.setflags(write=False)
        ev.setflags(write=False)
        object.__setattr__(self, "matrix", x)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        return float(np.abs(self.eigenvalues).max())


def _lagrangian_from_eigs(eigs: np.ndarray, n: int, kappa: float, tol: np.ndarray) -> np.ndarray:
    """kappa-Lagrangian from the eigenvalues of products, batched over leading axes."""
    mod = np.sort(np.abs(eigs), axis=-1)[..., ::-1]
    f = mod.shape[-1]
    k = 2 * n
    if f > k:
        over = mod[..., k]
        if (over > tol).any():
            idx = np.unravel_index(int(np.argmax(over - tol)), over.shape)
            raise RankOverflow(f"product at {idx} has {k + 1}-th eigenvalue modulus {over[idx]!r} above tolerance")
        lam = mod[..., :k]
    else:
        lam = np.concatenate([mod, np.zeros(mod.shape[:-1] + (k - f,))], axis=-1)
    diff = lam[..., :, None] - lam[..., None, :]
    spread = (diff**2).sum(axis=(-2, -1)) / (4.0 * n)
    return spread + kappa * lam.sum(axis=-1) ** 2


def _as_matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, SymOperator) else np.asarray(x, dtype=np.float64)


def kappa_lagrangian(x, y, n: int, kappa: float, rank_tolerance: float = RANK_TOL) -> float:
    """``(1/4n) sum_ij (|l_i| - |l_j|)**2 + kappa (sum_j |l_j|)**2`` over the top ``2n`` eigenvalues of ``xy``."""
    X, Y = _as_matrix(x), _as_matrix(y)
    if X.shape != Y.shape:
        raise CfsError(f"operators have shapes {X.shape} and {Y.shape}")
    eigs = np.linalg.eigvals(X @ Y)
    tol = rank_tolerance * operator_norm(X) * operator_norm(Y)
    return float(_lagrangian_from_eigs(eigs, n, kappa, np.asarray(tol)))


def _kernel_matrix(mats: np.ndarray, n: int, kappa: float, rank_tolerance: float) -> np.ndarray:
    norms = np.array([operator_norm(m) for m in mats])
    N = mats.shape[0]

    def row(i):
        eigs = np.linalg.eigvals(mats[i][None] @ mats)
        return _lagrangian_from_eigs(eigs, n, kappa, rank_tolerance * norms[i] * norms)

    workers = min(threads(), N)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(row, range(N)))
    else:
        rows = [row(i) for i in range(N)]
    return np.array(rows)


@dataclass(frozen=True)
class CfsGrid:
    """Discretized operator space: trace-one operators with sphere points and scales."""

    operators: List[SymOperator]
    n: int
    kappa: float
    rank_tolerance: float = RANK_TOL
    sphere: np.ndarray = field(init=False, repr=False)
    scales: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.kappa > 0:
            raise CfsError("kappa must be > 0")
        if self.n < 1:
            raise CfsError("spin dimension n must be >= 1")
        if not self.operators:
            raise CfsError("grid needs at least one operator")
        ops = [o if isinstance(o, SymOperator) else SymOperator(o, self.n) for o in self.operators]
        dims = {o.dim for o in ops}
        if len(dims) != 1:
            raise CfsError(f"operators have mixed dimensions {sorted(dims)}")
        f = np.array([o.norm for o in ops])
        p = np.array([o.matrix / s for o, s in zip(ops, f)])
        if np.abs(f * np.trace(p, axis1=1, axis2=2) - 1.0).max() > TRACE_TOL:
            raise TraceViolation("scale times trace of sphere point differs from 1")
        f.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "scales", f)
        object.__setattr__(self, "sphere", p)

    @property
    def size(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    def matrices(self) -> np.ndarray:
        return np.array([o.matrix for o in self.operators])

    def sphere_space(self) -> MetricSpace:
        """Sphere points with the operator-norm distance."""
        P = self.sphere
        d = np.array([[operator_norm(a - b) for b in P] for a in P])
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return build_metric_space(dist=d, check_triangle=False)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "kappa": self.kappa,
            "operators": [o.matrix.ravel().tolist() for o in self.operators],
        }


def grid_from_json(obj) -> CfsGrid:
    if isinstance(obj, (str, Path)):
        obj = json.loads(Path(obj).read_text())
    f = int(obj["dim"])
    ops = []
    for k, flat in enumerate(obj["operators"]):
        a = np.asarray(flat, dtype=np.float64)
        if a.size != f * f:
            raise CfsError(f"operator {k} has {a.size} entries, expected {f * f}")
        ops.append(a.reshape(f, f))
    return CfsGrid(ops, int(obj["n"]), float(obj["kappa"]), float(obj.get("rank_tolerance", RANK_TOL)))


def _symmetrize(L: np.ndarray) -> np.ndarray:
    asym = float(np.abs(L - L.T).max(initial=0.0))
    if asym > KERNEL_SYMMETRY_TOL * max(1.0, float(np.abs(L).max(initial=0.0))):
        raise CfsError(f"kappa-Lagrangian asymmetry {asym!r} exceeds tolerance")
    return 0.5 * (L + L.T)


def raw_cfs_kernel(grid: CfsGrid) -> np.ndarray:
    """Entries ``L(x_i, x_j)`` before symmetrization."""
    return _kernel_matrix(grid.matrices(), grid.n, grid.kappa, grid.rank_tolerance)


def build_cfs_kernel(grid: CfsGrid) -> Kernel:
    K = Kernel(np.maximum(_symmetrize(raw_cfs_kernel(grid)), 0.0))
    validate_kernel(K)
    return K


def sphere_kernel(grid: CfsGrid) -> Kernel:
    """Kernel on the sphere points ``p_k``, computed from the ``p_k`` themselves."""
    L = _kernel_matrix(np.array(grid.sphere), grid.n, grid.kappa, grid.rank_tolerance)
    return Kernel(np.maximum(_symmetrize(L), 0.0))


@dataclass(frozen=True)
class MomentSet:
    m0: ProbabilityMeasure
    m1: np.ndarray
    m2: np.ndarray

    def cauchy_schwarz_ok(self, subset: Sequence[int], tol: float = 1e-12) -> bool:
        idx = np.asarray(subset, dtype=int)
        a, b, c = self.m0.weights[idx].sum(), self.m1[idx].sum(), self.m2[idx].sum()
        return bool(b * b <= a * c + tol * max(1.0, a * c))


def to_moments(state, grid: CfsGrid) -> MomentSet:
    w = np.array(as_weights(state))
    if w.shape != (grid.size,):
        raise CfsError(f"state has {w.size} weights, grid has {grid.size} points")
    f = grid.scales
    m1, m2 = f * w, f * f * w
    m1.setflags(write=False)
    m2.setflags(write=False)
    return MomentSet(ProbabilityMeasure(w), m1, m2)


def action_via_moments(moments: MomentSet, sphere_K: Kernel) -> float:
    return float(moments.m2 @ (sphere_K.L @ moments.m2))


# distance on the pair space --------------------------------------------------


class CfsDistance(MeasureDistance):
    """``d(m_a, m_b) + d(f**q m_a, f**q m_b)`` on a fixed grid.

    The first term is the chosen metric on the sphere points (operator-norm
    distance for Wasserstein). The weighted term is total variation unless
    ``weighted_metric`` is Wasserstein, which then uses the equal-mass
    convention and falls back to total variation for unequal masses.
    """

    def __init__(self, grid: CfsGrid, choice: MetricChoice, q: float = DEFAULT_Q, weighted_metric: str = FRECHET):
        if not q > 2:
            raise QOutOfRange(f"q must be > 2, got {q!r}")
        self.grid = grid
        self.choice = choice
        self.q = float(q)
        self.fq = grid.scales**self.q
        self.weighted_metric = weighted_metric
        self.space = grid.sphere_space() if (choice.kind != FRECHET or weighted_metric != FRECHET) else None
        if choice.kind == FRECHET:
            self.base = None
            self.exact_rays = True
            self.root_exponent = 1.0
        else:
            self.base = WassersteinDistance(self.space, choice.p)
            self.exact_rays = self.base.exact_rays
            self.root_exponent = self.base.root_exponent
        if weighted_metric != FRECHET:
            self.exact_rays = False

    def _weighted(self, a, b) -> float:
        ua, ub = self.fq * a, self.fq * b
        if self.weighted_metric == FRECHET:
            return float(np.abs(ua - ub).sum())
        if abs(ua.sum() - ub.sum()) > 1e-12 * max(1.0, ua.sum()):
            return float(np.abs(ua - ub).sum())
        return wasserstein_equal_mass(ua, ub, self.choice.p, self.space)

    def __call__(self, a, b) -> float:
        a, b = as_weights(a), as_weights(b)
        first = total_variation(a, b) if self.base is None else self.base(a, b)
        return first + self._weighted(a, b)

    def many(self, base, mus):
        if self.base is None and self.weighted_metric == FRECHET:
            diff = np.abs(mus - base[None, :])
            return diff.sum(axis=1) + diff @ self.fq
        return np.array([self(m, base) for m in mus])

    def from_diracs(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        n = mu.size
        first = 2.0 * (1.0 - mu) if self.base is None else self.base.from_diracs(mu)
        if self.weighted_metric == FRECHET:
            tv = self.fq @ mu - self.fq * mu + self.fq * (1.0 - mu)
            return first + tv
        return first + np.array([self._weighted(np.eye(n)[z], mu) for z in range(n)])

    def _weighted_dirac_lin(self, mu):
        # sum_k fq_k |e_z - mu|_k, an upper bound for any weighted metric
        return self.fq @ mu - self.fq * mu + self.fq * (1.0 - mu)

    def dirac_coefs(self, mu):
        wl = self._weighted_dirac_lin(mu)
        if self.base is None:
            return 2.0 * (1.0 - mu) + wl, np.zeros_like(mu)
        return wl, self.base.from_diracs(mu)

    def pair_coefs(self, I, J):
        wl = np.where(I == J, 0.0, self.fq[I] + self.fq[J])
        if self.base is None:
            return np.where(I == J, 0.0, 2.0) + wl, np.zeros_like(wl)
        return wl, self.space.dist[I, J].astype(np.float64)


def cfs_distance(
    a,
    b,
    q: float,
    choice: MetricChoice,
    grid: CfsGrid,
    weighted_metric: str = FRECHET,
) -> float:
    return CfsDistance(grid, choice, q, weighted_metric)(as_weights(a), as_weights(b))


@dataclass(frozen=True)
class CfsState:
    weights: ProbabilityMeasure

    @classmethod
    def uniform(cls, grid: CfsGrid) -> "CfsState":
        return cls(ProbabilityMeasure.uniform(grid.size))


def _state_weights(start) -> np.ndarray:
    if isinstance(start, CfsState):
        return start.weights.weights
    return as_weights(start)


def run_cfs_flow(
    start,
    grid: CfsGrid,
    cfg: FlowConfig,
    q: float = DEFAULT_Q,
    weighted_metric: str = FRECHET,
    kernel: Optional[Kernel] = None,
) -> DiscreteFlow:
    """Minimizing movements for the causal action with the pair-space distance."""
    K = build_cfs_kernel(grid) if kernel is None else kernel
    dist = CfsDistance(grid, cfg.metric, q, weighted_metric)
    return run_flow(ProbabilityMeasure(_state_weights(start)), K, cfg, dist=dist)


def embedding(small: CfsGrid, large: CfsGrid) -> np.ndarray:
    """Indices in ``large`` of the zero-padded operators of ``small``."""
    fs, fl = small.dim, large.dim
    if fs > fl:
        raise EmbeddingMismatch(f"cannot embed dimension {fs} into {fl}")
    big = large.matrices()
    out = []
    for k, op in enumerate(small.operators):
        pad = np.zeros((fl, fl))
        pad[:fs, :fs] = op.matrix
        hit = np.nonzero(np.all(big == pad[None], axis=(1, 2)))[0]
        if hit.size == 0:
            raise EmbeddingMismatch(f"operator {k} of the smaller grid has no zero-padded copy")
        out.append(int(hit[0]))
    if small.n != large.n or small.kappa != large.kappa:
        raise EmbeddingMismatch("stages must share spin dimension and kappa")
    return np.array(out)


@dataclass
class FiltrationResult:
    flows: List[DiscreteFlow]
    kernels: List[Kernel]
    embeddings: List[np.ndarray]

    def concatenated_actions(self) -> List[float]:
        out = list(self.flows[0].actions)
        for f in self.flows[1:]:
            out.extend(f.actions[1:])
        return out


def filtration_flow(
    grids: Sequence[CfsGrid],
    start,
    cfg: FlowConfig,
    xi_schedule: Sequence[float],
    q: float = DEFAULT_Q,
    weighted_metric: str = FRECHET,
) -> FiltrationResult:
    """Run the flow stage by stage, embedding each limit as the next start."""
    if len(grids) != len(xi_schedule):
        raise ValueError("need one xi per stage")
    if any(b > a for a, b in zip(xi_schedule, xi_schedule[1:])):
        raise ValueError("xi_schedule must be nonincreasing")
    embs = [embedding(a, b) for a, b in zip(grids, grids[1:])]
    flows, kernels = [], []
    w = _state_weights(start)
    for k, (grid, xi) in enumerate(zip(grids, xi_schedule)):
        if k > 0:
            nw = np.zeros(grid.size)
            nw[embs[k - 1]] = w
            w = nw
        K = build_cfs_kernel(grid)
        f = run_cfs_flow(w, grid, replace(cfg, xi=float(xi)), q, weighted_metric, kernel=K)
        flows.append(f)
        kernels.append(K)
        w = np.array(f.final.weights)
    return FiltrationResult(flows, kernels, embs)


# grid constructors -----------------------------------------------------------


def rank_one_projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    v = v / np.linalg.norm(v)
    return np.outer(v, v)


def projector_grid(dim: int, n: int = 1, kappa: float = 1.0, extra: Sequence[np.ndarray] = ()) -> CfsGrid:
    """Coordinate rank-one projectors ``e_k e_k^T`` plus optional extra operators."""
    ops = [rank_one_projector(np.eye(dim)[k]) for k in range(dim)]
    ops.extend(np.asarray(e, dtype=np.float64) for e in extra)
    return CfsGrid(ops, n, kappa)


def random_operator(dim: int, n: int, rng: np.random.Generator, rank: Optional[int] = None) -> np.ndarray:
    """Random trace-one symmetric operator with at most ``n`` eigenvalues of each sign."""
    r = rank if rank is not None else int(rng.integers(1, min(2 * n, dim) + 1))
    r = min(r, 2 * n, dim)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    npos = min(n, r)
    nneg = r - npos
    pos = rng.uniform(0.2, 1.0, npos)
    neg = -rng.uniform(0.05, 0.3, nneg) * pos.sum() / max(nneg, 1) * 0.5
    ev = np.concatenate([pos, neg])
    ev = ev / ev.sum()
    U = Q[:, :r]
    x = (U * ev) @ U.T
    return 0.5 * (x + x.T)
