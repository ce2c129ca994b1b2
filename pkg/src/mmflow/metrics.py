"""Distances between discrete measures: total variation and exact p-Wasserstein."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import _backend
from .space import MetricSpace, ProbabilityMeasure, as_weights

FRECHET = "frechet"
WASSERSTEIN = "wasserstein"
MASS_TOL = 1e-9


class UnnormalizedInput(ValueError):
    pass


@dataclass(frozen=True)
class MetricChoice:
    kind: str = WASSERSTEIN
    p: float = 1.0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in (FRECHET, WASSERSTEIN):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not self.p >= 1.0:
            raise ValueError("p must be >= 1")

    @classmethod
    def frechet(cls) -> "MetricChoice":
        return cls(FRECHET)

    @classmethod
    def wasserstein(cls, p: float = 1.0) -> "MetricChoice":
        return cls(WASSERSTEIN, p)

    def to_json(self) -> dict:
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class TransportPlan:
    plan: np.ndarray
    cost: float

    def to_json(self) -> dict:
        return {"plan": self.plan.tolist(), "cost": self.cost}


def total_variation(mu, nu=None) -> float:
    """Total variation norm ``sum |w_i|`` of a signed measure (or of ``mu - nu``)."""
    w = as_weights(mu)
    if nu is not None:
        w = w - as_weights(nu)
    return float(np.abs(w).sum())


def transport_plan(a, b, cost_matrix) -> Tuple[np.ndarray, float]:
    """Exact optimal plan for equal-mass weight vectors ``a``, ``b``.

    Zero atoms are dropped before calling the solver and restored afterward.
    """
    a = as_weights(a)
    b = as_weights(b)
    ia = np.nonzero(a > 0)[0]
    ib = np.nonzero(b > 0)[0]
    plan = np.zeros((a.size, b.size))
    if ia.size == 0 or ib.size == 0:
        return plan, 0.0
    sub, cost = _backend.solve_transport(a[ia], b[ib], cost_matrix[ia[:, None], ib[None, :]])
    plan[ia[:, None], ib[None, :]] = sub
    return plan, cost


def wasserstein(mu, nu, p: float, space: MetricSpace) -> Tuple[float, TransportPlan]:
    """Exact ``W_p(mu, nu)`` and an optimal plan, as a finite transportation problem."""
    a, b = as_weights(mu), as_weights(nu)
    if a.shape != (space.size,) or b.shape != (space.size,):
        raise ValueError("measures must live on the given space")
    if abs(a.sum() - b.sum()) > MASS_TOL:
        raise UnnormalizedInput(f"masses differ: {a.sum()!r} vs {b.sum()!r}")
    if p < 1:
        raise ValueError("p must be >= 1")
    plan, cost = transport_plan(a, b, space.dist**p)
    return max(cost, 0.0) ** (1.0 / p), TransportPlan(plan, cost)


def wasserstein_equal_mass(mu, nu, p: float, space: MetricSpace) -> float:
    """``m * W_p(mu/m, nu/m)`` for nonnegative measures of common mass ``m``."""
    a, b = as_weights(mu), as_weights(nu)
    m = a.sum()
    if abs(m - b.sum()) > MASS_TOL * max(1.0, m):
        raise UnnormalizedInput(f"masses differ: {m!r} vs {b.sum()!r}")
    if m <= 0:
        return 0.0
    return m * wasserstein(a / m, b / m, p, space)[0]


def distance(mu, nu, choice: MetricChoice, space: MetricSpace) -> float:
    if choice.kind == FRECHET:
        return total_variation(mu, nu)
    return wasserstein(mu, nu, choice.p, space)[0]


# Distance objects used by the flow engine ----------------------------------
#
# Besides evaluating d(a, b) they bound the distance travelled along the
# search segments of the flow solver,
#   Dirac:  mu + tau * s * (delta_z - mu)   (s = +1 toward z, -1 away)
#   pair:   mu + tau * (delta_j - delta_i)
# as d(mu_tau, mu) <= lin * tau + root * tau**(1/p). The bound is exact for
# total variation and W_1 (``exact_rays``); from_diracs(mu)[z] = d(delta_z, mu).


class MeasureDistance:
    exact_rays = True
    root_exponent = 1.0

    def dual_floor(self, mu: np.ndarray, prev: np.ndarray):
        """``(c0, phi)`` with ``d(nu, prev)**(1/root_exponent) >= c0 + <phi, nu - mu>``, or None."""
        return None

    def origin_slopes(self, mu: np.ndarray, I=None, J=None):
        """Slopes ``k`` with ``d(mu_tau, mu)**(1/root_exponent) >= k * tau``, or None.

        Dirac segments when ``I`` is None, else the pair segments ``I -> J``.
        """
        return None

    def __call__(self, a, b) -> float:
        raise NotImplementedError

    def many(self, base: np.ndarray, mus: np.ndarray) -> np.ndarray:
        """Distance from each row of ``mus`` to ``base``."""
        return np.array([self(m, base) for m in mus])

    def from_diracs(self, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dirac_coefs(self, mu: np.ndarray):
        """``(lin, root)`` coefficient vectors over z for the Dirac segments."""
        raise NotImplementedError

    def pair_coefs(self, I: np.ndarray, J: np.ndarray):
        """``(lin, root)`` coefficients for the pair segments ``I[k] -> J[k]``."""
        raise NotImplementedError

    def ray_bound(self, lin, root, tau):
        return lin * tau + root * tau**self.root_exponent

    def ray_upper(self, mu: np.ndarray, z: int, tau) -> np.ndarray:
        lin, root = self.dirac_coefs(mu)
        return self.ray_bound(lin[z], root[z], tau)


class FrechetDistance(MeasureDistance):
    def __call__(self, a, b) -> float:
        return total_variation(a, b)

    def many(self, base, mus):
        return np.abs(mus - base[None, :]).sum(axis=1)

    def from_diracs(self, mu):
        return 2.0 * (1.0 - mu)

    def dirac_coefs(self, mu):
        return self.from_diracs(mu), np.zeros_like(mu)

    def pair_coefs(self, I, J):
        lin = np.where(I == J, 0.0, 2.0)
        return lin, np.zeros_like(lin)


class WassersteinDistance(MeasureDistance):
    def __init__(self, space: MetricSpace, p: float = 1.0):
        if p < 1:
            raise ValueError("p must be >= 1")
        self.space = space
        self.p = float(p)
        self.cost = space.dist**self.p
        self.exact_rays = self.p == 1.0
        self.root_exponent = 1.0 / self.p
        self._closure = None

    def __call__(self, a, b) -> float:
        # cost only: skip the plan bookkeeping of transport_plan, this is the hot path
        a, b = as_weights(a), as_weights(b)
        ia, ib = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
        if ia.size == 0 or ib.size == 0:
            return 0.0
        C = self.cost if ia.size == a.size and ib.size == b.size else self.cost[np.ix_(ia, ib)]
        _, cost = _backend.solve_transport(a[ia], b[ib], C)
        return max(cost, 0.0) ** (1.0 / self.p)

    def from_diracs(self, mu):
        return np.maximum(self.cost @ mu, 0.0) ** (1.0 / self.p)

    @property
    def closure(self) -> np.ndarray:
        """Shortest-path closure of the cost ``d**p``: the largest metric below it."""
        if self._closure is None:
            G = self.cost.copy()
            for k in range(G.shape[0]):
                np.minimum(G, G[:, k : k + 1] + G[k : k + 1, :], out=G)
            self._closure = G
        return self._closure

    def origin_slopes(self, mu, I=None, J=None):
        # W_p**p >= W_G, and W_G is a norm of the difference: W_G(mu_tau, mu) = tau * W_G(ray)
        if I is None:
            return self.closure @ mu
        return self.closure[I, J]

    def dual_floor(self, mu, prev):
        # weak duality: W_p**p(nu, prev) >= <phi, nu> + <psi, prev> whenever
        # phi_i + psi_j <= C_ij; phi is the c-transform of the optimal psi
        mu, prev = as_weights(mu), as_weights(prev)
        ia, ib = np.nonzero(mu > 0)[0], np.nonzero(prev > 0)[0]
        _, cost, _, psi = _backend.solve_transport(mu[ia], prev[ib], self.cost[ia[:, None], ib[None, :]], duals=True)
        phi = (self.cost[:, ib] - psi[None, :]).min(axis=1)
        return float(max(cost, 0.0)), phi

    def dirac_coefs(self, mu):
        # ship tau * mu_k between z and every k directly
        return np.zeros_like(mu), self.from_diracs(mu)

    def pair_coefs(self, I, J):
        root = self.space.dist[I, J].astype(np.float64)
        return np.zeros_like(root), root


def make_distance(choice: MetricChoice, space: MetricSpace) -> MeasureDistance:
    if choice.kind == FRECHET:
        return FrechetDistance()
    return WassersteinDistance(space, choice.p)


def as_probability(mu) -> ProbabilityMeasure:
    return mu if isinstance(mu, ProbabilityMeasure) else ProbabilityMeasure(mu)
