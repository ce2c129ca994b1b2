"""Causal action, the function ell, and Euler-Lagrange residuals."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .metrics import MeasureDistance, MetricChoice, make_distance, total_variation, wasserstein
from .space import DimensionMismatch, Kernel, MetricSpace, as_weights

SUPPORT_THRESHOLD = 1e-10


class MissingHoelderMetadata(ValueError):
    pass


def _check(K: Kernel, w: np.ndarray) -> None:
    if w.shape != (K.size,):
        raise DimensionMismatch(f"measure has {w.shape[0]} atoms, kernel is {K.size}x{K.size}")


def action(K: Kernel, mu) -> float:
    """``S(mu) = sum_ij w_i L_ij w_j``."""
    w = as_weights(mu)
    _check(K, w)
    return float(w @ (K.L @ w))


def ell(K: Kernel, mu) -> np.ndarray:
    """``ell(x) = sum_y L(x, y) w_y``."""
    w = as_weights(mu)
    _check(K, w)
    return K.L @ w


@dataclass(frozen=True)
class ElReport:
    """Euler-Lagrange diagnostics of a measure.

    ``exact_residual`` is ``max`` of ell over the support minus its global
    ``min`` (zero iff the EL equations hold). ``approx_residual`` is
    ``min_z [ell(z) + xi/2 d(delta_z, mu)] - S(mu)``; a value ``>= -tol``
    certifies the approximate EL inequality at every grid point.
    """

    ell_values: np.ndarray
    support_indices: np.ndarray
    action: float
    exact_residual: float
    approx_residual: float
    xi: float

    def certified(self, tol: float = 1e-6) -> bool:
        return self.approx_residual >= -tol

    def to_json(self) -> dict:
        d = asdict(self)
        d["ell_values"] = self.ell_values.tolist()
        d["support_indices"] = self.support_indices.tolist()
        return d


def el_report(
    K: Kernel,
    mu,
    xi: float = 0.0,
    choice: Optional[MetricChoice] = None,
    space: Optional[MetricSpace] = None,
    support_threshold: float = SUPPORT_THRESHOLD,
    dist: Optional[MeasureDistance] = None,
) -> ElReport:
    """EL report for ``mu``; the penalty distance is ``dist`` or built from ``choice``."""
    if not 0.0 < support_threshold < 1.0:
        raise ValueError("support_threshold must lie in (0, 1)")
    w = as_weights(mu)
    lv = ell(K, w)
    S = float(w @ lv)
    support = np.nonzero(w > support_threshold)[0]
    exact = float(lv[support].max() - lv.min())
    if xi > 0:
        if dist is None:
            if choice is None:
                raise ValueError("xi > 0 needs a metric choice or a distance")
            dist = make_distance(choice, space)
        penalty = 0.5 * xi * dist.from_diracs(w)
    else:
        penalty = 0.0
    approx = float((lv + penalty).min() - S)
    return ElReport(lv, support, S, exact, approx, float(xi))


def continuity_moduli(
    K: Kernel,
    sample_count: int,
    space: Optional[MetricSpace] = None,
    p: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> dict:
    """Largest observed ratios ``|S(mu) - S(nu)| / d_TV`` and ``/ W_p**alpha``.

    Random pairs are drawn from a flat Dirichlet law, half of them as close
    pairs (small mixtures). The report says whether the ratios respect the
    constants ``2 max|L|`` and ``2 c``.
    """
    if K.alpha is None or K.holder_const is None:
        raise MissingHoelderMetadata("kernel needs alpha and holder_const for the Wasserstein modulus")
    if space is None:
        raise ValueError("the Wasserstein modulus needs the metric space")
    rng = np.random.default_rng() if rng is None else rng
    n = K.size
    lip = 0.0
    hol = 0.0
    for k in range(sample_count):
        mu = rng.dirichlet(np.ones(n))
        nu = rng.dirichlet(np.ones(n))
        if k % 2:
            nu = (1 - 1e-2) * mu + 1e-2 * nu
        dS = abs(action(K, mu) - action(K, nu))
        tv = total_variation(mu, nu)
        if tv > 0:
            lip = max(lip, dS / tv)
        wp = wasserstein(mu, nu, p, space)[0]
        if wp > 0:
            hol = max(hol, dS / wp**K.alpha)
    lip_bound = 2.0 * float(np.abs(K.L).max())
    hol_bound = 2.0 * K.holder_const
    return {
        "lipschitz_estimate": lip,
        "hoelder_estimate": hol,
        "lipschitz_bound": lip_bound,
        "hoelder_bound": hol_bound,
        "lipschitz_ok": lip <= lip_bound + 1e-9,
        "hoelder_ok": hol <= hol_bound + 1e-9,
    }
