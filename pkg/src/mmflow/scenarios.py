"""Prepackaged potential-kernel problems with known flow behavior.

``dirac_scenario``: with ``L(x, y) = (V(x) + V(y))/2 + c |x - y|**2``, ``c > 0``,
the quadratic Wasserstein penalty and a Dirac start, every step of the flow
jumps to a single grid point. The step target minimizes
``V(x) + |x - x_prev|**2 / (2h) + xi |x - x_prev|`` over the grid.

``frechet_split_scenario``: on two points with the total-variation penalty
a Dirac start splits its mass; moving mass ``tau`` to the lower potential
changes the penalized action by
``tau dV + 2 c tau (1 - tau) D**2 + 2 tau**2 / h + 2 xi tau``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flow import DiscreteFlow, FlowConfig, InnerSolverConfig
from .metrics import MetricChoice
from .space import Kernel, MetricSpace, ProbabilityMeasure, build_metric_space, potential_kernel

DIRAC_MASS_TOL = 1e-8


@dataclass
class Scenario:
    space: MetricSpace
    kernel: Kernel
    start: ProbabilityMeasure
    config: FlowConfig
    V: np.ndarray
    c: float


def dirac_scenario(
    coords,
    V,
    c: float,
    h: float,
    xi: float = 0.0,
    start_index: int = 0,
    max_steps: int = 200,
    inner: Optional[InnerSolverConfig] = None,
) -> Scenario:
    if not c > 0:
        raise ValueError("the Dirac behavior needs c > 0")
    sp = build_metric_space(coords=coords)
    V = np.asarray(V, dtype=np.float64)
    K = potential_kernel(V, c, sp)
    cfg = FlowConfig(
        h=h, xi=xi, metric=MetricChoice.wasserstein(2.0), max_steps=max_steps, inner=inner or InnerSolverConfig()
    )
    return Scenario(sp, K, ProbabilityMeasure.dirac(sp.size, start_index), cfg, V, c)


def dirac_step_target(V, space: MetricSpace, prev: int, h: float, xi: float) -> int:
    """Grid index minimizing ``V(x) + d(x, prev)**2 / (2h) + xi d(x, prev)`` (lowest index on ties)."""
    d = space.dist[prev]
    return int(np.argmin(np.asarray(V) + d * d / (2.0 * h) + xi * d))


def dirac_trajectory(flow: DiscreteFlow, tol: float = DIRAC_MASS_TOL) -> dict:
    """Whether every iterate is a single atom, with the atom indices."""
    W = flow.weights()
    top = W.max(axis=1)
    return {
        "dirac_trajectory": bool((top >= 1.0 - tol).all()),
        "atoms": W.argmax(axis=1).tolist(),
        "min_top_mass": float(top.min()),
    }


def frechet_split_scenario(
    V=(1.0, 0.0),
    c: float = 0.01,
    D: float = 1.0,
    h: float = 1.0,
    xi: float = 0.01,
    inner: Optional[InnerSolverConfig] = None,
) -> Scenario:
    """Two points at distance ``D``; the start is the Dirac at the higher potential."""
    V = np.asarray(V, dtype=np.float64)
    sp = build_metric_space(coords=[[0.0], [D]])
    K = potential_kernel(V, c, sp)
    start = ProbabilityMeasure.dirac(2, int(np.argmax(V)))
    cfg = FlowConfig(h=h, xi=xi, metric=MetricChoice.frechet(), max_steps=1, inner=inner or InnerSolverConfig())
    return Scenario(sp, K, start, cfg, V, c)


def frechet_split_objective(tau, V, c: float, D: float, h: float, xi: float):
    """Change of the penalized action when mass ``tau`` moves to the lower potential."""
    V = np.asarray(V, dtype=np.float64)
    dV = V.min() - V.max()
    tau = np.asarray(tau, dtype=np.float64)
    return tau * dV + 2.0 * c * tau * (1.0 - tau) * D**2 + 2.0 * tau**2 / h + 2.0 * xi * tau


def frechet_split_tau(V, c: float, D: float, h: float, xi: float) -> float:
    """Closed-form minimizer on [0, 1] of the split objective."""
    V = np.asarray(V, dtype=np.float64)
    dV = V.min() - V.max()
    a = 2.0 / h - 2.0 * c * D**2  # quadratic coefficient
    b = dV + 2.0 * c * D**2 + 2.0 * xi  # linear coefficient
    cands = [0.0, 1.0]
    if a > 0:
        cands.append(min(max(-b / (2.0 * a), 0.0), 1.0))
    vals = [float(frechet_split_objective(t, V, c, D, h, xi)) for t in cands]
    return float(cands[int(np.argmin(vals))])
