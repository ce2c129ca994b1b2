"""Minimizing movements for the penalized causal action on a finite grid.

One step minimizes ``S(mu) + d(mu, prev)**2 / (2 h) + xi * d(mu, prev)``
over probability vectors. The inner solver is a coordinate sweep over the
Dirac segments ``mu + tau * s * (delta_z - mu)`` (``s = +1`` moves mass
toward ``z``, ``s = -1`` drains it), with a sampled line search refined by
golden sections. Moves are only ever accepted when the penalized action
strictly drops, so every step satisfies the monotonicity inequalities by
construction.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .action import SUPPORT_THRESHOLD, ElReport, action, el_report
from .metrics import MeasureDistance, MetricChoice, make_distance
from .space import Kernel, MetricSpace, ProbabilityMeasure, as_weights

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
INEQ_TOL = 1e-10
# absolute slack on convexity chords, absorbs rounding in the exact distances
CHORD_SLACK = 1e-12


class NotConverged(RuntimeError):
    pass


class XiZeroReparametrization(ValueError):
    pass


@dataclass(frozen=True)
class InnerSolverConfig:
    tau_samples: int = 33
    refine_iters: int = 40
    sweep_rounds: int = 200
    improvement_tolerance: float = 1e-13
    # geometric samples tau_max * 2**-k, k = 1..small_taus, catch tiny optimal steps
    small_taus: int = 30
    away_steps: bool = True
    # transfers mu + eps (delta_j - delta_i) between grid points
    pair_moves: bool = True

    def __post_init__(self):
        if self.tau_samples < 3:
            raise ValueError("tau_samples must be >= 3")
        if self.refine_iters < 0 or self.sweep_rounds < 1 or self.small_taus < 0:
            raise ValueError("solver iteration counts must be positive")
        if not self.improvement_tolerance > 0:
            raise ValueError("improvement_tolerance must be > 0")


@dataclass(frozen=True)
class FlowConfig:
    h: float
    xi: float = 0.0
    metric: MetricChoice = field(default_factory=MetricChoice)
    max_steps: int = 10000
    step_tolerance: float = 1e-9
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be > 0")
        if not self.xi >= 0:
            raise ValueError("xi must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.step_tolerance > 0:
            raise ValueError("step_tolerance must be > 0")

    def penalty(self, d):
        return d * d / (2.0 * self.h) + self.xi * d

    def to_json(self) -> dict:
        return {
            "h": self.h,
            "xi": self.xi,
            "metric": self.metric.to_json(),
            "max_steps": self.max_steps,
            "step_tolerance": self.step_tolerance,
            "inner": {
                "tau_samples": self.inner.tau_samples,
                "refine_iters": self.inner.refine_iters,
                "sweep_rounds": self.inner.sweep_rounds,
                "improvement_tolerance": self.inner.improvement_tolerance,
            },
        }


@dataclass
class DiscreteFlow:
    """Iterates ``rho_0 .. rho_J`` with their actions and step distances.

    ``step_distances[0]`` is 0 by convention; ``step_distances[j]`` is
    ``d(rho_j, rho_{j-1})``.
    """

    measures: List[ProbabilityMeasure]
    actions: List[float]
    step_distances: List[float]
    config: FlowConfig
    converged: bool
    distance: MeasureDistance = field(repr=False, default=None)

    @property
    def steps(self) -> int:
        return len(self.measures) - 1

    @property
    def final(self) -> ProbabilityMeasure:
        return self.measures[-1]

    def weights(self) -> np.ndarray:
        return np.array([m.weights for m in self.measures])

    def inequality_report(self, tol: float = INEQ_TOL) -> dict:
        """Per-inequality pass/fail counts over all steps."""
        s = np.asarray(self.actions)
        d = np.asarray(self.step_distances)[1:]
        drop = s[:-1] - s[1:]
        h, xi = self.config.h, self.config.xi
        mono = drop >= -tol
        if xi > 0:
            lip = d <= drop / xi + tol
        else:
            lip = np.ones_like(mono)
        hold = d <= np.sqrt(2.0 * h * np.maximum(drop, 0.0)) + tol
        return {
            "monotone": {"pass": int(mono.sum()), "fail": int((~mono).sum())},
            "xi_lipschitz": {"pass": int(lip.sum()), "fail": int((~lip).sum()), "applies": xi > 0},
            "hoelder_step": {"pass": int(hold.sum()), "fail": int((~hold).sum())},
        }


def _resolve_distance(cfg: FlowConfig, space: Optional[MetricSpace], dist: Optional[MeasureDistance]):
    if dist is not None:
        return dist
    if cfg.metric.kind == "wasserstein" and space is None:
        raise ValueError("the Wasserstein metric needs the metric space")
    return make_distance(cfg.metric, space)


def penalized_action(
    mu,
    prev,
    K: Kernel,
    cfg: FlowConfig,
    space: Optional[MetricSpace] = None,
    dist: Optional[MeasureDistance] = None,
) -> float:
    """``S(mu) + d(mu, prev)**2 / (2 h) + xi d(mu, prev)``."""
    dist = _resolve_distance(cfg, space, dist)
    d = dist(as_weights(mu), as_weights(prev))
    return action(K, mu) + cfg.penalty(d)


class _Segment:
    """Penalized action along ``w + tau v`` for one candidate direction ``v``."""

    def __init__(self, w, prev, v, S, lin, quad, coefs, tau_max, cfg, dist, d_cur, floor=None):
        self.w, self.prev, self.v = w, prev, v
        self.S, self.lin, self.quad = S, lin, quad
        self.coefs, self.tau_max = coefs, tau_max
        self.cfg, self.dist, self.d_cur = cfg, dist, d_cur
        # (c0, slope): d(w + tau v, prev)**(1/root_exponent) >= c0 + slope * tau
        self.floor = floor

    def lower_distance(self, taus):
        low = np.maximum(self.d_cur - self.dist.ray_bound(*self.coefs, taus), 0.0)
        if self.floor is not None:
            c = np.maximum(self.floor[0] + self.floor[1] * taus, 0.0)
            low = np.maximum(low, c**self.dist.root_exponent)
        return low

    def point(self, tau):
        mu = self.w + tau * self.v
        np.maximum(mu, 0.0, out=mu)
        return mu

    def action(self, tau):
        return self.S + 2.0 * tau * self.lin + tau * tau * self.quad

    def value(self, tau: float) -> float:
        return self.values(np.array([tau]))[0]

    def values(self, taus: np.ndarray) -> np.ndarray:
        dist = self.dist
        if self.d_cur == 0.0 and dist.exact_rays:
            # w == prev: the distance along the segment is known in closed form
            d = dist.ray_bound(*self.coefs, taus)
        else:
            mus = np.maximum(self.w[None, :] + taus[:, None] * self.v[None, :], 0.0)
            d = dist.many(self.prev, mus)
        return self.action(taus) + self.cfg.penalty(d)


def _tau_base(inner: InnerSolverConfig) -> np.ndarray:
    uni = np.arange(1, inner.tau_samples) / (inner.tau_samples - 1)
    geo = 0.5 ** np.arange(1, inner.small_taus + 1)
    return np.unique(np.concatenate([geo, uni]))


def _line_search(seg: _Segment, phi_cur: float, base: np.ndarray, inner: InnerSolverConfig):
    """Best strictly improving ``(tau, value)`` on the segment, or None.

    The distance's ray bound dominates ``d(w + tau v, w)``, so ``d_cur`` minus that
    bounds the distance to ``prev`` from below; samples whose lower bound
    cannot beat ``phi_cur`` skip the exact distance.

    For transport distances ``c(tau) = d(w + tau v, prev)**p`` is convex in
    ``tau``, so the chord through the last two exact samples, extended to the
    right, bounds ``c`` from below at every larger ``tau``.
    """
    cfg = seg.cfg
    taus = seg.tau_max * base
    lower = seg.action(taus) + cfg.penalty(seg.lower_distance(taus))
    mask = lower < phi_cur
    if not mask.any():
        return None
    vals = np.full(taus.shape, np.inf)
    if seg.floor is None:
        vals[mask] = seg.values(taus[mask])
    else:
        e = seg.dist.root_exponent
        best = phi_cur
        t_a = c_a = None
        t_b, c_b = 0.0, seg.d_cur ** (1.0 / e)
        for k in np.nonzero(mask)[0]:  # taus ascend
            t = taus[k]
            if t_a is not None:
                cl = c_b + (t - t_b) * (c_b - c_a) / (t_b - t_a)
                cl -= CHORD_SLACK * max(c_b, 1.0)
                if seg.action(t) + cfg.penalty(max(cl, 0.0) ** e) >= best:
                    continue
            d = float(seg.dist.many(seg.prev, seg.point(t)[None, :])[0])
            vals[k] = seg.action(t) + cfg.penalty(d)
            best = min(best, vals[k])
            t_a, c_a, t_b, c_b = t_b, c_b, t, d ** (1.0 / e)
    k = int(np.argmin(vals))
    best_tau, best_val = float(taus[k]), float(vals[k])
    if best_val >= phi_cur:
        return None
    if inner.refine_iters:
        a = float(taus[k - 1]) if k > 0 else 0.0
        b = float(taus[k + 1]) if k + 1 < taus.size else seg.tau_max
        x1 = b - GOLDEN * (b - a)
        x2 = a + GOLDEN * (b - a)
        f1, f2 = seg.value(x1), seg.value(x2)
        for _ in range(inner.refine_iters):
            if f1 <= f2:
                b, x2, f2 = x2, x1, f1
                x1 = b - GOLDEN * (b - a)
                f1 = seg.value(x1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + GOLDEN * (b - a)
                f2 = seg.value(x2)
        for t, f in ((x1, f1), (x2, f2)):
            if f < best_val and t > 0:
                best_tau, best_val = t, f
    return best_tau, best_val


class _State:
    """Current iterate with cached ``L w``, ``S`` and distance to ``prev``."""

    def __init__(self, w, prev, L, cfg, dist):
        self.prev, self.L, self.cfg, self.dist = prev, L, cfg, dist
        self.set(w, 0.0 if np.array_equal(w, prev) else dist(w, prev))

    def set(self, w, d):
        self.w = w
        self.lv = self.L @ w
        self.S = float(w @ self.lv)
        self.d = d
        self.phi = self.S + self.cfg.penalty(d)
        self._dual = False

    @property
    def dual(self):
        """The distance's dual floor at ``w``, computed on demand (None if unavailable)."""
        if self._dual is False:
            self._dual = None if self.d == 0.0 else self.dist.dual_floor(self.w, self.prev)
        return self._dual

    def floor(self, kind: str, I=None, J=None):
        """``(c0, slopes)`` of the distance floor along toward (or pair) directions, or None.

        Away segments use the negated slopes, except at ``w == prev`` where the
        origin slopes hold for both orientations.
        """
        if self.d == 0.0:
            if self.dist.exact_rays:
                return None
            k = self.dist.origin_slopes(self.w, I, J) if kind == "pair" else self.dist.origin_slopes(self.w)
            return None if k is None else (0.0, k)
        if self.dual is None:
            return None
        c0, phi = self.dual
        if kind == "pair":
            return c0, phi[J] - phi[I]
        return c0, phi - phi @ self.w

    def segment(self, kind: str, i: int, j: int = -1) -> Optional[_Segment]:
        w, lv, S, L = self.w, self.lv, self.S, self.L
        floor = None
        if kind == "pair":
            if w[i] <= 0.0:
                return None
            v = np.zeros_like(w)
            v[j] += 1.0
            v[i] -= 1.0
            lin = lv[j] - lv[i]
            quad = L[j, j] - 2.0 * L[i, j] + L[i, i]
            lin_c, root_c = self.dist.pair_coefs(np.array([i]), np.array([j]))
            coefs, tau_max = (lin_c[0], root_c[0]), w[i]
            fl = self.floor("pair", np.array([i]), np.array([j]))
            if fl is not None:
                floor = (fl[0], float(fl[1][0]))
        else:
            if w[i] >= 1.0 or (kind == "away" and w[i] <= 0.0):
                return None
            v = -w.copy()
            v[i] += 1.0
            lin = lv[i] - S
            quad = L[i, i] - 2.0 * lv[i] + S
            lin_c, root_c = self.dist.dirac_coefs(w)
            coefs = (lin_c[i], root_c[i])
            tau_max = 1.0
            if kind == "away":
                v, lin, tau_max = -v, -lin, w[i] / (1.0 - w[i])
            fl = self.floor("dirac")
            if fl is not None:
                slope = float(fl[1][i])
                floor = (fl[0], -slope if kind == "away" and self.d > 0.0 else slope)
        return _Segment(w, self.prev, v, S, lin, quad, coefs, tau_max, self.cfg, self.dist, self.d, floor)

    def try_move(self, seg: _Segment, tau: float, snap: Optional[int]) -> bool:
        cand = seg.point(tau)
        if snap is not None:
            cand[snap] = 0.0
        cand /= cand.sum()
        d = self.dist(cand, self.prev)
        lv = self.L @ cand
        S = float(cand @ lv)
        phi = S + self.cfg.penalty(d)
        if phi < self.phi:
            self.w, self.lv, self.S, self.d, self.phi = cand, lv, S, d, phi
            self._dual = False
            return True
        return False


def _promising(st: _State, inner: InnerSolverConfig, base: np.ndarray):
    """Directions whose screening bound can beat the current objective, in sweep order."""
    w, lv, S, L, dist, cfg = st.w, st.lv, st.S, st.L, st.dist, st.cfg
    n = w.size
    c_lin, c_root = dist.dirac_coefs(w)
    dl = np.diag(L)
    out = []
    # Dirac segments, toward and away, interleaved per grid point
    quad = dl - 2.0 * lv + S
    lin_t = lv - S
    tmax_a = np.where((w > 0) & (w < 1), w / np.where(w < 1, 1.0 - w, 1.0), 0.0)
    cand = [("toward", lin_t, np.where(w < 1, 1.0, 0.0))]
    if inner.away_steps:
        cand.append(("away", -lin_t, tmax_a))
    lows = {}
    for kind, lin, tmax in cand:
        taus = tmax[:, None] * base[None, :]
        low = S + 2 * taus * lin[:, None] + taus**2 * quad[:, None]
        ray = dist.ray_bound(c_lin[:, None], c_root[:, None], taus)
        dlow = np.maximum(st.d - ray, 0.0)
        fl = st.floor("dirac")
        if fl is not None:
            sl = -fl[1] if kind == "away" and st.d > 0.0 else fl[1]
            c = np.maximum(fl[0] + sl[:, None] * taus, 0.0)
            dlow = np.maximum(dlow, c**dist.root_exponent)
        low = low + cfg.penalty(dlow)
        lows[kind] = ((low < st.phi).any(axis=1)) & (tmax > 0)
    for z in range(n):
        for kind, _, _ in cand:
            if lows[kind][z]:
                out.append((kind, z, -1))
    if inner.pair_moves:
        src = np.nonzero(w > 0)[0]
        if src.size:
            I = np.repeat(src, n)
            J = np.tile(np.arange(n), src.size)
            keep = I != J
            I, J = I[keep], J[keep]
            lin = lv[J] - lv[I]
            quadp = dl[J] - 2.0 * L[I, J] + dl[I]
            p_lin, p_root = dist.pair_coefs(I, J)
            taus = w[I][:, None] * base[None, :]
            low = S + 2 * taus * lin[:, None] + taus**2 * quadp[:, None]
            ray = dist.ray_bound(p_lin[:, None], p_root[:, None], taus)
            dlow = np.maximum(st.d - ray, 0.0)
            fl = st.floor("pair", I, J)
            if fl is not None:
                c = np.maximum(fl[0] + fl[1][:, None] * taus, 0.0)
                dlow = np.maximum(dlow, c**dist.root_exponent)
            low = low + cfg.penalty(dlow)
            ok = (low < st.phi).any(axis=1)
            order = np.argsort(lin[ok], kind="stable")
            for k in order:
                out.append(("pair", int(I[ok][k]), int(J[ok][k])))
    return out


def _inner(prev: np.ndarray, L: np.ndarray, cfg: FlowConfig, dist: MeasureDistance) -> np.ndarray:
    inner = cfg.inner
    base = _tau_base(inner)
    st = _State(prev.copy(), prev, L, cfg, dist)
    for _ in range(inner.sweep_rounds):
        phi_start = st.phi
        for kind, i, j in _promising(st, inner, base):
            seg = st.segment(kind, i, j)
            if seg is None:
                continue
            found = _line_search(seg, st.phi, base, inner)
            if found is None:
                continue
            tau, _ = found
            snap = None
            if kind == "away" and tau >= seg.tau_max:
                snap = i
            elif kind == "pair" and tau >= seg.tau_max:
                snap = i
            st.try_move(seg, tau, snap)
        if phi_start - st.phi < inner.improvement_tolerance:
            break
    return st.w


def inner_minimize(
    prev,
    K: Kernel,
    cfg: FlowConfig,
    space: Optional[MetricSpace] = None,
    dist: Optional[MeasureDistance] = None,
) -> ProbabilityMeasure:
    """Approximate minimizer of the penalized action around ``prev``.

    The result never has a larger penalized action than ``prev`` itself.
    """
    dist = _resolve_distance(cfg, space, dist)
    return ProbabilityMeasure(_inner(as_weights(prev).astype(np.float64), K.L, cfg, dist))


def run_flow(
    rho0,
    K: Kernel,
    cfg: FlowConfig,
    space: Optional[MetricSpace] = None,
    dist: Optional[MeasureDistance] = None,
    callback: Optional[Callable[[int, ProbabilityMeasure, float, float], None]] = None,
) -> DiscreteFlow:
    """Iterate the minimizing-movements step until the step is below tolerance."""
    dist = _resolve_distance(cfg, space, dist)
    rho0 = rho0 if isinstance(rho0, ProbabilityMeasure) else ProbabilityMeasure(rho0)
    w_prev = np.array(rho0.weights)
    s_prev = action(K, w_prev)
    measures, actions, steps = [rho0], [s_prev], [0.0]
    converged = False
    for j in range(1, cfg.max_steps + 1):
        w = _inner(w_prev, K.L, cfg, dist)
        d = dist(w, w_prev) if not np.array_equal(w, w_prev) else 0.0
        s = action(K, w)
        if s + cfg.penalty(d) > s_prev:  # rounding guard; prev is always feasible
            w, d, s = w_prev.copy(), 0.0, s_prev
        mu = ProbabilityMeasure(w)
        measures.append(mu)
        actions.append(s)
        steps.append(d)
        if callback is not None:
            callback(j, mu, s, d)
        w_prev, s_prev = w, s
        if d < cfg.step_tolerance:
            converged = True
            break
    return DiscreteFlow(measures, actions, steps, cfg, converged, dist)


# curves --------------------------------------------------------------------


def interpolate_time(flow: DiscreteFlow, t: float) -> ProbabilityMeasure:
    """Piecewise-linear-in-time curve through the iterates, with step ``h``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    x = t / flow.config.h
    k = math.floor(x)
    if k >= flow.steps:
        return flow.final
    frac = x - k
    if frac == 0.0:
        return flow.measures[k]
    w = (1.0 - frac) * flow.measures[k].weights + frac * flow.measures[k + 1].weights
    return ProbabilityMeasure(w / w.sum())


@dataclass
class ActionCurve:
    """The flow reparametrized by its own action ``s``, plateaus collapsed."""

    s: np.ndarray  # strictly decreasing knots
    knots: List[ProbabilityMeasure]
    xi: float

    @property
    def domain(self):
        return float(self.s[-1]), float(self.s[0])

    def __call__(self, s: float) -> ProbabilityMeasure:
        lo, hi = self.domain
        if not lo <= s <= hi:
            raise ValueError(f"s={s!r} outside [{lo!r}, {hi!r}]")
        if len(self.knots) == 1:
            return self.knots[0]
        # s[j+1] <= s <= s[j]
        j = int(np.searchsorted(-self.s, -s, side="right")) - 1
        j = min(max(j, 0), len(self.knots) - 2)
        a, b = self.s[j], self.s[j + 1]
        lam = (s - b) / (a - b)
        w = lam * self.knots[j].weights + (1.0 - lam) * self.knots[j + 1].weights
        return ProbabilityMeasure(w / w.sum())


def reparametrize_by_action(flow: DiscreteFlow) -> ActionCurve:
    if flow.config.xi <= 0:
        raise XiZeroReparametrization("action reparametrization needs xi > 0")
    s_list, knots = [flow.actions[0]], [flow.measures[0]]
    for s, mu in zip(flow.actions[1:], flow.measures[1:]):
        if s == s_list[-1]:
            continue
        s_list.append(s)
        knots.append(mu)
    return ActionCurve(np.array(s_list), knots, flow.config.xi)


def holder_bound(flow: DiscreteFlow, t1: float, t2: float) -> float:
    return math.sqrt(2.0) * math.sqrt(abs(t2 - t1) + flow.config.h) * math.sqrt(flow.actions[0])


def curve_diagnostics(flow: DiscreteFlow, samples: int = 100, rng: Optional[np.random.Generator] = None) -> dict:
    """Curve length against the action drop and Hoelder ratios at random times."""
    rng = np.random.default_rng(0) if rng is None else rng
    length = float(np.sum(flow.step_distances))
    drop = flow.actions[0] - flow.actions[-1]
    xi = flow.config.xi
    out = {
        "length": length,
        "action_drop": drop,
        "length_times_xi": length * xi,
        "length_bound_ok": (length * xi <= drop + 1e-9) if xi > 0 else None,
        "apriori_bound_ok": (length * xi <= flow.actions[0] + 1e-9) if xi > 0 else None,
    }
    T = flow.steps * flow.config.h
    worst = 0.0
    if T > 0 and flow.actions[0] > 0:
        for _ in range(samples):
            t1, t2 = np.sort(rng.uniform(0.0, T, 2))
            d = flow.distance(interpolate_time(flow, t1).weights, interpolate_time(flow, t2).weights)
            worst = max(worst, d / holder_bound(flow, t1, t2))
    out["max_hoelder_ratio"] = worst
    out["hoelder_ok"] = worst <= 1.0 + 1e-9
    return out


def limit_and_certify(
    flow: DiscreteFlow,
    K: Kernel,
    support_threshold: float = SUPPORT_THRESHOLD,
    tolerance: float = 1e-6,
):
    """Final measure of a converged flow and its EL report.

    The report's ``approx_residual >= -tolerance`` is the certificate.
    """
    if not flow.converged:
        raise NotConverged(f"flow stopped after {flow.steps} steps without converging")
    rho = flow.final
    rep = el_report(K, rho, flow.config.xi, support_threshold=support_threshold, dist=flow.distance)
    return rho, rep


def compare_h(
    rho0,
    K: Kernel,
    cfg: FlowConfig,
    schedule: Sequence[float],
    space: Optional[MetricSpace] = None,
    dist: Optional[MeasureDistance] = None,
    n_times: int = 50,
) -> dict:
    """Run the flow per step size and compare the interpolated curves at shared times."""
    schedule = [float(h) for h in schedule]
    if len(schedule) < 2:
        raise ValueError("compare_h needs at least two step sizes")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")
    dist = _resolve_distance(cfg, space, dist)
    flows = [run_flow(rho0, K, _replace(cfg, h=h), dist=dist) for h in schedule]
    horizon = max(f.steps * f.config.h for f in flows)
    times = np.linspace(0.0, horizon, n_times)
    k = len(flows)
    D = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            D[a, b] = D[b, a] = max(
                dist(interpolate_time(flows[a], t).weights, interpolate_time(flows[b], t).weights) for t in times
            )
    consecutive = [D[i, i + 1] for i in range(k - 1)]
    return {
        "schedule": schedule,
        "times": times.tolist(),
        "distances": D.tolist(),
        "consecutive": consecutive,
        "monotone_shrink": all(b <= a + 1e-12 for a, b in zip(consecutive, consecutive[1:])),
        "final_actions": [f.actions[-1] for f in flows],
        "flows": flows,
    }


def _replace(cfg: FlowConfig, **kw) -> FlowConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


# output --------------------------------------------------------------------

TRACE_COLUMNS = ["step", "s_action", "step_distance", "cumulative_length", "el_exact_residual", "el_approx_residual"]


def trace_rows(flow: DiscreteFlow, K: Kernel) -> List[dict]:
    rows = []
    total = 0.0
    for j, (mu, s, d) in enumerate(zip(flow.measures, flow.actions, flow.step_distances)):
        total += d
        rep = el_report(K, mu, flow.config.xi, dist=flow.distance)
        rows.append(
            {
                "step": j,
                "s_action": s,
                "step_distance": d,
                "cumulative_length": total,
                "el_exact_residual": rep.exact_residual,
                "el_approx_residual": rep.approx_residual,
            }
        )
    return rows


def write_trace_csv(rows: List[dict], fh, extra_columns: Sequence[str] = ()) -> None:
    cols = list(extra_columns) + TRACE_COLUMNS
    writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def trace_csv(flow: DiscreteFlow, K: Kernel) -> str:
    buf = io.StringIO()
    write_trace_csv(trace_rows(flow, K), buf)
    return buf.getvalue()


def snapshots(flow: DiscreteFlow, stride: int = 1) -> dict:
    stride = max(int(stride), 1)
    idx = list(range(0, len(flow.measures), stride))
    if idx[-1] != len(flow.measures) - 1:
        idx.append(len(flow.measures) - 1)
    return {
        "stride": stride,
        "measures": [{"step": j, "weights": flow.measures[j].weights.tolist()} for j in idx],
    }


def load_snapshots(obj) -> List[ProbabilityMeasure]:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return [ProbabilityMeasure(np.array(m["weights"], dtype=np.float64)) for m in obj["measures"]]
