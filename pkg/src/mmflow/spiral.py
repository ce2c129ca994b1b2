"""A smooth planar action whose gradient flow spirals toward the unit circle.

    S(r, phi) = 3 - 2 r**2 + r**2 (1 - r**2) sin(1/(1 - r) + phi)   for r < 1
    S(r, phi) = exp(1 - r)                                          for r >= 1

The plain gradient flow started inside the disk winds around infinitely
often while approaching the circle. The thresholded flow

    d gamma / dt = -(|grad S| - xi) / |grad S| * grad S   while |grad S| >= xi

stops after finite time. The flow is integrated in polar coordinates so the
angle comes out unwrapped.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

CIRCLE_TOL = 1e-12


class OnUnitCircle(ValueError):
    pass


class StepAcrossCircle(RuntimeError):
    pass


@dataclass(frozen=True)
class SpiralState:
    r: float
    phi: float
    t: float = 0.0

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError("r must be >= 0")


def spiral_action(r, phi):
    r = np.asarray(r, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    inside = r < 1.0
    ri = np.where(inside, r, 0.0)
    val_in = 3.0 - 2.0 * ri**2 + ri**2 * (1.0 - ri**2) * np.sin(1.0 / (1.0 - ri) + phi)
    out = np.where(inside, val_in, np.exp(1.0 - r))
    return float(out) if out.ndim == 0 else out


def _side(r: float, side: Optional[str]) -> str:
    if side is not None:
        if side not in ("inside", "outside"):
            raise ValueError("side must be 'inside' or 'outside'")
        return side
    if abs(r - 1.0) < CIRCLE_TOL:
        raise OnUnitCircle("the gradient jumps across r = 1; pass side='inside' or 'outside'")
    return "inside" if r < 1.0 else "outside"


def polar_partials(r: float, phi: float, side: Optional[str] = None):
    """``(dS/dr, dS/dphi / r**2)``; the second form stays finite at the origin."""
    if _side(r, side) == "outside":
        return -math.exp(1.0 - r), 0.0
    if r >= 1.0:
        # inside branch evaluated on the circle: the oscillating term blows up
        return -math.inf, 0.0
    th = 1.0 / (1.0 - r) + phi
    s, c = math.sin(th), math.cos(th)
    dr = -4.0 * r + (2.0 * r - 4.0 * r**3) * s + r * r * (1.0 + r) / (1.0 - r) * c
    dphi_r2 = (1.0 - r * r) * c
    return dr, dphi_r2


def spiral_gradient(r: float, phi: float, side: Optional[str] = None) -> np.ndarray:
    """Euclidean gradient ``dS/dr e_r + (1/r) dS/dphi e_phi`` in Cartesian components."""
    dr, dphi_r2 = polar_partials(r, phi, side)
    g_phi = r * dphi_r2
    c, s = math.cos(phi), math.sin(phi)
    return np.array([dr * c - g_phi * s, dr * s + g_phi * c])


def grad_norm(r: float, phi: float, side: Optional[str] = None) -> float:
    dr, dphi_r2 = polar_partials(r, phi, side)
    return math.hypot(dr, r * dphi_r2)


@dataclass
class Trajectory:
    t: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    grad_norm: np.ndarray
    action: np.ndarray
    xi: float
    halted: bool
    stop: Optional[SpiralState]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "r", "phi_unwrapped", "grad_norm", "action"])
        for row in zip(self.t, self.r, self.phi, self.grad_norm, self.action):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _rhs(xi: float, side: str):
    def f(t, y):
        r, phi = y
        if side == "inside":
            r = min(r, 1.0 - 1e-15)
        else:
            r = max(r, 1.0)
        dr, dphi_r2 = polar_partials(r, phi, side)
        g = math.hypot(dr, r * dphi_r2)
        if g <= xi or g == 0.0:
            return [0.0, 0.0]
        c = (g - xi) / g
        return [-c * dr, -c * dphi_r2]

    return f


def _finish(ts, rs, ps, xi, halted, stop) -> Trajectory:
    t = np.concatenate(ts)
    r = np.concatenate(rs)
    p = np.concatenate(ps)
    sides = np.where(r < 1.0, "inside", "outside")
    g = np.array([grad_norm(ri, pi, si) for ri, pi, si in zip(r, p, sides)])
    return Trajectory(t, r, p, g, spiral_action(r, p), xi, halted, stop)


def integrate_flow(
    start: SpiralState,
    xi: float = 0.0,
    dt: float = 1e-3,
    t_end: float = 10.0,
    method: str = "lsoda",
    rtol: float = 1e-8,
    atol: float = 1e-10,
    halt_tol: float = 1e-12,
) -> Trajectory:
    """Integrate the thresholded gradient flow from ``start`` up to ``t_end``.

    ``method="lsoda"`` uses scipy's stiff/non-stiff switching integrator with
    events for halting and for reaching the circle, falling back to Radau
    if it fails (``dt`` is unused). ``method="rk4"`` uses classical
    fixed-step Runge-Kutta with step ``dt``; steps that would cross the
    circle or pass the halting point are bisected.

    Near the halting point ``|grad S| - xi`` decays exponentially, so the
    exact flow only reaches the threshold asymptotically. The integration
    halts once ``|grad S| <= xi + halt_tol``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not xi >= 0:
        raise ValueError("xi must be >= 0")
    if method == "rk4":
        return _integrate_rk4(start, xi, dt, t_end, halt_tol)
    if method != "lsoda":
        raise ValueError(f"unknown method {method!r}")
    t0 = start.t
    y = np.array([start.r, start.phi], dtype=np.float64)
    side = "inside" if start.r < 1.0 else "outside"
    ts, rs, ps = [np.array([t0])], [np.array([y[0]])], [np.array([y[1]])]
    if grad_norm(y[0], y[1], side) <= (xi + halt_tol if xi > 0 else 0.0):
        return _finish(ts, rs, ps, xi, True, SpiralState(float(y[0]), float(y[1]), t0))

    def halt_event(t, yy):
        r = min(yy[0], 1.0 - 1e-15) if side == "inside" else max(yy[0], 1.0)
        # aim at half the tolerance so the located root stays below xi + halt_tol
        return grad_norm(r, yy[1], side) - xi - 0.5 * halt_tol

    halt_event.terminal = True
    halt_event.direction = -1

    def circle_event(t, yy):
        return yy[0] - 1.0

    circle_event.terminal = True
    while t0 < t_end:
        events = [circle_event] + ([halt_event] if xi > 0 else [])
        sol = solve_ivp(_rhs(xi, side), (t0, t_end), y, method="LSODA", rtol=rtol, atol=atol, events=events)
        if sol.status == -1:
            sol = solve_ivp(_rhs(xi, side), (t0, t_end), y, method="Radau", rtol=rtol, atol=atol, events=events)
        if sol.status == -1:
            raise RuntimeError(sol.message)
        ts.append(sol.t[1:])
        rs.append(sol.y[0, 1:])
        ps.append(sol.y[1, 1:])
        if sol.status == 0:
            break
        if xi > 0 and sol.t_events[1].size:
            te, ye = sol.t_events[1][0], sol.y_events[1][0]
            return _finish(ts, rs, ps, xi, True, SpiralState(float(ye[0]), float(ye[1]), float(te)))
        # reached the circle: continue on the other branch from exactly r = 1
        te, ye = sol.t_events[0][0], sol.y_events[0][0]
        t0, y = float(te), np.array([1.0, ye[1]])
        side = "outside" if side == "inside" else "inside"
        ts.append(np.array([t0]))
        rs.append(np.array([1.0]))
        ps.append(np.array([y[1]]))
    return _finish(ts, rs, ps, xi, False, None)


def _rk4_step(f, t, y, h):
    k1 = np.asarray(f(t, y))
    k2 = np.asarray(f(t + h / 2, y + h / 2 * k1))
    k3 = np.asarray(f(t + h / 2, y + h / 2 * k2))
    k4 = np.asarray(f(t + h, y + h * k3))
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_rk4(
    start: SpiralState, xi: float, dt: float, t_end: float, halt_tol: float = 1e-12, max_bisect: int = 80
) -> Trajectory:
    t = start.t
    y = np.array([start.r, start.phi], dtype=np.float64)
    side = "inside" if y[0] < 1.0 else "outside"
    ts, rs, ps = [t], [y[0]], [y[1]]

    def done(out, halted, stop=None):
        return _finish([np.array(ts)], [np.array(rs)], [np.array(ps)], xi, halted, stop)

    def events(yy):
        crossed = yy[0] >= 1.0 if side == "inside" else yy[0] < 1.0
        r = min(yy[0], 1.0 - 1e-15) if side == "inside" else max(yy[0], 1.0)
        stopped = xi > 0 and grad_norm(r, yy[1], side) <= xi + halt_tol
        return crossed, stopped

    if grad_norm(y[0], y[1], side) <= (xi + halt_tol if xi > 0 else 0.0):
        return done(None, True, SpiralState(y[0], y[1], t))
    f = _rhs(xi, side)
    while t < t_end - 1e-15:
        h = min(dt, t_end - t)
        y_new = _rk4_step(f, t, y, h)
        if not any(events(y_new)):
            y, t = y_new, t + h
            ts.append(t), rs.append(y[0]), ps.append(y[1])
            continue
        # bisect for the first event inside (t, t + h]
        lo, hi = 0.0, h
        for _ in range(max_bisect):
            mid = 0.5 * (lo + hi)
            if any(events(_rk4_step(f, t, y, mid))):
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(1.0, t):
                break
        else:
            raise StepAcrossCircle(f"could not resolve the event in the step at t={t!r}")
        y = _rk4_step(f, t, y, hi)
        t = t + hi
        crossed, stopped = events(y)
        if stopped and not crossed:
            ts.append(t), rs.append(y[0]), ps.append(y[1])
            return done(None, True, SpiralState(float(y[0]), float(y[1]), t))
        y[0] = 1.0
        ts.append(t), rs.append(y[0]), ps.append(y[1])
        side = "outside" if side == "inside" else "inside"
        f = _rhs(xi, side)
    return done(None, False)


def winding_report(traj: Trajectory, final_fraction: float = 0.1, bins: int = 10) -> dict:
    """Phase and radius summary of a trajectory."""
    t, r, phi = traj.t, traj.r, traj.phi
    total = float(phi[-1] - phi[0])
    t0, t1 = float(t[0]), float(t[-1])
    cut = t1 - final_fraction * (t1 - t0)
    k = int(np.searchsorted(t, cut))
    k = min(k, t.size - 1)
    final_gain = float(phi[-1] - phi[k])
    # per-bin phase change and mean radius over equal time windows
    edges = np.linspace(t0, t1, bins + 1)
    idx = np.clip(np.searchsorted(t, edges), 0, t.size - 1)
    phase_bins = np.diff(phi[idx])
    r_bins = np.array([r[idx[i] : max(idx[i + 1], idx[i] + 1)].mean() for i in range(bins)])
    cum = np.abs(phi[idx] - phi[0])
    return {
        "delta_phi": total,
        "final_fraction": final_fraction,
        "final_phase_gain": final_gain,
        "final_r": float(r[-1]),
        "max_r": float(r.max()),
        "halted": traj.halted,
        "stop": None
        if traj.stop is None
        else {"t": traj.stop.t, "r": traj.stop.r, "phi": traj.stop.phi, "grad_norm": float(traj.grad_norm[-1])},
        "phase_per_window": phase_bins.tolist(),
        "mean_r_per_window": r_bins.tolist(),
        "r_trend_increasing": bool(np.all(np.diff(r_bins) >= -1e-12)),
        "abs_winding_monotone": bool(np.all(np.diff(cum) >= -1e-9)),
        "samples": int(t.size),
    }
