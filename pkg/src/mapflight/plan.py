"""Timed waypoint plans: the shared contract between planner, validator, and simulator.

A plan file is self-contained: it echoes each agent's body and speed so the
execution side can run plans produced by external solvers.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from . import geometry3d
from .geometry3d import CylinderBody, Vec3
from .world import AgentSpec, Cell, GridWorld

Waypoint = tuple[float, float, float, float]

_PARK_PAD = 1.0
_SPEED_RTOL = 1e-9
_ENDPOINT_ATOL = 1e-9
_SAMPLING_GUARD = 1e-9


class PlanFormatError(ValueError):
    """Plan file rejected; message carries the offending field path."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


@dataclass(frozen=True)
class TimedPlan:
    """Ordered (x, y, z, t) waypoints; t strictly increasing, first t = 0."""

    agent: int
    waypoints: tuple[Waypoint, ...]

    def __post_init__(self) -> None:
        wps = tuple(tuple(float(v) for v in wp) for wp in self.waypoints)
        if not wps:
            raise ValueError(f"agent {self.agent}: plan needs at least one waypoint")
        for n, wp in enumerate(wps):
            if len(wp) != 4 or any(not math.isfinite(v) for v in wp):
                raise ValueError(f"agent {self.agent}: waypoint {n} must be four finite numbers, got {wp!r}")
        if wps[0][3] != 0.0:
            raise ValueError(f"agent {self.agent}: waypoint 0 must have t = 0, got t = {wps[0][3]!r}")
        for n in range(1, len(wps)):
            if wps[n][3] <= wps[n - 1][3]:
                raise ValueError(
                    f"agent {self.agent}: waypoint {n} time {wps[n][3]!r} not after waypoint {n - 1} time {wps[n - 1][3]!r}"
                )
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "_times", tuple(wp[3] for wp in wps))

    @property
    def start_position(self) -> Vec3:
        x, y, z, _ = self.waypoints[0]
        return (x, y, z)

    @property
    def goal_position(self) -> Vec3:
        x, y, z, _ = self.waypoints[-1]
        return (x, y, z)

    @property
    def end_time(self) -> float:
        return self.waypoints[-1][3]

    def position_at(self, t: float) -> Vec3:
        """Piecewise-linear position; clamped to the start before 0 and parked after the end."""
        wps = self.waypoints
        times = self._times  # type: ignore[attr-defined]
        if t <= times[0]:
            return self.start_position
        if t >= times[-1]:
            return self.goal_position
        k = bisect.bisect_right(times, t) - 1
        x0, y0, z0, t0 = wps[k]
        x1, y1, z1, t1 = wps[k + 1]
        s = (t - t0) / (t1 - t0)
        return (x0 + (x1 - x0) * s, y0 + (y1 - y0) * s, z0 + (z1 - z0) * s)


@dataclass(frozen=True)
class Violation:
    kind: str  # "pairwise" | "static" | "kinematic" | "endpoint"
    time: float
    pair: Optional[tuple[int, int]] = None
    agent: Optional[int] = None
    min_separation_found: Optional[float] = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]
    checked_pairs: int

    def summary(self) -> str:
        if self.ok:
            return f"OK ({self.checked_pairs} agent pairs checked)"
        lines = [f"{len(self.violations)} violation(s) over {self.checked_pairs} agent pairs:"]
        for v in self.violations:
            who = f"agents {v.pair[0]}-{v.pair[1]}" if v.pair else f"agent {v.agent}"
            extra = f", min separation {v.min_separation_found:.4f} m" if v.min_separation_found is not None else ""
            lines.append(f"  [{v.kind}] {who} at t = {v.time:.4f} s{extra} {v.detail}".rstrip())
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# static geometry helpers
# ---------------------------------------------------------------------------


def _segment_touches_box(p: Vec3, q: Vec3, lo: Vec3, hi: Vec3) -> bool:
    # slab clipping against the closed box; touching counts
    tmin, tmax = 0.0, 1.0
    for axis in range(3):
        d = q[axis] - p[axis]
        if abs(d) < 1e-15:
            if p[axis] < lo[axis] - 1e-12 or p[axis] > hi[axis] + 1e-12:
                return False
            continue
        t1 = (lo[axis] - p[axis]) / d
        t2 = (hi[axis] - p[axis]) / d
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
        if tmin > tmax + 1e-12:
            return False
    return True


def segment_cells(world: GridWorld, p: Vec3, q: Vec3) -> list[Cell]:
    """All grid cells whose closed volume the segment touches (conservative)."""
    cs = world.cell_size
    cells: list[Cell] = []
    ranges = []
    for axis in range(3):
        lo = min(p[axis], q[axis])
        hi = max(p[axis], q[axis])
        ranges.append((math.floor(lo / cs - 1e-9), math.floor(hi / cs + 1e-9)))
    for i in range(ranges[0][0], ranges[0][1] + 1):
        for j in range(ranges[1][0], ranges[1][1] + 1):
            for k in range(ranges[2][0], ranges[2][1] + 1):
                box_lo = (i * cs, j * cs, k * cs)
                box_hi = ((i + 1) * cs, (j + 1) * cs, (k + 1) * cs)
                if _segment_touches_box(p, q, box_lo, box_hi):
                    cells.append((i, j, k))
    return cells


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _pair_min_separation(
    pa: "TimedPlan", pb: "TimedPlan", r_sum: float, h_half: float, t0: float, t1: float
) -> tuple[float, float]:
    """(earliest violating sample, min planar distance while violating) on a dense grid."""
    ts = np.linspace(t0, t1, 1001)
    axa = _sample_axes(pa, ts)
    axb = _sample_axes(pb, ts)
    planar = np.hypot(axa[0] - axb[0], axa[1] - axb[1])
    dz = np.abs(axa[2] - axb[2])
    mask = (planar < r_sum) & (dz < h_half)
    if not mask.any():
        return t0, float(planar.min())
    return float(ts[np.argmax(mask)]), float(planar[mask].min())


def _sample_axes(plan: "TimedPlan", ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    times = np.array([wp[3] for wp in plan.waypoints])
    xs = np.array([wp[0] for wp in plan.waypoints])
    ys = np.array([wp[1] for wp in plan.waypoints])
    zs = np.array([wp[2] for wp in plan.waypoints])
    # np.interp clamps outside the waypoint range: start-hold and goal-parking
    return np.interp(ts, times, xs), np.interp(ts, times, ys), np.interp(ts, times, zs)


def validate(
    plans: Iterable[TimedPlan],
    agents: Iterable[AgentSpec],
    world: Optional[GridWorld],
    sampling_dt: float = 1e-3,
) -> ValidationReport:
    """Dual conflict check (analytic + sampled) plus static and kinematic checks.

    The sampled check is independent of the analytic one: it never evaluates the
    quadratic, only positions on a uniform grid at sampling_dt.
    """
    if not sampling_dt > 0:
        raise ValueError(f"sampling_dt must be > 0, got {sampling_dt!r}")
    plan_list = sorted(plans, key=lambda p: p.agent)
    spec_map = {a.id: a for a in agents}
    plan_ids = [p.agent for p in plan_list]
    if len(set(plan_ids)) != len(plan_ids):
        raise ValueError(f"duplicate plan agent ids: {plan_ids}")
    missing = [i for i in plan_ids if i not in spec_map]
    if missing:
        raise ValueError(f"plans name agents absent from the instance: {missing}")
    unplanned = sorted(set(spec_map) - set(plan_ids))
    if unplanned:
        raise ValueError(f"instance agents without plans: {unplanned}")

    violations: list[Violation] = []

    # endpoint + kinematic + static checks, per agent
    for plan in plan_list:
        spec = spec_map[plan.agent]
        if world is not None:
            start_c = world.center(spec.start)
            goal_c = world.center(spec.goal)
            if math.dist(plan.start_position, start_c) > _ENDPOINT_ATOL:
                violations.append(
                    Violation("endpoint", 0.0, agent=plan.agent,
                              detail=f"first waypoint {plan.start_position} is not the start vertex {start_c}")
                )
            if math.dist(plan.goal_position, goal_c) > _ENDPOINT_ATOL:
                violations.append(
                    Violation("endpoint", plan.end_time, agent=plan.agent,
                              detail=f"last waypoint {plan.goal_position} is not the goal vertex {goal_c}")
                )
        for k in range(len(plan.waypoints) - 1):
            x0, y0, z0, t0 = plan.waypoints[k]
            x1, y1, z1, t1 = plan.waypoints[k + 1]
            length = math.dist((x0, y0, z0), (x1, y1, z1))
            if length > 0.0:
                seg_speed = length / (t1 - t0)
                if abs(seg_speed - spec.speed) > _SPEED_RTOL * max(seg_speed, spec.speed):
                    violations.append(
                        Violation("kinematic", t0, agent=plan.agent,
                                  detail=f"segment {k} speed {seg_speed!r} differs from agent speed {spec.speed!r}")
                    )
            if world is not None:
                for cell in segment_cells(world, (x0, y0, z0), (x1, y1, z1)):
                    if not world.is_free(cell):
                        label = "out of bounds" if not world.in_bounds(cell) else "an obstacle"
                        violations.append(
                            Violation("static", t0, agent=plan.agent,
                                      detail=f"segment {k} touches cell {list(cell)} which is {label}")
                        )
                        break

    # pairwise checks: analytic intervals and an independent sampled sweep
    checked_pairs = 0
    for a_idx in range(len(plan_list)):
        for b_idx in range(a_idx + 1, len(plan_list)):
            pa, pb = plan_list[a_idx], plan_list[b_idx]
            body_a = spec_map[pa.agent].body
            body_b = spec_map[pb.agent].body
            r_sum = body_a.radius + body_b.radius
            h_half = 0.5 * (body_a.height + body_b.height)
            checked_pairs += 1
            horizon = max(pa.end_time, pb.end_time) + _PARK_PAD

            analytic_hit: Optional[geometry3d.Interval] = None
            segs_a = geometry3d.plan_motions(pa) + list(filter(None, [geometry3d.parked_suffix(pa, horizon)]))
            segs_b = geometry3d.plan_motions(pb) + list(filter(None, [geometry3d.parked_suffix(pb, horizon)]))
            for sa in segs_a:
                for sb in segs_b:
                    if sa.t1 <= sb.t0 or sb.t1 <= sa.t0:
                        continue
                    hit = geometry3d.cylinder_unsafe_interval(sa, sb, body_a, body_b)
                    if hit is not None and (analytic_hit is None or hit.lo < analytic_hit.lo):
                        analytic_hit = hit

            ts = np.arange(0.0, horizon + 0.5 * sampling_dt, sampling_dt)
            axa = _sample_axes(pa, ts)
            axb = _sample_axes(pb, ts)
            planar = np.hypot(axa[0] - axb[0], axa[1] - axb[1])
            dz = np.abs(axa[2] - axb[2])
            # guard keeps exact-touching trajectories (legal) from tripping on
            # rounding noise; genuine penetrations at this sampling resolution
            # run orders of magnitude deeper
            mask = (planar < r_sum - _SAMPLING_GUARD) & (dz < h_half - _SAMPLING_GUARD)
            sampled_time = float(ts[np.argmax(mask)]) if mask.any() else None

            if analytic_hit is not None or sampled_time is not None:
                if analytic_hit is not None:
                    lo = analytic_hit.lo
                    hi = min(analytic_hit.hi, horizon)
                    _, min_sep = _pair_min_separation(pa, pb, r_sum, h_half, lo, hi)
                    earliest = lo if sampled_time is None else min(lo, sampled_time)
                else:
                    min_sep = float(planar[mask].min())
                    earliest = sampled_time
                violations.append(
                    Violation("pairwise", earliest, pair=(pa.agent, pb.agent),
                              min_separation_found=min_sep,
                              detail="(analytic)" if sampled_time is None else "")
                )

    violations.sort(key=lambda v: (v.time, v.kind, v.pair or (-1, -1), v.agent if v.agent is not None else -1))
    return ValidationReport(ok=not violations, violations=tuple(violations), checked_pairs=checked_pairs)


# ---------------------------------------------------------------------------
# plan files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanSet:
    """Plans plus the echoed body parameters that make the file self-contained."""

    plans: tuple[TimedPlan, ...]
    bodies: Mapping[int, CylinderBody] = field(default_factory=dict)
    speeds: Mapping[int, float] = field(default_factory=dict)


def save_plans(plans: Iterable[TimedPlan], agents: Iterable[AgentSpec], path) -> None:
    spec_map = {a.id: a for a in agents}
    doc = {
        "plans": [
            {
                "agent": p.agent,
                "radius": spec_map[p.agent].body.radius,
                "height": spec_map[p.agent].body.height,
                "speed": spec_map[p.agent].speed,
                "waypoints": [list(wp) for wp in p.waypoints],
            }
            for p in sorted(plans, key=lambda p: p.agent)
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_plans(path) -> PlanSet:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlanFormatError(f"{path}:{exc.lineno}", f"not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or set(doc) != {"plans"}:
        raise PlanFormatError("top level", "expected exactly one key 'plans'")
    raw_plans = doc["plans"]
    if not isinstance(raw_plans, list) or not raw_plans:
        raise PlanFormatError("plans", "expected a non-empty list")
    plans: list[TimedPlan] = []
    bodies: dict[int, CylinderBody] = {}
    speeds: dict[int, float] = {}
    allowed = {"agent", "radius", "height", "speed", "waypoints"}
    for n, raw in enumerate(raw_plans):
        where = f"plans[{n}]"
        if not isinstance(raw, dict):
            raise PlanFormatError(where, "each plan must be an object")
        unknown = set(raw) - allowed
        if unknown:
            raise PlanFormatError(where, f"unknown keys {sorted(unknown)}")
        for key in ("agent", "waypoints"):
            if key not in raw:
                raise PlanFormatError(where, f"missing required key {key!r}")
        agent = raw["agent"]
        if not isinstance(agent, int) or isinstance(agent, bool) or agent < 0:
            raise PlanFormatError(f"{where}.agent", f"expected a non-negative integer, got {agent!r}")
        if agent in bodies:
            raise PlanFormatError(f"{where}.agent", f"duplicate agent id {agent}")
        wps_raw = raw["waypoints"]
        if not isinstance(wps_raw, list) or not wps_raw:
            raise PlanFormatError(f"{where}.waypoints", "expected a non-empty list")
        waypoints: list[Waypoint] = []
        last_t = None
        for m, wp in enumerate(wps_raw):
            loc = f"{where}.waypoints[{m}]"
            if (
                not isinstance(wp, list)
                or len(wp) != 4
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in wp)
            ):
                raise PlanFormatError(loc, f"expected [x, y, z, t] numbers, got {wp!r}")
            t = float(wp[3])
            if m == 0 and t != 0.0:
                raise PlanFormatError(loc, f"first waypoint must have t = 0, got {t!r}")
            if last_t is not None and t <= last_t:
                raise PlanFormatError(loc, f"timestamp {t!r} not after previous {last_t!r}")
            last_t = t
            waypoints.append((float(wp[0]), float(wp[1]), float(wp[2]), t))
        plans.append(TimedPlan(agent, tuple(waypoints)))
        radius = raw.get("radius", 0.25)
        height = raw.get("height", 1.0)
        speed = raw.get("speed", 0.5)
        for name, v in (("radius", radius), ("height", height), ("speed", speed)):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
                raise PlanFormatError(f"{where}.{name}", f"expected a positive number, got {v!r}")
        bodies[agent] = CylinderBody(float(radius), float(height))
        speeds[agent] = float(speed)
    plans.sort(key=lambda p: p.agent)
    return PlanSet(tuple(plans), bodies, speeds)
