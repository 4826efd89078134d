"""Analytic collision geometry for cylindrical agents on piecewise-linear 3D trajectories.

Agents are upright cylinders. Two agents collide when their planar center
distance is below the sum of their radii while their vertical center distance
is below the half-sum of their heights. Both inequalities are strict, so
touching bodies are safe and grazing contacts do not count as conflicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Iterable, Mapping, Optional

if TYPE_CHECKING:  # pragma: no cover - typing only, avoids a runtime cycle
    from .plan import TimedPlan

Vec3 = tuple[float, float, float]

# Quadratic discriminants below this are grazing contacts, not conflicts.
TANGENCY_EPS = 1e-12

# How far past the later plan end a pair is scanned; parked agents that
# statically overlap are guaranteed to show a conflict inside this pad.
_PARK_PAD = 1.0


@dataclass(frozen=True)
class Interval:
    """Time interval [lo, hi] in seconds; hi may be +inf for open-ended windows."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.lo) or self.lo < 0.0:
            raise ValueError(f"interval lo must be finite and >= 0, got {self.lo!r}")
        if math.isnan(self.hi) or self.hi < self.lo:
            raise ValueError(f"interval must satisfy lo <= hi, got [{self.lo!r}, {self.hi!r}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.hi)

    def contains(self, t: float) -> bool:
        return self.lo <= t <= self.hi

    def shifted(self, dt: float) -> "Interval":
        return Interval(self.lo + dt, self.hi + dt)

    def intersect(self, other: "Interval") -> Optional["Interval"]:
        """Intersection with a nonempty interior, or None (point contact is empty)."""
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if hi <= lo:
            return None
        return Interval(lo, hi)


@dataclass(frozen=True)
class LinearMotion:
    """Straight-line motion from p0 at t0 to p1 at t1; a wait has p0 == p1.

    t1 = +inf is permitted only for waits (an agent parked forever).
    """

    p0: Vec3
    p1: Vec3
    t0: float
    t1: float

    def __post_init__(self) -> None:
        for v in (*self.p0, *self.p1, self.t0):
            if not math.isfinite(v):
                raise ValueError("motion endpoints and t0 must be finite")
        if math.isnan(self.t1) or self.t1 < self.t0:
            raise ValueError(f"motion must satisfy t0 <= t1, got [{self.t0!r}, {self.t1!r}]")
        if self.t0 < 0.0:
            raise ValueError("motion cannot start before t = 0")
        if math.isinf(self.t1) and self.p0 != self.p1:
            raise ValueError("only a wait may have an infinite end time")

    @property
    def is_wait(self) -> bool:
        return self.p0 == self.p1

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    def velocity(self) -> Vec3:
        if self.is_wait or self.t1 == self.t0:
            return (0.0, 0.0, 0.0)
        inv = 1.0 / (self.t1 - self.t0)
        return (
            (self.p1[0] - self.p0[0]) * inv,
            (self.p1[1] - self.p0[1]) * inv,
            (self.p1[2] - self.p0[2]) * inv,
        )

    def position_at(self, t: float) -> Vec3:
        if self.is_wait or self.t1 == self.t0:
            return self.p0
        s = (t - self.t0) / (self.t1 - self.t0)
        return (
            self.p0[0] + (self.p1[0] - self.p0[0]) * s,
            self.p0[1] + (self.p1[1] - self.p0[1]) * s,
            self.p0[2] + (self.p1[2] - self.p0[2]) * s,
        )

    def shifted(self, dt: float) -> "LinearMotion":
        return LinearMotion(self.p0, self.p1, self.t0 + dt, self.t1 + dt)


@dataclass(frozen=True)
class CylinderBody:
    """Upright protection cylinder centered on the agent."""

    radius: float
    height: float

    def __post_init__(self) -> None:
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be > 0, got {self.radius!r}")
        if not (self.height > 0.0 and math.isfinite(self.height)):
            raise ValueError(f"height must be > 0, got {self.height!r}")


@dataclass(frozen=True)
class Conflict:
    """Earliest pairwise collision between two plan actions."""

    agent_i: int
    action_i: LinearMotion
    agent_j: int
    action_j: LinearMotion
    unsafe: Interval


def _require_valid(m: LinearMotion) -> None:
    if m.t1 <= m.t0:
        raise ValueError(f"degenerate motion: t0 = {m.t0!r}, t1 = {m.t1!r}")


def _overlap_window(a: LinearMotion, b: LinearMotion) -> Optional[tuple[float, float]]:
    lo = a.t0 if a.t0 > b.t0 else b.t0
    hi = a.t1 if a.t1 < b.t1 else b.t1
    if hi <= lo:
        return None
    return lo, hi


def _below_threshold(dp: tuple, dv: tuple, threshold: float, span: float) -> Optional[tuple[float, float]]:
    """Open subinterval of [0, span] where ||dp + s*dv|| < threshold, or None.

    Solves the quadratic |dv|^2 s^2 + 2(dp.dv) s + |dp|^2 - threshold^2 < 0
    in a cancellation-free form.
    """
    a2 = sum(c * c for c in dv)
    c2 = sum(c * c for c in dp) - threshold * threshold
    if a2 < 1e-30:
        # no relative motion: inside for the whole window or never
        return (0.0, span) if c2 < 0.0 else None
    b2 = 2.0 * sum(p * v for p, v in zip(dp, dv))
    disc = b2 * b2 - 4.0 * a2 * c2
    if disc < TANGENCY_EPS:
        return None
    root = math.sqrt(disc)
    q = -0.5 * (b2 + math.copysign(root, b2))
    r1 = q / a2
    r2 = c2 / q
    lo, hi = (r1, r2) if r1 <= r2 else (r2, r1)
    if lo < 0.0:
        lo = 0.0
    if hi > span:
        hi = span
    if hi <= lo:
        return None
    return lo, hi


def xy_unsafe_interval(a: LinearMotion, b: LinearMotion, r_sum: float) -> Optional[Interval]:
    """Maximal window where the planar center distance is strictly below r_sum."""
    _require_valid(a)
    _require_valid(b)
    if not r_sum > 0.0:
        raise ValueError(f"r_sum must be > 0, got {r_sum!r}")
    window = _overlap_window(a, b)
    if window is None:
        return None
    w0, w1 = window
    pa = a.position_at(w0)
    pb = b.position_at(w0)
    va = a.velocity()
    vb = b.velocity()
    hit = _below_threshold(
        (pa[0] - pb[0], pa[1] - pb[1]),
        (va[0] - vb[0], va[1] - vb[1]),
        r_sum,
        w1 - w0,
    )
    if hit is None:
        return None
    return Interval(w0 + hit[0], w0 + hit[1])


def z_unsafe_interval(a: LinearMotion, b: LinearMotion, h_sum_half: float) -> Optional[Interval]:
    """Maximal window where the vertical center distance is strictly below h_sum_half."""
    _require_valid(a)
    _require_valid(b)
    if not h_sum_half > 0.0:
        raise ValueError(f"h_sum_half must be > 0, got {h_sum_half!r}")
    window = _overlap_window(a, b)
    if window is None:
        return None
    w0, w1 = window
    za = a.position_at(w0)[2]
    zb = b.position_at(w0)[2]
    va = a.velocity()[2]
    vb = b.velocity()[2]
    hit = _below_threshold((za - zb,), (va - vb,), h_sum_half, w1 - w0)
    if hit is None:
        return None
    return Interval(w0 + hit[0], w0 + hit[1])


def cylinder_unsafe_interval(
    a: LinearMotion,
    b: LinearMotion,
    body_a: CylinderBody,
    body_b: CylinderBody,
) -> Optional[Interval]:
    """Window where the two moving cylinders overlap: xy condition AND z condition."""
    xy = xy_unsafe_interval(a, b, body_a.radius + body_b.radius)
    if xy is None:
        return None
    z = z_unsafe_interval(a, b, 0.5 * (body_a.height + body_b.height))
    if z is None:
        return None
    return xy.intersect(z)


def move_clear_delay(
    action: LinearMotion,
    other: LinearMotion,
    r_sum: float,
    h_sum_half: float,
    tol: float = 1e-9,
) -> float:
    """Smallest delay of `action` that clears its conflict with `other`.

    Bisects on the safe side, so shifting by the returned value is always
    conflict-free; exact to within tol. `other` must end at a finite time.
    """
    p0a, va, t0a, t1a = action.p0, action.velocity(), action.t0, action.t1
    p0b, vb, t0b, t1b = other.p0, other.velocity(), other.t0, other.t1

    def collides(delta: float) -> bool:
        w0 = max(t0a + delta, t0b)
        w1 = min(t1a + delta, t1b)
        if w1 <= w0:
            return False
        span = w1 - w0
        sa = w0 - delta - t0a
        sb = w0 - t0b
        dx = (p0a[0] + va[0] * sa) - (p0b[0] + vb[0] * sb)
        dy = (p0a[1] + va[1] * sa) - (p0b[1] + vb[1] * sb)
        dz = (p0a[2] + va[2] * sa) - (p0b[2] + vb[2] * sb)
        xy = _below_threshold((dx, dy), (va[0] - vb[0], va[1] - vb[1]), r_sum, span)
        if xy is None:
            return False
        z = _below_threshold((dz,), (va[2] - vb[2],), h_sum_half, span)
        if z is None:
            return False
        return max(xy[0], z[0]) < min(xy[1], z[1])

    lo = 0.0
    hi = max(0.0, t1b - t0a) + 1e-9  # past the other's window: disjoint in time
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if collides(mid):
            lo = mid
        else:
            hi = mid
    # The clearing boundary often sits exactly where the shifted window starts
    # or stops touching the other's window. Snapping to such a value (when it
    # lands in the bisection bracket and is verified safe) keeps downstream
    # departure times exact, so grazing contacts stay zero-measure instead of
    # reappearing as nanosecond overlaps that the conflict search must chip
    # away at indefinitely.
    snapped = hi
    for cand in (t0b - t0a, t0b - t1a, t1b - t0a, t1b - t1a):
        if lo <= cand <= snapped and not collides(cand):
            snapped = cand
    return snapped


def plan_motions(plan: "TimedPlan") -> list[LinearMotion]:
    """Consecutive-waypoint motions of a plan (without the parked suffix)."""
    wps = plan.waypoints
    return [
        LinearMotion((wps[k][0], wps[k][1], wps[k][2]),
                     (wps[k + 1][0], wps[k + 1][1], wps[k + 1][2]),
                     wps[k][3], wps[k + 1][3])
        for k in range(len(wps) - 1)
    ]


def parked_suffix(plan: "TimedPlan", until: float) -> Optional[LinearMotion]:
    """Goal-parked wait covering [plan end, until], or None if until is not past the end."""
    last = plan.waypoints[-1]
    if until <= last[3]:
        return None
    pos = (last[0], last[1], last[2])
    return LinearMotion(pos, pos, last[3], until)


@lru_cache(maxsize=32768)
def _plan_motions_cached(plan: "TimedPlan") -> tuple[LinearMotion, ...]:
    return tuple(plan_motions(plan))


@lru_cache(maxsize=65536)
def _pair_earliest(
    plan_i: "TimedPlan",
    plan_j: "TimedPlan",
    body_i: CylinderBody,
    body_j: CylinderBody,
) -> Optional[tuple]:
    """Earliest conflict between two plans as (lo, t0_i, t0_j, motion_i, motion_j, hit).

    Cached: the conflict tree re-checks mostly unchanged plan pairs. Pure in
    its arguments, so sharing across solver nodes is sound.
    """
    horizon = max(plan_i.waypoints[-1][3], plan_j.waypoints[-1][3]) + _PARK_PAD
    segs_i: tuple = _plan_motions_cached(plan_i)
    park_i = parked_suffix(plan_i, horizon)
    if park_i is not None:
        segs_i = segs_i + (park_i,)
    segs_j: tuple = _plan_motions_cached(plan_j)
    park_j = parked_suffix(plan_j, horizon)
    if park_j is not None:
        segs_j = segs_j + (park_j,)

    best: Optional[tuple] = None
    for si in segs_i:
        if best is not None and si.t0 > best[0]:
            break
        for sj in segs_j:
            if best is not None and sj.t0 > best[0]:
                break
            if si.t1 <= sj.t0 or sj.t1 <= si.t0:
                continue
            hit = cylinder_unsafe_interval(si, sj, body_i, body_j)
            if hit is None:
                continue
            cand = (hit.lo, si.t0, sj.t0, si, sj, hit)
            if best is None or cand[:3] < best[:3]:
                best = cand
    return best


def first_conflict(
    plans: Iterable["TimedPlan"],
    bodies: Mapping[int, CylinderBody],
) -> Optional[Conflict]:
    """Earliest cylinder conflict over all agent pairs, with goal-parking applied.

    Tie-break on equal start: (agent_i, agent_j, action_i.t0, action_j.t0).
    """
    ordered = sorted(plans, key=lambda p: p.agent)
    if len(ordered) < 2:
        return None
    best_key: Optional[tuple] = None
    best: Optional[Conflict] = None
    for idx_i in range(len(ordered)):
        for idx_j in range(idx_i + 1, len(ordered)):
            pi, pj = ordered[idx_i], ordered[idx_j]
            found = _pair_earliest(pi, pj, bodies[pi.agent], bodies[pj.agent])
            if found is None:
                continue
            lo, t0_i, t0_j, si, sj, hit = found
            key = (lo, pi.agent, pj.agent, t0_i, t0_j)
            if best_key is None or key < best_key:
                best_key = key
                best = Conflict(pi.agent, si, pj.agent, sj, hit)
    return best
