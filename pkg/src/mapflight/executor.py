"""Flight-command generation from timed plans: BHL, BLL, and VLL methods.

Executors are generators written against an abstract vehicle endpoint; each
yield hands back the delay until the executor wants to run again, which lets a
lockstep simulator (or a thin hardware adapter) schedule any number of agents
against one clock.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

from .geometry3d import Vec3
from .plan import TimedPlan

log = logging.getLogger(__name__)

DEFAULT_COMMAND_PERIOD = 0.05
DEFAULT_BOX_HALF_WIDTH = 0.10


def _require_finite_vec(v: Vec3, what: str) -> None:
    if len(v) != 3 or any(not math.isfinite(c) for c in v):
        raise ValueError(f"{what} must be three finite numbers, got {v!r}")


@dataclass(frozen=True)
class HighLevelGoto:
    """Reach target over the given duration; refined to setpoints on board."""

    target: Vec3
    duration: float
    issue_time: float

    def __post_init__(self) -> None:
        _require_finite_vec(self.target, "target")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError(f"goto duration must be > 0, got {self.duration!r}")


@dataclass(frozen=True)
class PositionSetpoint:
    target: Vec3
    issue_time: float

    def __post_init__(self) -> None:
        _require_finite_vec(self.target, "target")


@dataclass(frozen=True)
class VelocitySetpoint:
    velocity: Vec3
    issue_time: float

    def __post_init__(self) -> None:
        _require_finite_vec(self.velocity, "velocity")


Command = Union[HighLevelGoto, PositionSetpoint, VelocitySetpoint]


class VehicleEndpoint(ABC):
    """What an executor needs from a vehicle: a command sink, an estimate, a clock."""

    @abstractmethod
    def send(self, command: Command) -> None: ...

    @abstractmethod
    def estimated_position(self) -> Vec3: ...

    @abstractmethod
    def clock(self) -> float: ...


def bll_execute(plan: TimedPlan, endpoint: VehicleEndpoint, period: float = DEFAULT_COMMAND_PERIOD) -> Iterator[float]:
    """Stream linearly interpolated position setpoints, one segment at a time.

    For each waypoint: the per-axis velocity from the previous waypoint is
    v = delta / d, and while the clock has not reached the waypoint time the
    setpoint x_l + v * t_r is sent, where t_r is the time since the previous
    waypoint; then the previous waypoint advances.
    """
    if not period > 0:
        raise ValueError(f"period must be > 0, got {period!r}")
    wps = plan.waypoints
    if endpoint.clock() >= wps[-1][3]:
        warnings.warn(f"agent {plan.agent}: clock already past the final waypoint; nothing to execute")
        return
    x_l, y_l, z_l, t_l = wps[0]
    for x, y, z, t in wps[1:]:
        d = t - t_l
        v_x = (x - x_l) / d
        v_y = (y - y_l) / d
        v_z = (z - z_l) / d
        while endpoint.clock() < t:
            t_r = endpoint.clock() - t_l
            endpoint.send(
                PositionSetpoint(
                    (x_l + v_x * t_r, y_l + v_y * t_r, z_l + v_z * t_r),
                    issue_time=endpoint.clock(),
                )
            )
            yield period
        x_l, y_l, z_l, t_l = x, y, z, t


def bhl_execute(plan: TimedPlan, endpoint: VehicleEndpoint) -> Iterator[float]:
    """Issue one HighLevelGoto per plan segment at the segment's start time."""
    wps = plan.waypoints
    if endpoint.clock() >= wps[-1][3]:
        warnings.warn(f"agent {plan.agent}: clock already past the final waypoint; nothing to execute")
        return
    for k in range(1, len(wps)):
        x0, y0, z0, t0 = wps[k - 1]
        x1, y1, z1, t1 = wps[k]
        now = endpoint.clock()
        if now < t0:
            yield t0 - now
        endpoint.send(HighLevelGoto((x1, y1, z1), duration=t1 - t0, issue_time=endpoint.clock()))


def vll_step(
    estimated: Vec3,
    target_waypoint: tuple[float, float, float, float],
    box_half_width: float,
    cruise_speed: float,
    now: float = 0.0,
) -> tuple[Command, bool]:
    """One VLL decision: inside the waypoint's closed box -> stop and advance;
    otherwise steer toward the waypoint at cruise speed."""
    if not box_half_width > 0:
        raise ValueError(f"box_half_width must be > 0, got {box_half_width!r}")
    if not cruise_speed > 0:
        raise ValueError(f"cruise_speed must be > 0, got {cruise_speed!r}")
    dx = target_waypoint[0] - estimated[0]
    dy = target_waypoint[1] - estimated[1]
    dz = target_waypoint[2] - estimated[2]
    if abs(dx) <= box_half_width and abs(dy) <= box_half_width and abs(dz) <= box_half_width:
        return VelocitySetpoint((0.0, 0.0, 0.0), issue_time=now), True
    norm = math.sqrt(dx * dx + dy * dy + dz * dz)
    scale = cruise_speed / norm
    return VelocitySetpoint((dx * scale, dy * scale, dz * scale), issue_time=now), False


def vll_execute(
    plan: TimedPlan,
    endpoint: VehicleEndpoint,
    cruise_speed: float,
    period: float = DEFAULT_COMMAND_PERIOD,
    box_half_width: float = DEFAULT_BOX_HALF_WIDTH,
) -> Iterator[float]:
    """Chase waypoints in plan order; geometry, not the schedule, paces progress."""
    if not period > 0:
        raise ValueError(f"period must be > 0, got {period!r}")
    for n, wp in enumerate(plan.waypoints):
        while True:
            command, advanced = vll_step(
                endpoint.estimated_position(), wp, box_half_width, cruise_speed, now=endpoint.clock()
            )
            if advanced:
                log.debug("agent %d reached waypoint %d at t=%.3f", plan.agent, n, endpoint.clock())
                break
            endpoint.send(command)
            yield period
    endpoint.send(VelocitySetpoint((0.0, 0.0, 0.0), issue_time=endpoint.clock()))


def make_executor(
    method: str,
    plan: TimedPlan,
    endpoint: VehicleEndpoint,
    *,
    period: float = DEFAULT_COMMAND_PERIOD,
    box_half_width: float = DEFAULT_BOX_HALF_WIDTH,
    cruise_speed: Optional[float] = None,
) -> Iterator[float]:
    """Executor generator for a method name ("bhl" | "bll" | "vll")."""
    name = method.lower()
    if name == "bll":
        return bll_execute(plan, endpoint, period)
    if name == "bhl":
        return bhl_execute(plan, endpoint)
    if name == "vll":
        if cruise_speed is None:
            raise ValueError("vll requires a cruise speed (defaults to the agent's plan speed)")
        return vll_execute(plan, endpoint, cruise_speed, period, box_half_width)
    raise ValueError(f"unknown method {method!r}; expected one of bhl, bll, vll")


def command_variant(command: Command) -> str:
    return type(command).__name__


def command_payload(command: Command) -> dict:
    if isinstance(command, HighLevelGoto):
        return {"target": list(command.target), "duration": command.duration}
    if isinstance(command, PositionSetpoint):
        return {"target": list(command.target)}
    return {"velocity": list(command.velocity)}


def write_command_trace(records: Iterable[tuple[int, Command]], path) -> None:
    """One JSON record per line: agent, issue_time, variant, payload."""
    with open(path, "w", encoding="utf-8") as fh:
        for agent, command in records:
            fh.write(
                json.dumps(
                    {
                        "agent": agent,
                        "issue_time": command.issue_time,
                        "variant": command_variant(command),
                        "payload": command_payload(command),
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")
