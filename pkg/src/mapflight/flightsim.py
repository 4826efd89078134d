"""Deterministic lockstep quadcopter simulation: first-order tracking dynamics,
Gaussian localization noise from seeded per-vehicle substreams, 10 ms pose
logging, and tracking-error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .executor import (
    Command,
    HighLevelGoto,
    VehicleEndpoint,
    VelocitySetpoint,
    make_executor,
)
from .geometry3d import Vec3
from .plan import TimedPlan

METHODS = ("bhl", "bll", "vll")

BASIS_ACTUAL = "actual-vs-planned"
BASIS_ESTIMATED = "estimated-vs-planned"

_EPS = 1e-9


@dataclass(frozen=True)
class SimConfig:
    tick: float = 0.005
    log_period: float = 0.010
    tau: float = 0.3  # first-order velocity-tracking time constant
    gain: float = 2.0  # position-setpoint feedback gain, 1/s
    max_speed: float = 1.0
    noise_sigma: float = 0.05  # per-axis localization noise, m
    latency: float = 0.02  # command transport delay, s
    seed: int = 0
    arena_min: Vec3 = (0.0, 0.0, 0.0)
    arena_max: Vec3 = (2.0, 2.0, 2.0)
    command_period: float = 0.05
    vll_box_half_width: float = 0.10
    vll_cruise_speed: Optional[float] = None  # None: use each agent's plan speed
    goto_refine_rate: float = 100.0  # onboard goto interpolation, Hz

    def __post_init__(self) -> None:
        for name in ("tick", "log_period", "tau", "gain", "max_speed", "command_period",
                     "vll_box_half_width", "goto_refine_rate"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a positive number, got {v!r}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if self.latency < 0:
            raise ValueError(f"latency must be >= 0, got {self.latency!r}")
        if self.log_period < self.tick - _EPS:
            raise ValueError("log_period must be at least one tick")
        ratio = self.log_period / self.tick
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"log_period {self.log_period!r} must be an integer multiple of tick {self.tick!r}"
            )
        if self.vll_cruise_speed is not None and not self.vll_cruise_speed > 0:
            raise ValueError(f"vll_cruise_speed must be > 0, got {self.vll_cruise_speed!r}")
        if any(lo >= hi for lo, hi in zip(self.arena_min, self.arena_max)):
            raise ValueError(f"arena_min {self.arena_min} must be below arena_max {self.arena_max}")

    @property
    def log_every_ticks(self) -> int:
        return round(self.log_period / self.tick)


@dataclass(frozen=True)
class VehicleState:
    position: Vec3
    velocity: Vec3


def _clamped(v: Vec3, limit: float) -> Vec3:
    norm = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if norm <= limit or norm == 0.0:
        return v
    s = limit / norm
    return (v[0] * s, v[1] * s, v[2] * s)


def refine_goto(command: HighLevelGoto, anchor: Vec3, activated: float, now: float, rate: float) -> Vec3:
    """Onboard goto refinement: linear interpolation anchor -> target, stepped at `rate`."""
    elapsed = now - activated
    s = math.floor(max(elapsed, 0.0) * rate) / rate
    if s > command.duration:
        s = command.duration
    frac = s / command.duration
    return (
        anchor[0] + (command.target[0] - anchor[0]) * frac,
        anchor[1] + (command.target[1] - anchor[1]) * frac,
        anchor[2] + (command.target[2] - anchor[2]) * frac,
    )


def vehicle_step(
    state: VehicleState,
    command: Optional[Command],
    dt: float,
    config: SimConfig,
    now: float = 0.0,
    goto_anchor: Optional[Vec3] = None,
    goto_activated: Optional[float] = None,
) -> VehicleState:
    """Advance one tick: velocity relaxes toward the commanded velocity with the
    exact exponential first-order update; position integrates in closed form."""
    if command is None:
        commanded = (0.0, 0.0, 0.0)
    elif isinstance(command, VelocitySetpoint):
        commanded = _clamped(command.velocity, config.max_speed)
    else:
        if isinstance(command, HighLevelGoto):
            anchor = goto_anchor if goto_anchor is not None else state.position
            activated = goto_activated if goto_activated is not None else command.issue_time
            target = refine_goto(command, anchor, activated, now, config.goto_refine_rate)
        else:
            target = command.target
        commanded = _clamped(
            (
                config.gain * (target[0] - state.position[0]),
                config.gain * (target[1] - state.position[1]),
                config.gain * (target[2] - state.position[2]),
            ),
            config.max_speed,
        )
    decay = math.exp(-dt / config.tau)
    ramp = config.tau * (1.0 - decay)
    velocity = tuple(c + (v - c) * decay for v, c in zip(state.velocity, commanded))
    position = tuple(
        p + c * dt + (v - c) * ramp for p, v, c in zip(state.position, state.velocity, commanded)
    )
    return VehicleState(position, velocity)  # type: ignore[arg-type]


def localize(actual: Vec3, rng: np.random.Generator, noise_sigma: float) -> Vec3:
    """Actual position plus independent zero-mean per-axis Gaussian noise."""
    n = rng.standard_normal(3)
    return (
        actual[0] + noise_sigma * float(n[0]),
        actual[1] + noise_sigma * float(n[1]),
        actual[2] + noise_sigma * float(n[2]),
    )


@dataclass(frozen=True)
class PoseRecord:
    t: float
    agent: int
    actual: Vec3
    estimated: Vec3
    planned: Vec3


@dataclass(frozen=True)
class PoseLog:
    records: tuple[PoseRecord, ...]
    method: str
    seed: int
    log_period: float
    completed: bool
    end_time: float

    def to_csv(self) -> str:
        lines = ["t,agent,ax,ay,az,ex,ey,ez,px,py,pz"]
        for r in self.records:
            lines.append(
                f"{r.t:.3f},{r.agent},"
                f"{r.actual[0]!r},{r.actual[1]!r},{r.actual[2]!r},"
                f"{r.estimated[0]!r},{r.estimated[1]!r},{r.estimated[2]!r},"
                f"{r.planned[0]!r},{r.planned[1]!r},{r.planned[2]!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


class _SimEndpoint(VehicleEndpoint):
    def __init__(self, start: Vec3):
        self.now = 0.0
        self.estimate = start
        self.outbox: list[Command] = []

    def send(self, command: Command) -> None:
        self.outbox.append(command)

    def estimated_position(self) -> Vec3:
        return self.estimate

    def clock(self) -> float:
        return self.now


@dataclass
class _AgentRuntime:
    agent: int
    plan: TimedPlan
    endpoint: _SimEndpoint
    gen: Iterator[float]
    rng: np.random.Generator
    state: VehicleState
    next_resume: float = 0.0
    done: bool = False
    pending: list[tuple[float, int, Command]] = field(default_factory=list)
    active: Optional[Command] = None
    goto_anchor: Optional[Vec3] = None
    goto_activated: float = 0.0


def _plan_speed(plan: TimedPlan) -> float:
    for k in range(len(plan.waypoints) - 1):
        x0, y0, z0, t0 = plan.waypoints[k]
        x1, y1, z1, t1 = plan.waypoints[k + 1]
        length = math.dist((x0, y0, z0), (x1, y1, z1))
        if length > 0:
            return length / (t1 - t0)
    return 0.5


def run_execution(
    plans: Iterable[TimedPlan],
    method: str,
    config: SimConfig = SimConfig(),
    speeds: Optional[Mapping[int, float]] = None,
    command_sink: Optional[list] = None,
) -> PoseLog:
    """Lockstep execution of all plans under one method.

    Per tick: localize every vehicle, resume due executors on the shared clock,
    activate the newest due command (transport latency applies), then step the
    vehicle dynamics. Poses are logged every log_period. The run terminates when
    every executor has finished and every vehicle sits inside the VLL box of its
    goal, or is marked failed at the wall cap of 2 x makespan + 10 s.
    """
    name = method.lower()
    if name not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    plan_list = sorted(plans, key=lambda p: p.agent)
    if not plan_list:
        raise ValueError("no plans to execute")

    streams = np.random.SeedSequence(config.seed).spawn(len(plan_list))
    runtimes: list[_AgentRuntime] = []
    for plan, stream in zip(plan_list, streams):
        endpoint = _SimEndpoint(plan.start_position)
        cruise = config.vll_cruise_speed
        if cruise is None:
            cruise = speeds[plan.agent] if speeds and plan.agent in speeds else _plan_speed(plan)
        gen = make_executor(
            name,
            plan,
            endpoint,
            period=config.command_period,
            box_half_width=config.vll_box_half_width,
            cruise_speed=cruise,
        )
        runtimes.append(
            _AgentRuntime(
                agent=plan.agent,
                plan=plan,
                endpoint=endpoint,
                gen=gen,
                rng=np.random.default_rng(stream),
                state=VehicleState(plan.start_position, (0.0, 0.0, 0.0)),
            )
        )

    makespan = max(p.end_time for p in plan_list)
    cap = 2.0 * makespan + 10.0
    steps_per_log = config.log_every_ticks
    box = config.vll_box_half_width

    records: list[PoseRecord] = []
    seq = 0
    n = 0
    completed = False
    t = 0.0
    while True:
        t = n * config.tick
        for rt in runtimes:
            rt.endpoint.now = t
            rt.endpoint.estimate = localize(rt.state.position, rt.rng, config.noise_sigma)
        if n % steps_per_log == 0:
            for rt in runtimes:
                records.append(
                    PoseRecord(t, rt.agent, rt.state.position, rt.endpoint.estimate, rt.plan.position_at(t))
                )
        if all(rt.done for rt in runtimes) and all(
            all(abs(p - g) <= box for p, g in zip(rt.state.position, rt.plan.goal_position))
            for rt in runtimes
        ):
            completed = True
            break
        if t > cap:
            completed = False
            break

        for rt in runtimes:
            guard = 0
            while not rt.done and rt.next_resume <= t + _EPS:
                try:
                    delay = next(rt.gen)
                except StopIteration:
                    rt.done = True
                    break
                rt.next_resume = t + max(delay, 1e-9)
                guard += 1
                if guard > 100000:
                    raise RuntimeError(f"agent {rt.agent}: executor yields no forward progress")
            if rt.endpoint.outbox:
                for command in rt.endpoint.outbox:
                    rt.pending.append((t + config.latency, seq, command))
                    seq += 1
                    if command_sink is not None:
                        command_sink.append((rt.agent, command))
                rt.endpoint.outbox.clear()

        for rt in runtimes:
            due = [entry for entry in rt.pending if entry[0] <= t + _EPS]
            if due:
                rt.pending = [entry for entry in rt.pending if entry[0] > t + _EPS]
                newest = max(due, key=lambda entry: entry[1])[2]
                rt.active = newest
                if isinstance(newest, HighLevelGoto):
                    rt.goto_anchor = rt.state.position
                    rt.goto_activated = t
        for rt in runtimes:
            rt.state = vehicle_step(
                rt.state, rt.active, config.tick, config,
                now=t, goto_anchor=rt.goto_anchor, goto_activated=rt.goto_activated,
            )
        n += 1

    return PoseLog(
        records=tuple(records),
        method=name,
        seed=config.seed,
        log_period=config.log_period,
        completed=completed,
        end_time=t,
    )


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentError:
    max_error: float
    avg_error: float


@dataclass(frozen=True)
class ErrorReport:
    basis: str
    method: str
    seed: int
    per_agent: dict[int, AgentError]
    aggregate: AgentError
    series: tuple[tuple[float, int, float], ...]  # (t, agent, error)

    def to_json_dict(self, config_hash: str = "") -> dict:
        return {
            "basis": self.basis,
            "method": self.method,
            "seed": self.seed,
            "config_hash": config_hash,
            "per_agent": {
                str(agent): {"max_error": e.max_error, "avg_error": e.avg_error}
                for agent, e in sorted(self.per_agent.items())
            },
            "aggregate": {"max_error": self.aggregate.max_error, "avg_error": self.aggregate.avg_error},
        }

    def series_csv(self) -> str:
        lines = ["t,agent,error"]
        for t, agent, err in self.series:
            lines.append(f"{t:.3f},{agent},{err!r}")
        return "\n".join(lines) + "\n"


def error_metrics(log: PoseLog, basis: str = BASIS_ACTUAL) -> ErrorReport:
    """Per-record Euclidean error between the basis position and the planned one."""
    if basis in ("actual", BASIS_ACTUAL):
        basis = BASIS_ACTUAL
    elif basis in ("estimated", BASIS_ESTIMATED):
        basis = BASIS_ESTIMATED
    else:
        raise ValueError(f"unknown basis {basis!r}")
    if not log.records:
        raise ValueError("empty pose log")
    per_agent_errors: dict[int, list[float]] = {}
    series: list[tuple[float, int, float]] = []
    for r in log.records:
        p = r.actual if basis == BASIS_ACTUAL else r.estimated
        err = math.dist(p, r.planned)
        per_agent_errors.setdefault(r.agent, []).append(err)
        series.append((r.t, r.agent, err))
    per_agent = {
        agent: AgentError(max(errors), sum(errors) / len(errors))
        for agent, errors in sorted(per_agent_errors.items())
    }
    all_errors = [err for _, _, err in series]
    aggregate = AgentError(max(all_errors), sum(all_errors) / len(all_errors))
    return ErrorReport(basis, log.method, log.seed, per_agent, aggregate, tuple(series))
