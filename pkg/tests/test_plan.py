"""Timed plans: interpolation, dual-check validation, plan file round-trips."""

import json
import math

import pytest

from mapflight.geometry3d import CylinderBody
from mapflight.plan import (
    PlanFormatError,
    TimedPlan,
    load_plans,
    save_plans,
    segment_cells,
    validate,
)
from mapflight.world import AgentSpec, GridWorld

BODY = CylinderBody(0.25, 1.0)


def spec(aid, start, goal, speed=0.5, body=BODY):
    return AgentSpec(aid, start, goal, body, speed)


class TestTimedPlan:
    def test_interpolation_and_clamping(self):
        p = TimedPlan(0, ((0.0, 0.0, 0.0, 0.0), (2.0, 0.0, 0.0, 4.0), (2.0, 2.0, 0.0, 8.0)))
        assert p.position_at(2.0) == pytest.approx((1.0, 0.0, 0.0))
        assert p.position_at(6.0) == pytest.approx((2.0, 1.0, 0.0))
        assert p.position_at(-1.0) == pytest.approx((0.0, 0.0, 0.0))  # held at start
        assert p.position_at(99.0) == pytest.approx((2.0, 2.0, 0.0))  # parked at goal
        assert p.end_time == 8.0

    @pytest.mark.parametrize(
        "wps,match",
        [
            ((), "at least one waypoint"),
            (((0.0, 0.0, 0.0),), "four finite numbers"),
            (((0.0, 0.0, math.inf, 0.0),), "four finite numbers"),
            (((0.0, 0.0, 0.0, 0.5),), "must have t = 0"),
            (((0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0)), "not after"),
            (((0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 2.0), (2.0, 0.0, 0.0, 1.0)), "not after"),
        ],
    )
    def test_rejects_malformed_waypoints(self, wps, match):
        with pytest.raises(ValueError, match=match):
            TimedPlan(0, wps)


class TestSegmentCells:
    def test_axis_crossing(self):
        w = GridWorld((3, 3, 1), 1.0)
        got = set(segment_cells(w, (0.5, 0.5, 0.5), (1.5, 0.5, 0.5)))
        assert got == {(0, 0, 0), (1, 0, 0)}

    def test_corner_crossing_is_conservative(self):
        w = GridWorld((3, 3, 1), 1.0)
        got = set(segment_cells(w, (0.5, 0.5, 0.5), (1.5, 1.5, 0.5)))
        # grazing the shared corner counts for all four cells around it
        assert got == {(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)}


class TestValidateBookkeeping:
    def world(self):
        return GridWorld((4, 4, 1), 0.5)

    def straight_plan(self, aid, y):
        return TimedPlan(aid, ((0.25, y, 0.25, 0.0), (1.75, y, 0.25, 3.0)))

    def test_duplicate_plan_ids_rejected(self):
        w = self.world()
        plans = [self.straight_plan(0, 0.25), TimedPlan(0, ((0.25, 1.75, 0.25, 0.0), (1.75, 1.75, 0.25, 3.0)))]
        specs = [spec(0, (0, 0, 0), (3, 0, 0))]
        with pytest.raises(ValueError, match="duplicate plan agent ids"):
            validate(plans, specs, w)

    def test_unknown_and_unplanned_agents_rejected(self):
        w = self.world()
        specs = [spec(0, (0, 0, 0), (3, 0, 0)), spec(1, (0, 3, 0), (3, 3, 0))]
        with pytest.raises(ValueError, match="absent from the instance"):
            validate([self.straight_plan(7, 0.25)], [specs[0]], w)
        with pytest.raises(ValueError, match="without plans"):
            validate([self.straight_plan(0, 0.25)], specs, w)

    def test_bad_sampling_dt_rejected(self):
        with pytest.raises(ValueError, match="sampling_dt"):
            validate([], [], None, sampling_dt=0.0)


class TestValidateChecks:
    def test_clean_plans_pass(self):
        w = GridWorld((4, 4, 1), 0.5)
        plans = [
            TimedPlan(0, ((0.25, 0.25, 0.25, 0.0), (1.75, 0.25, 0.25, 3.0))),
            TimedPlan(1, ((0.25, 1.75, 0.25, 0.0), (1.75, 1.75, 0.25, 3.0))),
        ]
        specs = [spec(0, (0, 0, 0), (3, 0, 0)), spec(1, (0, 3, 0), (3, 3, 0))]
        report = validate(plans, specs, w)
        assert report.ok and not report.violations and report.checked_pairs == 1
        assert report.summary() == "OK (1 agent pairs checked)"

    def test_head_on_swap_is_a_pairwise_violation(self):
        w = GridWorld((3, 1, 1), 0.5)
        plans = [
            TimedPlan(0, ((0.25, 0.25, 0.25, 0.0), (1.25, 0.25, 0.25, 2.0))),
            TimedPlan(1, ((1.25, 0.25, 0.25, 0.0), (0.25, 0.25, 0.25, 2.0))),
        ]
        specs = [spec(0, (0, 0, 0), (2, 0, 0)), spec(1, (2, 0, 0), (0, 0, 0))]
        report = validate(plans, specs, w)
        assert not report.ok
        v = report.violations[0]
        assert v.kind == "pairwise" and v.pair == (0, 1)
        # bodies overlap once the planar gap drops below 0.5 m, at t = 0.5
        assert v.time == pytest.approx(0.5, abs=1e-6)
        assert v.min_separation_found == pytest.approx(0.0, abs=1e-3)
        assert "[pairwise]" in report.summary()

    def test_obstacle_crossing_is_a_static_violation(self):
        w = GridWorld((3, 1, 1), 0.5, frozenset({(1, 0, 0)}))
        plans = [TimedPlan(0, ((0.25, 0.25, 0.25, 0.0), (1.25, 0.25, 0.25, 2.0)))]
        report = validate(plans, [spec(0, (0, 0, 0), (2, 0, 0))], w)
        kinds = [v.kind for v in report.violations]
        assert kinds == ["static"]
        assert "an obstacle" in report.violations[0].detail

    def test_wrong_segment_speed_is_a_kinematic_violation(self):
        w = GridWorld((3, 1, 1), 0.5)
        # 1.0 m in 1.0 s = twice the declared 0.5 m/s
        plans = [TimedPlan(0, ((0.25, 0.25, 0.25, 0.0), (1.25, 0.25, 0.25, 1.0)))]
        report = validate(plans, [spec(0, (0, 0, 0), (2, 0, 0))], w)
        kinds = [v.kind for v in report.violations]
        assert kinds == ["kinematic"]

    def test_wrong_endpoints_are_endpoint_violations(self):
        w = GridWorld((3, 1, 1), 0.5)
        plans = [TimedPlan(0, ((0.25, 0.25, 0.25, 0.0), (0.75, 0.25, 0.25, 1.0)))]
        report = validate(plans, [spec(0, (0, 0, 0), (2, 0, 0))], w)
        kinds = [v.kind for v in report.violations]
        assert kinds == ["endpoint"]
        assert "goal vertex" in report.violations[0].detail

    def test_world_none_skips_static_and_endpoint_checks(self):
        plans = [
            TimedPlan(0, ((0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 2.0))),
            TimedPlan(1, ((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 2.0))),
        ]
        specs = [spec(0, (0, 0, 0), (2, 0, 0)), spec(1, (2, 0, 0), (0, 0, 0))]
        report = validate(plans, specs, None)
        assert [v.kind for v in report.violations] == ["pairwise"]

    def test_parked_goal_is_protected(self):
        # agent 0 reaches its goal at t = 1 and parks; agent 1 flies through
        # that spot at t = 3 — the parked tail must still count as occupied
        plans = [
            TimedPlan(0, ((0.0, 0.0, 0.0, 0.0), (0.5, 0.0, 0.0, 1.0))),
            TimedPlan(1, ((0.5, 2.0, 0.0, 0.0), (0.5, 0.0, 0.0, 4.0))),
        ]
        specs = [
            spec(0, (0, 0, 0), (1, 0, 0)),
            spec(1, (1, 4, 0), (1, 0, 0)),
        ]
        report = validate(plans, specs, None)
        assert not report.ok
        assert report.violations[0].kind == "pairwise"
        assert report.violations[0].time > 1.0


class TestPlanFiles:
    def make(self):
        specs = [
            spec(0, (0, 0, 0), (2, 0, 0), speed=0.4, body=CylinderBody(0.3, 0.8)),
            spec(1, (0, 1, 0), (2, 1, 0)),
        ]
        plans = [
            TimedPlan(0, ((0.25, 0.25, 0.25, 0.0), (1.25, 0.25, 0.25, 2.5))),
            TimedPlan(1, ((0.25, 0.75, 0.25, 0.0), (1.25, 0.75, 0.25, 2.0))),
        ]
        return plans, specs

    def test_roundtrip(self, tmp_path):
        plans, specs = self.make()
        path = tmp_path / "plans.json"
        save_plans(plans, specs, path)
        ps = load_plans(path)
        assert ps.plans == tuple(plans)
        assert ps.bodies == {0: CylinderBody(0.3, 0.8), 1: BODY}
        assert ps.speeds == {0: 0.4, 1: 0.5}

    def test_defaults_fill_missing_body_fields(self, tmp_path):
        path = tmp_path / "plans.json"
        path.write_text(
            json.dumps({"plans": [{"agent": 0, "waypoints": [[0, 0, 0, 0], [1, 0, 0, 2]]}]}),
            encoding="utf-8",
        )
        ps = load_plans(path)
        assert ps.bodies[0] == CylinderBody(0.25, 1.0) and ps.speeds[0] == 0.5

    def write(self, tmp_path, doc):
        path = tmp_path / "plans.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path

    def base_doc(self):
        return {"plans": [{"agent": 0, "waypoints": [[0, 0, 0, 0], [1, 0, 0, 2]]}]}

    def test_not_json(self, tmp_path):
        path = tmp_path / "plans.json"
        path.write_text("[", encoding="utf-8")
        with pytest.raises(PlanFormatError, match="not valid JSON"):
            load_plans(path)

    @pytest.mark.parametrize(
        "mutate,match",
        [
            (lambda d: d.update(extra=1), "exactly one key 'plans'"),
            (lambda d: d.update(plans=[]), "non-empty list"),
            (lambda d: d["plans"][0].update(bogus=1), "unknown keys"),
            (lambda d: d["plans"][0].pop("agent"), "missing required key 'agent'"),
            (lambda d: d["plans"][0].update(agent=-1), "non-negative integer"),
            (lambda d: d["plans"].append(dict(d["plans"][0])), "duplicate agent id"),
            (lambda d: d["plans"][0].update(waypoints=[]), "non-empty list"),
            (lambda d: d["plans"][0].update(waypoints=[[0, 0, 0]]), r"expected \[x, y, z, t\]"),
            (lambda d: d["plans"][0].update(waypoints=[[0, 0, 0, 1], [1, 0, 0, 2]]), "first waypoint must have t = 0"),
            (lambda d: d["plans"][0].update(waypoints=[[0, 0, 0, 0], [1, 0, 0, 0]]), "not after previous"),
            (lambda d: d["plans"][0].update(radius=-1), "positive number"),
        ],
    )
    def test_rejects_malformed_documents(self, tmp_path, mutate, match):
        doc = self.base_doc()
        mutate(doc)
        with pytest.raises(PlanFormatError, match=match):
            load_plans(self.write(tmp_path, doc))
