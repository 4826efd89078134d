"""End-to-end command line flows and their exit codes."""

import json
import shutil

import pytest

from mapflight.cli import (
    EXIT_BAD_INPUT,
    EXIT_INVALID_PLAN,
    EXIT_LIMIT,
    EXIT_NO_SOLUTION,
    EXIT_OK,
    EXIT_SIM_FAILED,
    EXIT_USAGE,
    main,
)

SWAP_INSTANCE = {
    "grid": {"dims": [4, 4, 1], "cell_size": 0.5},
    "agents": [
        {"id": 0, "start": [0, 0, 0], "goal": [2, 0, 0]},
        {"id": 1, "start": [2, 0, 0], "goal": [0, 0, 0]},
    ],
}

# goals stack in one xy column half a cell apart: no branching can fix that
OVERLAPPING_GOALS = {
    "grid": {"dims": [2, 2, 2], "cell_size": 0.5},
    "agents": [
        {"id": 0, "start": [0, 0, 0], "goal": [1, 0, 0]},
        {"id": 1, "start": [0, 1, 1], "goal": [1, 0, 1]},
    ],
}


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture()
def planned(tmp_path, scenario_dir):
    """Solve the two-agent demo once; many tests replay its plan file."""
    instance = scenario_dir / "method_comparison.json"
    plans = tmp_path / "plans.json"
    assert main(["plan", "--instance", str(instance), "--out", str(plans)]) == EXIT_OK
    return instance, plans


class TestTopLevel:
    def test_version_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_no_arguments_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_simulate_method_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--plans", "x.json", "--method", "teleport", "--out", str(tmp_path)])
        assert exc.value.code == EXIT_USAGE


class TestPlan:
    def test_solves_and_writes_plans(self, tmp_path, scenario_dir, capsys):
        out = tmp_path / "nested" / "plans.json"
        code = main(["plan", "--instance", str(scenario_dir / "method_comparison.json"), "--out", str(out)])
        assert code == EXIT_OK and out.is_file()
        stdout = capsys.readouterr().out
        assert "solver: solved" in stdout and "cost=6.0" in stdout

    def test_missing_instance(self, tmp_path, capsys):
        code = main(["plan", "--instance", str(tmp_path / "nope.json"), "--out", str(tmp_path / "p.json")])
        assert code == EXIT_BAD_INPUT
        assert "not found" in capsys.readouterr().err

    def test_malformed_instance(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops", encoding="utf-8")
        code = main(["plan", "--instance", str(bad), "--out", str(tmp_path / "p.json")])
        assert code == EXIT_BAD_INPUT
        assert "invalid instance" in capsys.readouterr().err

    def test_unsolvable_instance(self, tmp_path, capsys):
        inst = write_json(tmp_path / "stacked.json", OVERLAPPING_GOALS)
        code = main(["plan", "--instance", str(inst), "--out", str(tmp_path / "p.json")])
        assert code == EXIT_NO_SOLUTION
        assert "overlapping bodies" in capsys.readouterr().out

    def test_expansion_limit(self, tmp_path, capsys):
        inst = write_json(tmp_path / "swap.json", SWAP_INSTANCE)
        code = main(
            ["plan", "--instance", str(inst), "--out", str(tmp_path / "p.json"), "--expansions-limit", "0"]
        )
        assert code == EXIT_LIMIT
        assert "limit exceeded" in capsys.readouterr().out


class TestValidate:
    def test_good_plans_pass(self, planned, capsys):
        instance, plans = planned
        assert main(["validate", "--instance", str(instance), "--plans", str(plans)]) == EXIT_OK
        assert capsys.readouterr().out.startswith("OK")

    def test_tampered_plans_fail(self, planned, tmp_path, capsys):
        instance, plans = planned
        doc = json.loads(plans.read_text(encoding="utf-8"))
        doc["plans"][0]["waypoints"][1][0] += 0.2  # bend one segment off its vertex line
        tampered = write_json(tmp_path / "tampered.json", doc)
        code = main(["validate", "--instance", str(instance), "--plans", str(tampered)])
        assert code == EXIT_INVALID_PLAN
        assert "violation" in capsys.readouterr().out

    def test_plans_for_a_different_instance(self, planned, tmp_path, capsys):
        instance, plans = planned
        doc = json.loads(plans.read_text(encoding="utf-8"))
        doc["plans"][0]["agent"] = 7
        mismatched = write_json(tmp_path / "mismatched.json", doc)
        code = main(["validate", "--instance", str(instance), "--plans", str(mismatched)])
        assert code == EXIT_BAD_INPUT
        assert "do not match instance" in capsys.readouterr().err


class TestSimulate:
    def test_writes_the_run_bundle(self, planned, tmp_path, capsys):
        _, plans = planned
        out = tmp_path / "run"
        code = main(["simulate", "--plans", str(plans), "--method", "bll", "--seed", "5", "--out", str(out)])
        assert code == EXIT_OK
        for name in ("poses.csv", "error_series.csv", "errors.json", "manifest.json"):
            assert (out / name).is_file(), name
        errors = json.loads((out / "errors.json").read_text(encoding="utf-8"))
        assert errors["method"] == "bll" and errors["seed"] == 5
        assert len(errors["config_hash"]) == 64
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "simulate" and manifest["completed"] is True
        assert set(manifest["outputs"]) == {"poses.csv", "error_series.csv", "errors.json"}
        assert manifest["config"]["seed"] == 5
        stdout = capsys.readouterr().out
        assert "tracking error:" in stdout

    def test_config_file_round_trip(self, planned, tmp_path):
        _, plans = planned
        cfg = write_json(tmp_path / "cfg.json", {"noise_sigma": 0.0, "seed": 3})
        out = tmp_path / "run"
        code = main(["simulate", "--plans", str(plans), "--method", "vll", "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        errors = json.loads((out / "errors.json").read_text(encoding="utf-8"))
        assert errors["seed"] == 3

    @pytest.mark.parametrize(
        "doc,needle",
        [
            ({"warp_factor": 9}, "unknown keys"),
            ({"noise_sigma": -1.0}, "bad simulation config"),
            ([1, 2], "must hold a JSON object"),
        ],
    )
    def test_bad_config_files(self, planned, tmp_path, capsys, doc, needle):
        _, plans = planned
        cfg = write_json(tmp_path / "cfg.json", doc)
        code = main(["simulate", "--plans", str(plans), "--method", "bll", "--config", str(cfg), "--out", str(tmp_path / "r")])
        assert code == EXIT_BAD_INPUT
        assert needle in capsys.readouterr().err

    def test_missing_plans_file(self, tmp_path, capsys):
        code = main(["simulate", "--plans", str(tmp_path / "no.json"), "--method", "bll", "--out", str(tmp_path / "r")])
        assert code == EXIT_BAD_INPUT
        assert "plan file not found" in capsys.readouterr().err


class TestBench:
    def test_empty_directory(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["bench", "--scenarios", str(empty), "--out", str(tmp_path / "out")])
        assert code == EXIT_BAD_INPUT
        assert "no instance files" in capsys.readouterr().err

    def test_unknown_method(self, tmp_path, scenario_dir):
        code = main(
            ["bench", "--scenarios", str(scenario_dir), "--methods", "warp", "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_USAGE

    def test_bad_repetitions(self, tmp_path, scenario_dir):
        code = main(
            ["bench", "--scenarios", str(scenario_dir), "--repetitions", "0", "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_USAGE

    def test_batch_over_two_scenarios(self, tmp_path, scenario_dir):
        src = tmp_path / "scenarios"
        src.mkdir()
        for name in ("method_comparison.json", "swarm_2.json"):
            shutil.copy(scenario_dir / name, src / name)
        out = tmp_path / "out"
        code = main(
            ["bench", "--scenarios", str(src), "--methods", "bll", "--repetitions", "2",
             "--seed", "0", "--out", str(out)]
        )
        assert code == EXIT_OK
        bench = json.loads((out / "bench.json").read_text(encoding="utf-8"))
        assert bench["repetitions"] == 2 and bench["methods"] == ["bll"]
        assert not bench["failures"]
        assert {(r["scenario"], r["method"]) for r in bench["rows"]} == {
            ("method_comparison", "bll"),
            ("swarm_2", "bll"),
        }
        for row in bench["rows"]:
            assert row["runs"] == 2 and row["success_rate"] == 1.0
            assert 0.0 < row["mean_avg_error"] < 1.0
            assert (out / f"{row['scenario']}_plans.json").is_file()
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "bench"
        assert set(manifest["inputs"]) == {"method_comparison", "swarm_2"}

    def test_failures_are_recorded_and_the_batch_continues(self, tmp_path, scenario_dir, capsys):
        src = tmp_path / "scenarios"
        src.mkdir()
        shutil.copy(scenario_dir / "method_comparison.json", src / "method_comparison.json")
        write_json(src / "stacked.json", OVERLAPPING_GOALS)
        out = tmp_path / "out"
        code = main(
            ["bench", "--scenarios", str(src), "--methods", "bhl", "--repetitions", "1", "--out", str(out)]
        )
        assert code == EXIT_SIM_FAILED
        bench = json.loads((out / "bench.json").read_text(encoding="utf-8"))
        assert [f["scenario"] for f in bench["failures"]] == ["stacked"]
        assert bench["failures"][0]["stage"] == "plan"
        # the solvable scenario still produced its row
        assert [r["scenario"] for r in bench["rows"]] == ["method_comparison"]
