import json
import subprocess
import sys

import pytest

from cmvlab import run, sweep
from cmvlab.misc import ConfigInvalid

LEBESGUE = {"scenario": "solve", "verblunsky": {"kind": "zero"}, "order": 2, "window": 32}
CONSTANT = {**LEBESGUE, "verblunsky": {"kind": "constant", "value": "3/5"}, "order": 3}


def test_version(cli):
    result = cli("--version")

    assert "version: " in result.output


class TestSolve:
    def test_lebesgue(self, cli, scenario):
        result = cli("solve", "-c", scenario(LEBESGUE), "--plain")

        assert result.exit_code == 0
        report = result.json
        assert report["status"] == "ok"
        assert report["backend"] == "exact"
        assert report["result"]["dimension"] == 2
        assert report["result"]["classification"] == "lebesgue"
        assert report["result"]["basis"][1][:3] == [[1, 1, "-1"], [2, 2, "1"], [3, 3, "-2"]]
        assert report["scenario"]["pattern"] == {"kind": "diagonal", "size": 24, "head": 0}

    def test_constant_coefficients(self, cli, scenario):
        result = cli("solve", "-c", scenario(CONSTANT), "--plain")

        assert result.exit_code == 0
        assert result.json["result"]["dimension"] == 1
        assert result.json["result"]["classification"] == "trivial"

    def test_summary(self, cli, scenario):
        result = cli("solve", "-c", scenario(LEBESGUE), "--summary")

        assert result.exit_code == 0
        assert result.stdout.strip() == "solve: dimension=2 classification=lebesgue"

    def test_float_backend_override(self, cli, scenario):
        result = cli("solve", "-c", scenario(LEBESGUE), "--backend", "float", "--plain")

        assert result.exit_code == 0
        assert result.json["backend"] == "float"
        assert result.json["result"]["dimension"] == 2

    def test_window_override(self, cli, scenario):
        result = cli("solve", "-c", scenario(LEBESGUE), "--window", "28", "--plain")

        assert result.exit_code == 0
        assert result.json["scenario"]["window"] == 28

    def test_rich_output_is_json(self, cli, scenario):
        result = cli("solve", "-c", scenario(LEBESGUE))

        assert result.exit_code == 0
        assert result.json["result"]["dimension"] == 2

    def test_reproducible(self, cli, scenario):
        path = scenario(CONSTANT)

        assert cli("solve", "-c", path, "--plain").stdout == cli(
            "solve", "-c", path, "--plain"
        ).stdout


class TestOutput:
    def test_out_file(self, cli, scenario, tmp_path):
        target = tmp_path / "report.json"

        result = cli("solve", "-c", scenario(LEBESGUE), "--out", str(target))

        assert result.exit_code == 0
        assert result.stdout == ""
        assert json.loads(target.read_text())["result"]["dimension"] == 2

    def test_output_from_config(self, cli, scenario, tmp_path):
        target = tmp_path / "from_config.json"

        result = cli("solve", "-c", scenario({**CONSTANT, "output": str(target)}))

        assert result.exit_code == 0
        assert json.loads(target.read_text())["result"]["classification"] == "trivial"

    def test_timing(self, cli, scenario):
        timed = cli("solve", "-c", scenario({**CONSTANT, "timing": True}), "--plain")
        untimed = cli("solve", "-c", scenario(CONSTANT), "--plain")

        assert timed.json["wall_clock"] >= 0
        assert untimed.json["wall_clock"] is None


class TestOtherScenarios:
    def test_verify(self, cli, scenario):
        config = {
            "verblunsky": {"kind": "random", "length": 24, "seed": 4},
            "omega": {"kind": "random", "band": 1, "seed": 2},
            "order": 2,
            "window": 24,
        }

        result = cli("verify", "-c", scenario(config), "--plain")

        assert result.exit_code == 0
        assert result.json["result"]["passed"] is True
        assert all(result.json["result"]["identities"].values())
        assert result.json["result"]["symbol"] is None
        assert len(result.json["scenario"]["verblunsky"]["values"]) == 24

    def test_verify_symbol(self, cli, scenario):
        config = {
            "verblunsky": {"kind": "constant", "value": "3/5"},
            "omega": {"kind": "symbol", "symbol": {"-1": "2", "1": "2"}},
            "order": 1,
            "window": 20,
        }

        result = cli("verify", "-c", scenario(config), "--plain")

        assert result.exit_code == 0
        assert result.json["result"]["symbol"] == {"-1": "2", "1": "2"}

    def test_kernel(self, cli, scenario):
        config = {"order": 2, "z": "2", "window": 20, "tail": "lebesgue"}

        result = cli("kernel", "-c", scenario(config), "--plain")

        assert result.exit_code == 0
        assert result.json["result"]["passed"] is True
        assert result.json["result"]["gamma"][:4] == ["1", "4", "1", "4"]
        assert result.json["result"]["delta_matches"] is True

    def test_reconstruct(self, cli, scenario):
        config = {"omega": {"kind": "lebesgue"}, "order": 1, "window": 32}

        result = cli("reconstruct", "-c", scenario(config), "--plain")

        assert result.exit_code == 0
        assert result.json["result"] == {"order": 1, "coefficients": [{}, {"1": "1"}]}

    def test_reconstruct_operator(self, cli, scenario):
        config = {
            "omega": {"kind": "operator", "coefficients": [{}, {"1": "1"}, {"2": "1"}]},
            "order": 2,
            "window": 40,
        }

        result = cli("reconstruct", "-c", scenario(config), "--plain")

        assert result.exit_code == 0
        assert result.json["result"]["coefficients"] == [{}, {"1": "1"}, {"2": "1"}]

    def test_olp(self, cli, scenario):
        config = {"verblunsky": {"kind": "constant", "value": "3/5"}, "count": 4}

        result = cli("olp", "-c", scenario(config), "--plain")

        assert result.exit_code == 0
        assert result.json["result"]["oracle_agrees"] is True
        assert result.json["result"]["x"][0] == {"0": "1"}
        assert len(result.json["result"]["chi"]) == 5


class TestFailures:
    def test_domain_error_exits_with_1(self, cli, scenario):
        config = {
            "verblunsky": {"kind": "constant", "value": "3/5"},
            "omega": {"kind": "lebesgue"},
            "order": 1,
            "window": 32,
        }

        result = cli("reconstruct", "-c", scenario(config), "--plain")

        assert result.exit_code == 1
        assert result.json["status"] == "error"
        assert result.json["error"]["type"] == "NoSolution"

    @pytest.mark.parametrize(
        "config, field",
        [
            ({"window": 2}, "window"),
            ({"order": 0}, "order"),
            ({"backend": "decimal"}, "backend"),
            ({"tolerance": {"tau": -1}}, "tolerance.tau"),
            ({"pattern": {"kind": "diagonal", "size": 40}}, "pattern.size"),
            ({"verblunsky": {"kind": "constant", "value": "1/2"}}, "verblunsky"),
            ({"verblunsky": {"kind": "geometric", "c": "1/2", "r": 0.5}}, "verblunsky"),
        ],
    )
    def test_invalid_config_exits_with_2(self, cli, scenario, config, field):
        result = cli("solve", "-c", scenario({**LEBESGUE, **config}))

        assert result.exit_code == 2
        assert result.stdout == ""
        assert field in result.stderr

    def test_all_problems_are_reported(self):
        with pytest.raises(ConfigInvalid) as info:
            run({"window": 2, "order": -1, "backend": "decimal"})

        assert {field for field, _ in info.value.errors} == {"window", "order", "backend"}

    def test_broken_json(self, cli, scenario):
        result = cli("solve", "-c", scenario("{not json"))

        assert result.exit_code == 2

    def test_missing_file(self, cli, tmp_path):
        result = cli("solve", "-c", str(tmp_path / "missing.json"))

        assert result.exit_code == 2


class TestSweep:
    def configs(self):
        return [
            LEBESGUE,
            {"scenario": "olp-dump", "count": 3},
            {"scenario": "solve", "window": 1},
            CONSTANT,
        ]

    def test_order_and_isolation(self, cli, scenario):
        result = cli("sweep", "-c", scenario(self.configs()), "--plain")

        assert result.exit_code == 1
        reports = result.json
        assert [r["status"] for r in reports] == ["ok", "ok", "error", "ok"]
        assert reports[2]["error"]["type"] == "ConfigInvalid"
        assert reports[3]["result"]["dimension"] == 1

    def test_parallel_matches_sequential(self, scenario, cli):
        path = scenario(self.configs())

        sequential = cli("sweep", "-c", path, "--plain")
        parallel = cli("sweep", "-c", path, "--plain", "--parallelism", "2")

        assert sequential.json == parallel.json

    def test_summary(self, cli, scenario):
        result = cli("sweep", "-c", scenario([LEBESGUE, CONSTANT]), "--summary")

        assert result.exit_code == 0
        assert result.stdout.splitlines() == [
            "solve: dimension=2 classification=lebesgue",
            "solve: dimension=1 classification=trivial",
        ]

    def test_needs_a_list(self, cli, scenario):
        result = cli("sweep", "-c", scenario(LEBESGUE))

        assert result.exit_code == 2

    def test_programmatic(self):
        reports = sweep([CONSTANT, {"scenario": "olp-dump", "count": 2}])

        assert [r["status"] for r in reports] == ["ok", "ok"]

    def test_programmatic_arguments(self):
        with pytest.raises(ValueError):
            sweep([])
        with pytest.raises(ValueError):
            sweep([CONSTANT], parallelism=0)


def test_run_is_programmatic_solve():
    report = run(LEBESGUE)

    assert report["result"]["classification"] == "lebesgue"
    assert json.loads(json.dumps(report)) == report


def test_cmvlab_as_subprocess_module(scenario):
    result = subprocess.run(
        [sys.executable, "-m", "cmvlab", "olp", "-c", scenario({"count": 2}), "--plain"],
        capture_output=True,
    )

    assert result.returncode == 0
    assert json.loads(result.stdout)["result"]["x"][0] == {"0": "1"}
