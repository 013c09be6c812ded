import io
import json
import subprocess
import sys

import pytest

from dimp import cli, config


def _write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_validate_bundled_regulation():
    out = io.StringIO()
    assert cli.cmd_validate("regulation_4agent", out=out) == cli.EXIT_OK
    text = out.getvalue()
    assert "no_imaginary_zeros: not satisfied (handled by semicircle avoidance)" in text
    assert "FAIL" not in text
    assert text.rstrip().endswith("valid: true")


def test_validate_bundled_sync():
    out = io.StringIO()
    assert cli.cmd_validate("sync_5agent", out=out) == cli.EXIT_OK
    assert "graph rooted_component: pass" in out.getvalue()


def test_validate_rejects_unequal_root_s():
    doc = config.load("sync_5agent").to_dict()
    doc["agents"][1]["init"]["S"] = [[0, 2], [-2, 0]]
    lines, ok = cli.validate_scenario(config.build(config.ScenarioConfig.from_dict(doc)))
    assert not ok
    assert any(line.startswith("root_initial_S: FAIL") for line in lines)


def test_validate_rejects_m_less_than_q(tmp_path, tiny):
    tiny["templates"]["t"].update({"C": [[1, 0], [0, 1]], "D": [[0], [0]], "Q": [[-1, 0], [0, 0]]})
    assert cli.main(["validate", _write(tmp_path, tiny)]) == cli.EXIT_ERROR


def test_validate_broken_connectivity(tmp_path, tiny):
    tiny["graph"]["snapshots"] = [[[0, 1, 1]], [[0, 1, 1]]]
    path = _write(tmp_path, tiny)
    out = io.StringIO()
    assert cli.cmd_validate(path, out=out) == cli.EXIT_ERROR
    assert "graph spanning_tree: FAIL" in out.getvalue()
    assert cli.cmd_validate(path, allow_violations=True, out=io.StringIO()) == cli.EXIT_OK


def test_run_writes_outputs(tmp_path, tiny):
    out = io.StringIO()
    code = cli.cmd_run(_write(tmp_path, tiny), tmp_path / "out", out=out)
    assert code == cli.EXIT_OK
    metrics = (tmp_path / "out" / "metrics.txt").read_text()
    assert "passed: true" in metrics and "seed: 11" in metrics and "scenario: tiny" in metrics
    header = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,agent,series,component,value"


def test_run_threshold_miss_exits_1(tmp_path, tiny):
    tiny["integrator"]["horizon"] = 2.0
    assert cli.cmd_run(_write(tmp_path, tiny), tmp_path / "out", out=io.StringIO()) == cli.EXIT_THRESHOLD


def test_run_refuses_invalid_without_flag(tmp_path, tiny):
    tiny["graph"]["snapshots"] = [[[0, 1, 1]], [[0, 1, 1]]]
    tiny["integrator"]["horizon"] = 1.0
    path = _write(tmp_path, tiny)
    assert cli.cmd_run(path, tmp_path / "o", out=io.StringIO()) == cli.EXIT_ERROR
    assert cli.cmd_run(path, tmp_path / "o", allow_violations=True, out=io.StringIO()) in (0, 1)


def test_run_seed_override(tmp_path, tiny):
    tiny["integrator"]["horizon"] = 1.0
    path = _write(tmp_path, tiny)
    cli.cmd_run(path, tmp_path / "o", seed=99, out=io.StringIO())
    assert "seed: 99" in (tmp_path / "o" / "metrics.txt").read_text()


def test_zeros_listing():
    out = io.StringIO()
    assert cli.cmd_zeros("regulation_4agent", out=out) == cli.EXIT_OK
    lines = out.getvalue().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("agent 1: Pi=[+0+0.6j, +0-0.6j]")
    for i, line in enumerate(lines, start=1):
        rho = float(line.rsplit("rho=", 1)[1])
        assert rho == pytest.approx((2 - (0.5 + 0.1 * i)) / 2, abs=1e-9)


def test_zeros_zero_free_agent(tmp_path, tiny):
    out = io.StringIO()
    cli.cmd_zeros(_write(tmp_path, tiny), out=out)
    assert "Pi=[] Pi_tilde=[] rho=0.0" in out.getvalue()


def test_zeros_mixed_sets(tmp_path, tiny):
    # numerator (s^2 + 0.25)(s - 1): imaginary pair plus an open right-half-plane zero
    tiny["exosystem"]["S0"] = [[0, 2], [-2, 0]]
    tiny["templates"]["t"].update({
        "A": [[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [-1, -4, -6, -4]],
        "B": [[0], [0], [0], [1]], "C": [[-0.25, 0.25, -1, 1]],
        "P": [[0, 0], [0, 0], [0, 0], [1, 0]], "dA": [[0] * 4] * 4,
        "observer_poles": [-1, -2, -3, -4], "state_poles": [-1, -1.5, -2, -2.5, -3, -3.5]})
    out = io.StringIO()
    cli.cmd_zeros(_write(tmp_path, tiny), out=out)
    rho = float(out.getvalue().splitlines()[0].rsplit("rho=", 1)[1])
    # distances: exosystem 1.5, open zero |1 - 0.5j| = 1.118; half the smaller
    assert rho == pytest.approx(0.5 * abs(1 - 0.5j), abs=1e-9)


def test_gen_large_small(tmp_path):
    p = tmp_path / "g.json"
    assert cli.cmd_gen_large(7, p, out=io.StringIO()) == cli.EXIT_OK
    cfg = config.load(p)
    assert len(cfg.data["agents"]) == 7
    assert [a["template"] for a in cfg.data["agents"]] == ["m1", "m2", "m3", "m4", "m5", "m1", "m2"]
    lines, ok = cli.validate_scenario(config.build(cfg))
    assert ok, lines


def test_gen_large_tree_levels():
    doc = cli.large_network(155)
    # 5 + 25 + 125 edges into levels 1, 2 and 3
    assert [len(s) for s in doc["graph"]["snapshots"]] == [5, 25, 125]
    assert doc["graph"]["schedule"] == [[0, 2], [1, 3], [2, 5]]


def test_gen_large_rejects_empty():
    assert cli.main(["gen-large", "--agents", "0"]) == cli.EXIT_ERROR


def test_main_missing_file():
    assert cli.main(["validate", "/nonexistent.json"]) == cli.EXIT_ERROR


def test_main_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus"])
    assert exc.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dimp", "zeros", "regulation_4agent"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "rho=0.7" in res.stdout
