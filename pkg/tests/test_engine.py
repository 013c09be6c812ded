import csv
import math

import numpy as np
import pytest

from dimp import config, engine, ode
from dimp.config import ScenarioConfig
from dimp.generator import GeneratorError


def _cfg(doc):
    return ScenarioConfig.from_dict(doc)


def test_rk4_scalar_exponential():
    y = ode.integrate(lambda t, y: -y, [1.0], 0.0, 1.0, 0.01)
    assert abs(y[0] - math.exp(-1)) < 1e-8


def test_rk4_step_halving_ratio():
    errs = [abs(ode.integrate(lambda t, y: -y, [1.0], 0.0, 1.0, h)[0] - math.exp(-1)) for h in (0.1, 0.05)]
    assert 8 < errs[0] / errs[1] < 32


def test_time_grid_contains_breaks():
    g = ode.time_grid(0.0, 1.0, 0.3, breaks=[0.45, 2.0])
    np.testing.assert_allclose(g, [0.0, 0.3, 0.45, 0.6, 0.9, 1.0])


def test_time_grid_merges_near_duplicates():
    g = ode.time_grid(0.0, 1.0, 0.1, breaks=[0.3 + 1e-13])
    assert g.size == 11


def test_zero_state_is_equilibrium(tiny):
    for tmpl in tiny["templates"].values():
        tmpl["init"] = {"x": [0, 0], "xi": [0, 0, 0, 0], "w": [0, 0], "S": [[0, 1], [-1, 0]], "beta_hat": [1]}
    tiny["exosystem"]["w0"] = [0, 0]
    tiny["seed"] = None
    traj = engine.simulate(config.build(_cfg(tiny)), horizon=5.0)
    for name in ("z", "x", "xi", "w_err"):
        assert np.all(traj.series[name] == 0.0), name


def test_tiny_run_regulates(tiny):
    traj, m = engine.run(_cfg(tiny))
    assert m.passed
    assert m.values["tail_max_regulation_error"] < 1e-2
    assert m.values["max_closed_loop_real_part"] < 0
    assert traj.series["z"].shape == (traj.t.size, 2, 1)


def test_samples_on_decimated_grid(tiny):
    traj = engine.simulate(config.build(_cfg(tiny)), horizon=3.0)
    np.testing.assert_allclose(traj.t, np.arange(0, 3.01, 0.1), atol=1e-12)


def test_seed_override_changes_draws(tiny):
    a = config.build(_cfg(tiny))
    b = config.build(_cfg(tiny), seed=12)
    assert not np.array_equal(a.agents[0].init["x"], b.agents[0].init["x"])


def test_determinism_bitwise_csv(tiny, tmp_path):
    paths = []
    for j in range(2):
        traj, _ = engine.run(_cfg(tiny), horizon=6.0)
        p = tmp_path / f"run{j}.csv"
        engine.write_csv(traj, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_csv_schema(tiny, tmp_path):
    traj, _ = engine.run(_cfg(tiny), horizon=1.0)
    p = tmp_path / "t.csv"
    engine.write_csv(traj, p, ["z", "beta_hat"])
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["t", "agent", "series", "component", "value"]
    assert {r[2] for r in rows[1:]} == {"z", "beta_hat"}
    assert {r[1] for r in rows[1:]} == {"1", "2"}


def test_metrics_text_is_flat_key_value(tiny):
    _, m = engine.run(_cfg(tiny), horizon=2.0)
    lines = m.text().strip().splitlines()
    assert all(": " in line for line in lines)
    assert lines[-1] in ("passed: true", "passed: false")


def test_divergence_guard_names_agent(tiny):
    tiny["agents"][1] = {"template": "t", "dA": [[30, 0], [0, 30]]}
    with pytest.raises(engine.DivergenceError, match="agent 2"):
        engine.run(_cfg(tiny))


def test_short_horizon_misses_threshold(tiny):
    _, m = engine.run(_cfg(tiny), horizon=1.0)
    assert not m.passed


def test_alpha_trace_without_imaginary_zeros(tiny):
    traj, _ = engine.run(_cfg(tiny), horizon=3.0)
    trace = engine.alpha_activation_trace(traj)
    assert all(v == {"intervals": [], "mismatches": 0} for v in trace.values())


def test_alpha_trace_single_interval_for_monotone_estimate(tiny):
    # numerator s^2 + 0.25 puts a zero pair at +-0.5j; the estimate climbs from 0 to 1
    for t in tiny["templates"].values():
        t.update({"A": [[0, 1, 0], [0, 0, 1], [-1, -2, -2]], "B": [[0], [0], [1]], "C": [[0.25, 0, 1]],
                  "P": [[0, 0], [0, 0], [1, 0]], "dA": [[0, 0, 0], [0, 0, 0], [0, 0, 0]],
                  "observer_poles": [-2, -3, -4], "state_poles": [-1, -1.5, -2, -2.5, -3]})
    traj, _ = engine.run(_cfg(tiny), horizon=20.0)
    assert np.allclose(traj.meta["rho"], 0.25)
    trace = engine.alpha_activation_trace(traj)
    for lab, v in trace.items():
        assert v["mismatches"] == 0
        assert len(v["intervals"]) == 1, (lab, v)
    # clearance from the zeros never drops below the radius
    assert np.min(traj.series["zero_clearance"]) >= 0.25 * (1 - 1e-9)


def test_companion_generator_mode(tiny):
    tiny["options"] = {"generator_mode": "companion"}
    tiny["exosystem"]["S0"] = [[0, 1], [-1, 0]]
    traj, m = engine.run(_cfg(tiny))
    assert m.passed


def test_sync_run_small():
    doc = {
        "name": "sync_small", "mode": "synchronization", "seed": 3,
        "integrator": {"h": 0.01, "horizon": 40.0, "decimation": 10},
        "reference": {"S_star": [[0, 1], [-1, 0]], "roots": [1, 2]},
        "graph": {"snapshots": [[[1, 2, 1], [2, 1, 1], [2, 3, 1]]], "schedule": [[0, 1]]},
        "templates": {"t": {
            "A": [[0, 1], [0, -1]], "B": [[0], [1]], "C": [[1, 0]], "D": [[0]],
            "observer_poles": [-2, -3], "state_poles": [-1, -1.5, -2, -2.5],
            "init": {"x": {"uniform": [-1, 1]}, "xi": {"uniform": [-1, 1]}, "w": {"uniform": [-1, 1]},
                     "S": [[0, 0], [0, 0]], "beta_hat": {"uniform": [0, 1]}, "Q": [[-1, 0]]}}},
        "agents": [
            {"template": "t", "init": {"S": [[0, 1], [-1, 0]], "beta_hat": [1]}},
            {"template": "t", "init": {"S": [[0, 1], [-1, 0]], "beta_hat": [1]}},
            {"template": "t"},
        ],
    }
    traj, m = engine.run(_cfg(doc))
    assert m.passed, m.text()
    assert m.values["tail_max_pairwise_output_gap"] < 1e-2


def test_sync_unequal_root_s_rejected():
    doc = {
        "name": "bad", "mode": "synchronization",
        "reference": {"S_star": [[0, 1], [-1, 0]], "roots": [1, 2]},
        "graph": {"snapshots": [[[1, 2, 1], [2, 1, 1]]], "schedule": [[0, 1]]},
        "agents": [
            {"A": [[-1]], "B": [[1]], "C": [[1]], "D": [[0]], "observer_poles": [-1],
             "state_poles": [-1, -2, -3], "init": {"S": [[0, 1], [-1, 0]], "Q": [[1, 0]]}},
            {"A": [[-1]], "B": [[1]], "C": [[1]], "D": [[0]], "observer_poles": [-1],
             "state_poles": [-1, -2, -3], "init": {"S": [[0, 2], [-2, 0]], "Q": [[1, 0]]}},
        ],
    }
    with pytest.raises(GeneratorError, match="same initial S"):
        engine.run(_cfg(doc))
