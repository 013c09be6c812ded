"""Command-line front end.

Subcommands::

    dimp validate <cfg> [--allow-violations]
    dimp run <cfg> --out <dir> [--seed N] [--allow-violations]
    dimp zeros <cfg>
    dimp gen-large [--agents N] [--out FILE]

``<cfg>`` is a path or the name of a bundled scenario.  Exit codes: 0 on
success, 1 when a run misses a configured threshold, 2 on any error
(including failed validation).  ``DIMP_LOG_LEVEL`` sets log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config, engine, matops
from .config import ConfigError
from .graph import rooted_component_check, uniformly_contains_spanning_tree
from .internal_model import geometry_for
from .plant import ExosystemModel, ModelError, check_assumptions, transmission_zeros

EXIT_OK, EXIT_THRESHOLD, EXIT_ERROR = 0, 1, 2

log = logging.getLogger("dimp")


def validate_scenario(sc: config.Scenario) -> tuple[list[str], bool]:
    """Assumption and connectivity report for a built scenario."""
    lines, ok = [], True
    exo = sc.exo if sc.exo is not None else ExosystemModel(sc.S_ref, np.zeros(sc.S_ref.shape[0]))
    start = 1 if sc.mode == "regulation" else 0
    tol = float(sc.config.data["options"]["rank_tol"])
    for i, a in enumerate(sc.agents):
        label = sc.graph.labels[i + start]
        rep = check_assumptions(a.model, exo, tol)
        ok &= rep.ok
        lines += [f"agent {label} {line}" for line in rep.lines()]
    if sc.mode == "regulation":
        chk = uniformly_contains_spanning_tree(sc.graph, root=0, T=sc.window)
        name = "spanning_tree"
    else:
        chk = rooted_component_check(sc.graph, sc.roots, T=sc.window)
        name = "rooted_component"
        for lab in sc.roots:
            S = sc.agents[sc.graph.index(lab)].init["S"]
            if S is not None and not np.array_equal(S, sc.S_ref):
                lines.append(f"root_initial_S: FAIL (agent {lab} does not start from the reference S)")
                ok = False
    detail = chk.reason + (" (checked over the listed schedule only)" if chk.horizon_limited else "")
    lines.append(f"graph {name}: {'pass' if chk.ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
    ok &= chk.ok
    return lines, bool(ok)


def cmd_validate(path, allow_violations=False, out=sys.stdout) -> int:
    sc = config.build(config.load(path))
    lines, ok = validate_scenario(sc)
    for line in lines:
        print(line, file=out)
    print(f"valid: {'true' if ok else 'false'}", file=out)
    return EXIT_OK if ok or allow_violations else EXIT_ERROR


def cmd_run(path, out_dir, seed=None, allow_violations=False, out=sys.stdout) -> int:
    cfg = config.load(path)
    sc = config.build(cfg, seed)
    lines, ok = validate_scenario(sc)
    if not ok:
        for line in lines:
            log.error(line)
        if not allow_violations:
            print("validation failed; rerun with --allow-violations to proceed anyway", file=out)
            return EXIT_ERROR
    traj, metrics = engine.run(sc)
    metrics.values["seed"] = sc.seed
    metrics.values["scenario"] = cfg.name
    outdir = Path(out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    engine.write_csv(traj, outdir / "trajectory.csv", cfg.data["export"]["series"])
    engine.write_metrics(metrics, outdir / "metrics.txt")
    print(metrics.text(), end="", file=out)
    return EXIT_OK if metrics.passed else EXIT_THRESHOLD


def _fmt_c(z: complex) -> str:
    return f"{z.real:+.6g}{z.imag:+.6g}j"


def cmd_zeros(path, out=sys.stdout) -> int:
    sc = config.build(config.load(path))
    sigma = matops.eig(sc.S_ref)
    coeff = float(sc.config.data["options"]["rho_coefficient"])
    start = 1 if sc.mode == "regulation" else 0
    for i, a in enumerate(sc.agents):
        zs = transmission_zeros(a.model)
        geom = geometry_for(sigma, zs, coeff, a.rho)
        print(f"agent {sc.graph.labels[i + start]}: Pi=[{', '.join(map(_fmt_c, zs.pi))}] "
              f"Pi_tilde=[{', '.join(map(_fmt_c, zs.pi_tilde))}] rho={geom.rho!r}", file=out)
    return EXIT_OK


def large_network(agents: int = 155, seed: int = 1, horizon: float = 400.0) -> dict:
    """Scenario document for the five-type network on a 5-ary tree.

    Node ``v`` hangs below node ``(v - 1) // 5``; edges into tree level ``l``
    are active in snapshot ``(l - 1) mod 3`` and the snapshots dwell 2, 3
    and 5 seconds in turn.
    """
    if agents < 1:
        raise ConfigError("agents: must be at least 1")
    snaps = [[], [], []]
    for v in range(1, agents + 1):
        parent = (v - 1) // 5
        level, u = 1, parent
        while u > 0:
            u = (u - 1) // 5
            level += 1
        snaps[(level - 1) % 3].append([parent, v, 1])
    templates = {}
    for m in range(1, 6):
        b = (0.1 * m + 0.2) ** 2 + m + 1
        templates[f"m{m}"] = {
            "A": [[0, 1], [m, 2]], "B": [[1, 0], [round(b, 12), 1]],
            "C": [[1, 0], [0, 1]], "D": [[1, 0], [0, 1]],
            "P": [[0, 1], [1, 0]], "Q": [[-1, 0], [0, -1]],
            "dA": [[0, 0], [0, -0.1]], "dB": [[0, 0], [-0.1, 0]],
            "observer_poles": [-1.2, -1.21],
            "state_poles": [-0.70, -0.71, -0.72, -0.73, -0.74, -0.75],
            "init": {"x": {"uniform": [-1, 1]}, "xi": {"uniform": [-1, 1]}, "w": {"uniform": [-1, 1]},
                     "S": [[0, 0], [0, 0]], "beta_hat": [0]},
        }
    return {
        "name": f"large_{agents}",
        "mode": "regulation",
        "controller": "proposed",
        "seed": seed,
        "integrator": {"h": 0.005, "horizon": horizon, "decimation": 100},
        "options": {"gain_tol": 5e-3},
        "exosystem": {"S0": [[0, 1], [-1, 0]], "w0": {"uniform": [-1, 1]}},
        "graph": {"snapshots": snaps, "schedule": [[0, 2], [1, 3], [2, 5]]},
        "templates": templates,
        "agents": [{"template": f"m{(i - 1) % 5 + 1}"} for i in range(1, agents + 1)],
    }


def cmd_gen_large(agents=155, out_path=None, seed=1, out=sys.stdout) -> int:
    doc = config.dumps(config.ScenarioConfig.from_dict(large_network(agents, seed)))
    if out_path:
        Path(out_path).write_text(doc + "\n")
    else:
        print(doc, file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dimp", description="Distributed internal-model regulation and synchronization.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check assumptions and connectivity")
    v.add_argument("config")
    v.add_argument("--allow-violations", action="store_true")
    r = sub.add_parser("run", help="simulate and write trajectory.csv and metrics.txt")
    r.add_argument("config")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--allow-violations", action="store_true")
    z = sub.add_parser("zeros", help="list transmission zeros and semicircle radii")
    z.add_argument("config")
    g = sub.add_parser("gen-large", help="emit the large five-type network scenario")
    g.add_argument("--agents", type=int, default=155)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DIMP_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.config, args.allow_violations)
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed, args.allow_violations)
        if args.command == "zeros":
            return cmd_zeros(args.config)
        return cmd_gen_large(args.agents, args.out, args.seed)
    except (ConfigError, ModelError, engine.EngineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
