"""Scenario files: parsing, validation, serialization and model building.

A scenario is a JSON document.  Matrices are lists of rows, complex numbers
are either plain numbers or ``[re, im]`` pairs, and a random initial value is
written ``{"uniform": [lo, hi]}``.  Agents may refer to a named template so
that large networks stay readable; per-agent keys override template keys.

Random initial values are drawn from a single generator seeded by the
scenario seed, in a fixed order: ``w0`` first, then for each agent in list
order ``x``, ``xi``, ``w``, ``S``, ``beta_hat``, ``Q``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import SwitchingDigraph, edges_to_adjacency
from .internal_model import minimal_polynomial_roots
from .plant import AgentModel, ExosystemModel

MODES = ("regulation", "synchronization")
CONTROLLERS = ("proposed", "baseline")
MATRIX_KEYS = ("A", "B", "C", "D", "P", "Q", "dA", "dB", "dC", "dD", "dP", "dQ")
INIT_KEYS = ("x", "xi", "w", "S", "beta_hat", "Q")

DEFAULTS = {
    "controller": "proposed",
    "seed": None,
    "integrator": {"h": 1e-3, "horizon": 200.0, "decimation": 100},
    "options": {"gain_tol": 1e-4, "rho_coefficient": 0.5, "generator_mode": "full", "rank_tol": 1e-8},
    "thresholds": {"tail_fraction": 0.1, "regulation": 1e-2, "generator": 1e-3, "sync_gap": 1e-2,
                   "lambda_tol": 1e-3},
    "export": {"series": None},
}


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field or location."""


def _err(path, msg):
    return ConfigError(f"{path}: {msg}" if path else msg)


def _number(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(path, f"expected a number, got {v!r}")
    return float(v)


def _complex(v, path) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(_number(v[0], path), _number(v[1], path))
    return complex(_number(v, path))


def _matrix(v, path) -> np.ndarray:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return np.array([[float(v)]])
    if not isinstance(v, list) or not v:
        raise _err(path, "expected a nonempty list of rows")
    rows = [r if isinstance(r, list) else [r] for r in v]
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise _err(f"{path}[{i}]", f"row has {len(r)} entries, expected {width}")
    return np.array([[_number(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(rows)])


def _is_uniform(v) -> bool:
    return isinstance(v, dict) and set(v) == {"uniform"}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and not _is_uniform(v):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ScenarioConfig:
    """Normalized scenario document.

    ``data`` holds plain JSON-compatible values with every default filled
    in, so ``from_dict(to_dict())`` reproduces the same config.
    """

    data: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def mode(self) -> str:
        return self.data["mode"]

    @property
    def seed(self):
        return self.data["seed"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        return cls(normalize(raw))

    def with_seed(self, seed) -> "ScenarioConfig":
        d = self.to_dict()
        d["seed"] = seed
        return ScenarioConfig(d)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and json.dumps(self.data, sort_keys=True) == json.dumps(
            other.data, sort_keys=True)


def normalize(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    d = _merge(DEFAULTS, raw)
    for key in ("name", "mode", "graph", "agents"):
        if key not in d:
            raise _err(key, "missing required field")
    if d["mode"] not in MODES:
        raise _err("mode", f"must be one of {MODES}")
    if d["controller"] not in CONTROLLERS:
        raise _err("controller", f"must be one of {CONTROLLERS}")
    if d["mode"] == "synchronization" and d["controller"] != "proposed":
        raise _err("controller", "synchronization supports only the proposed controller")
    templates = d.setdefault("templates", {})
    if not isinstance(d["agents"], list) or not d["agents"]:
        raise _err("agents", "expected a nonempty list")
    agents = []
    for i, a in enumerate(d["agents"]):
        if not isinstance(a, dict):
            raise _err(f"agents[{i}]", "expected an object")
        tname = a.get("template")
        if tname is not None and tname not in templates:
            raise _err(f"agents[{i}].template", f"unknown template {tname!r}")
        agents.append(a)
    d["agents"] = agents
    if d["mode"] == "regulation" and "exosystem" not in d:
        raise _err("exosystem", "required in regulation mode")
    if d["mode"] == "synchronization" and "reference" not in d:
        raise _err("reference", "required in synchronization mode")
    g = d["graph"]
    n = len(agents)
    g.setdefault("nodes", list(range(0, n + 1)) if d["mode"] == "regulation" else list(range(1, n + 1)))
    g.setdefault("epsilon", 1.0)
    g.setdefault("periodic", True)
    g.setdefault("window", None)
    for key in ("snapshots", "schedule"):
        if key not in g:
            raise _err(f"graph.{key}", "missing required field")
    if _uses_random(d) and d["seed"] is None:
        raise _err("seed", "a seed is required when any initial value is random")
    for sec in ("integrator", "options", "thresholds"):
        unknown = set(d[sec]) - set(DEFAULTS[sec])
        if unknown:
            raise _err(f"{sec}.{sorted(unknown)[0]}", "unknown field")
    if not 0 < float(d["options"]["rank_tol"]) < 1:
        raise _err("options.rank_tol", "must lie in (0, 1)")
    if d["options"]["generator_mode"] not in ("full", "companion"):
        raise _err("options.generator_mode", "must be 'full' or 'companion'")
    return d


def _uses_random(d) -> bool:
    def walk(v):
        if _is_uniform(v):
            return True
        if isinstance(v, dict):
            return any(walk(x) for x in v.values())
        if isinstance(v, list):
            return any(walk(x) for x in v)
        return False
    return walk(d.get("exosystem", {})) or walk(d["agents"]) or walk(d["templates"])


def loads(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return ScenarioConfig.from_dict(raw)


def load(path) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        bundled = bundled_path(str(path))
        if bundled is None:
            raise ConfigError(f"{path}: no such file or bundled scenario")
        p = bundled
    return loads(p.read_text(), str(p))


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=1)


def bundled_names() -> list[str]:
    root = resources.files("dimp") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str):
    p = resources.files("dimp") / "scenarios" / f"{name}.json"
    return Path(str(p)) if p.is_file() else None


# ---------------------------------------------------------------- building


@dataclass
class AgentSpec:
    model: AgentModel
    observer_poles: tuple
    state_poles: tuple
    rho: float | None
    init: dict


@dataclass
class Scenario:
    config: ScenarioConfig
    graph: SwitchingDigraph
    agents: list
    exo: ExosystemModel | None
    S_ref: np.ndarray
    roots: tuple
    seed: int | None
    window: float | None

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def n_agents(self) -> int:
        return len(self.agents)


def _draw(v, shape, rng, path):
    if v is None:
        return np.zeros(shape)
    if _is_uniform(v):
        lo, hi = (_number(x, f"{path}.uniform") for x in v["uniform"])
        return rng.uniform(lo, hi, size=shape)
    arr = np.asarray(_matrix(v, path) if isinstance(v, list) and v and isinstance(v[0], list) else v, dtype=float)
    if arr.size != int(np.prod(shape)):
        raise _err(path, f"expected {int(np.prod(shape))} entries, got {arr.size}")
    return arr.reshape(shape)


def _poles(v, path) -> tuple:
    if not isinstance(v, list):
        raise _err(path, "expected a list of poles")
    return tuple(_complex(p, f"{path}[{i}]") for i, p in enumerate(v))


def build(cfg: ScenarioConfig, seed=None) -> Scenario:
    """Concrete models and initial values; ``seed`` overrides the scenario seed."""
    d = cfg.data
    seed = d["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    g = d["graph"]
    labels = [int(x) for x in g["nodes"]]
    try:
        snaps = [edges_to_adjacency(s, labels) for s in g["snapshots"]]
        graph = SwitchingDigraph(snaps, [tuple(s) for s in g["schedule"]], labels, g["epsilon"], g["periodic"],
                                 exosystem=d["mode"] == "regulation")
    except ValueError as exc:
        raise _err("graph", str(exc)) from None
    n = len(d["agents"])
    expected = n + 1 if d["mode"] == "regulation" else n
    if len(labels) != expected:
        raise _err("graph.nodes", f"expected {expected} nodes for {n} agents")
    if d["mode"] == "regulation":
        ex = d["exosystem"]
        S0 = _matrix(ex.get("S0"), "exosystem.S0")
        exo = ExosystemModel(S0, _draw(ex.get("w0"), (S0.shape[0],), rng, "exosystem.w0"))
        S_ref, roots = exo.S0, (0,)
    else:
        ref = d["reference"]
        S_ref = _matrix(ref.get("S_star"), "reference.S_star")
        roots = tuple(int(x) for x in ref.get("roots", []))
        if not roots:
            raise _err("reference.roots", "the root set must be nonempty")
        exo = None
    r = S_ref.shape[0]
    agents = []
    for i, a in enumerate(d["agents"]):
        path = f"agents[{i}]"
        spec = _merge(d["templates"].get(a.get("template"), {}), {k: v for k, v in a.items() if k != "template"})
        mats = {}
        for key in MATRIX_KEYS:
            if key in spec:
                mats[key] = _matrix(spec[key], f"{path}.{key}")
        for key in ("A", "B", "C", "D"):
            if key not in mats:
                raise _err(f"{path}.{key}", "missing required matrix")
        try:
            model = AgentModel(**mats)
        except ValueError as exc:
            raise _err(path, str(exc)) from None
        if model.q > model.m:
            raise _err(path, f"{model.q} outputs exceed {model.m} inputs; such an agent cannot be regulated")
        if d["mode"] == "regulation" and model.r != r:
            raise _err(f"{path}.P", f"expected {r} exosystem columns, got {model.r}")
        for key in ("observer_poles", "state_poles"):
            if key not in spec and d["controller"] == "proposed":
                raise _err(f"{path}.{key}", "missing required field")
        obs = _poles(spec.get("observer_poles", []), f"{path}.observer_poles")
        st = _poles(spec.get("state_poles", []), f"{path}.state_poles")
        if d["controller"] == "baseline" and "feedback_poles" in spec:
            st = _poles(spec["feedback_poles"], f"{path}.feedback_poles")
        init = spec.get("init", {})
        unknown = set(init) - set(INIT_KEYS)
        if unknown:
            raise _err(f"{path}.init.{sorted(unknown)[0]}", "unknown field")
        agents.append(AgentSpec(model, obs, st, spec.get("rho"), dict(init)))
    # draw in the documented order once all shapes are known
    k = minimal_polynomial_roots(S_ref).size
    for i, ag in enumerate(agents):
        path = f"agents[{i}].init"
        m = ag.model
        nxi = m.n + k * m.q
        ini = ag.init
        ag.init = {
            "x": _draw(ini.get("x"), (m.n,), rng, f"{path}.x"),
            "xi": _draw(ini.get("xi"), (nxi,), rng, f"{path}.xi"),
            "w": _draw(ini.get("w"), (r,), rng, f"{path}.w"),
            "S": _draw(ini.get("S"), (r, r), rng, f"{path}.S") if "S" in ini else None,
            "beta_hat": _draw(ini.get("beta_hat"), (k // 2,), rng, f"{path}.beta_hat"),
            "Q": _draw(ini.get("Q"), (m.q, r), rng, f"{path}.Q") if "Q" in ini else None,
        }
    return Scenario(cfg, graph, agents, exo, S_ref, roots, seed, g["window"])
