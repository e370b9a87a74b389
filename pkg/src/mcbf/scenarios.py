"""Declarative scenario files and the built-in benchmark scenarios.

A scenario is one JSON document (``"schema": 1``).  Dynamics are limited to
linear blocks (single/double integrators or explicit ``A``, ``B``) and the
safety function to quadratic entries, so every Lie derivative and bound
constant has a closed form.  ``docs/scenario_schema.md`` documents the
fields.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bounds import ANALYTIC, BoundSet, DomainBox, estimate_constants
from .controller import MODES, ControllerConfig
from .errors import (InvalidParameter, MCBFError, ModelError, ScenarioParseError,
                     ScenarioValidationError, UnknownScenario)
from .quadratic import (Quadratic, QuadraticMatrixBarrier, analytic_bounds, build_safety_model,
                        linear_system_matrices, obstacle_entry, separation_entry)
from .sets import InputSet, input_set_from_dict
from .sim import SimConfig
from .solver import ADV_VERTEX_ENUM, ADV_WORST_DIRECTION
from .system import AgentModel, MultiAgentSystem, SafetyModel

SCHEMA_VERSION = 1
DATA_DIR = Path(__file__).resolve().parent / "data"
BUILTINS = ("diag_coop", "diag_adv", "coupled_2x2", "dbl_int_ho")
DYNAMICS = ("single_integrator", "double_integrator", "linear")
SAFETY_KINDS = ("diagonal-obstacle", "coupled-2x2", "custom")
DEFAULT_HALF_WIDTH = 3.0


@dataclass(frozen=True)
class AgentSpec:
    kind: str
    A: np.ndarray
    B: np.ndarray
    position: tuple
    input_set: InputSet
    x0: np.ndarray
    nominal: dict

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    agents: tuple
    adversaries: tuple
    safety: dict
    controller: dict
    sim: dict
    domain: DomainBox
    bounds: object
    estimation: dict = field(default_factory=dict)
    source: str = ""

    @property
    def n(self) -> int:
        return sum(a.state_dim for a in self.agents)


@dataclass
class Scenario:
    """A scenario turned into models, ready to simulate."""

    spec: ScenarioSpec
    system: MultiAgentSystem
    safety: SafetyModel
    barrier: QuadraticMatrixBarrier
    A: np.ndarray
    B: np.ndarray
    bounds: BoundSet
    controller: ControllerConfig
    sim: SimConfig
    x0: np.ndarray

    @property
    def name(self) -> str:
        return self.spec.name


def _fail(path: str, msg: str):
    raise ScenarioValidationError(f"{path}: {msg}")


def _require(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        _fail(path, "expected an object")
    if key not in d:
        _fail(f"{path}.{key}" if path else key, "missing required field")
    return d[key]


def _vector(v, path, length=None):
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        _fail(path, "expected a list of numbers")
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        _fail(path, "expected a finite list of numbers")
    if length is not None and arr.size != length:
        _fail(path, f"expected length {length}, got {arr.size}")
    return arr


def _matrix(v, path, shape=None):
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        _fail(path, "expected a matrix (list of rows)")
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        _fail(path, "expected a finite matrix (list of equal-length rows)")
    if shape is not None and arr.shape != shape:
        _fail(path, f"expected shape {shape}, got {arr.shape}")
    return arr


def _number(v, path, positive=False, integer=False, minimum=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, "expected a number")
    if integer and int(v) != v:
        _fail(path, "expected an integer")
    if not np.isfinite(v):
        _fail(path, "expected a finite number")
    if positive and v <= 0:
        _fail(path, "must be strictly positive")
    if minimum is not None and v < minimum:
        _fail(path, f"must be >= {minimum}")
    return int(v) if integer else float(v)


def _agent(d: dict, i: int) -> AgentSpec:
    path = f"agents[{i}]"
    kind = _require(d, "dynamics", path)
    if kind not in DYNAMICS:
        _fail(f"{path}.dynamics", f"unknown dynamics {kind!r}; expected one of {DYNAMICS}")
    if kind == "linear":
        A = _matrix(_require(d, "A", path), f"{path}.A")
        if A.shape[0] != A.shape[1]:
            _fail(f"{path}.A", "must be square")
        B = _matrix(_require(d, "B", path), f"{path}.B")
        if B.shape[0] != A.shape[0]:
            _fail(f"{path}.B", f"needs {A.shape[0]} rows to match A")
        pos = d.get("position", [])
        if not isinstance(pos, list) or any(not isinstance(p, int) or isinstance(p, bool) or
                                            not 0 <= p < A.shape[0] for p in pos):
            _fail(f"{path}.position", "expected a list of state indices")
        position = tuple(pos)
    else:
        dim = _number(_require(d, "dim", path), f"{path}.dim", integer=True, minimum=1)
        if kind == "single_integrator":
            A, B = np.zeros((dim, dim)), np.eye(dim)
        else:
            gamma = _number(d.get("damping", 0.0), f"{path}.damping", minimum=0.0)
            A = np.zeros((2 * dim, 2 * dim))
            A[:dim, dim:] = np.eye(dim)
            A[dim:, dim:] = -gamma * np.eye(dim)
            B = np.vstack([np.zeros((dim, dim)), np.eye(dim)])
        position = tuple(range(dim))
    try:
        uset = input_set_from_dict(_require(d, "input_set", path))
    except ScenarioValidationError:
        raise
    except (MCBFError, KeyError, TypeError, ValueError) as exc:
        _fail(f"{path}.input_set", f"invalid input set ({exc})")
    if uset.dim != B.shape[1]:
        _fail(f"{path}.input_set", f"input set has dimension {uset.dim} but the agent has "
                                   f"{B.shape[1]} inputs")
    x0 = _vector(_require(d, "x0", path), f"{path}.x0", A.shape[0])
    nominal = d.get("nominal", {})
    if not isinstance(nominal, dict):
        _fail(f"{path}.nominal", "expected an object")
    if "goal" in nominal:
        _vector(nominal["goal"], f"{path}.nominal.goal", len(position))
    if "x_ref" in nominal:
        _vector(nominal["x_ref"], f"{path}.nominal.x_ref", A.shape[0])
    if "K" in nominal:
        _matrix(nominal["K"], f"{path}.nominal.K", (B.shape[1], A.shape[0]))
    for key in ("kp", "kd"):
        if key in nominal:
            _number(nominal[key], f"{path}.nominal.{key}", minimum=0.0)
    return AgentSpec(kind, A, B, position, uset, x0, dict(nominal))


def _safety(d: dict, agents) -> dict:
    kind = _require(d, "kind", "safety")
    if kind not in SAFETY_KINDS:
        _fail("safety.kind", f"unknown safety kind {kind!r}; expected one of {SAFETY_KINDS}")
    entries = _require(d, "entries", "safety")
    if not isinstance(entries, list) or not entries:
        _fail("safety.entries", "expected a non-empty list")
    for e, ent in enumerate(entries):
        path = f"safety.entries[{e}]"
        etype = _require(ent, "type", path)
        if etype == "obstacle":
            a = _require(ent, "agent", path)
            if not isinstance(a, int) or not 0 <= a < len(agents):
                _fail(f"{path}.agent", "agent index out of range")
            if not agents[a].position:
                _fail(f"{path}.agent", "agent has no position coordinates")
            _vector(_require(ent, "center", path), f"{path}.center", len(agents[a].position))
            _number(_require(ent, "radius", path), f"{path}.radius", minimum=0.0)
        elif etype == "separation":
            pair = _require(ent, "agents", path)
            if (not isinstance(pair, list) or len(pair) != 2
                    or any(not isinstance(a, int) or not 0 <= a < len(agents) for a in pair)
                    or pair[0] == pair[1]):
                _fail(f"{path}.agents", "expected two distinct agent indices")
            if len(agents[pair[0]].position) != len(agents[pair[1]].position):
                _fail(f"{path}.agents", "agents have positions of different dimension")
            _number(_require(ent, "distance", path), f"{path}.distance", minimum=0.0)
        else:
            _fail(f"{path}.type", f"unknown entry type {etype!r}")
    p = len(entries)
    coupling = d.get("coupling")
    if kind == "diagonal-obstacle":
        if coupling is not None:
            _fail("safety.coupling", "diagonal-obstacle safety has no coupling")
        C = np.zeros((p, p))
    elif kind == "coupled-2x2":
        if p != 2:
            _fail("safety.entries", "coupled-2x2 safety needs exactly two entries")
        c = _number(coupling if coupling is not None else _require(d, "coupling", "safety"),
                    "safety.coupling")
        C = np.array([[0.0, c], [c, 0.0]])
    else:
        C = np.zeros((p, p)) if coupling is None else _matrix(coupling, "safety.coupling", (p, p))
        if not np.allclose(C, C.T, atol=0, rtol=0):
            _fail("safety.coupling", "coupling matrix must be symmetric")
    return {"kind": kind, "entries": entries, "coupling": C}


def _controller(d: dict, n_agents: int) -> dict:
    out = {"mode": "cooperative", "c_alpha": [1.0], "tol_feas": 1e-7, "max_cuts": 200,
           "adversary_strategy": ADV_WORST_DIRECTION}
    if not isinstance(d, dict):
        _fail("controller", "expected an object")
    unknown = set(d) - set(out)
    if unknown:
        _fail("controller", f"unknown fields {sorted(unknown)}")
    out.update(d)
    if out["mode"] not in MODES:
        _fail("controller.mode", f"unknown mode {out['mode']!r}; expected one of {MODES}")
    ca = out["c_alpha"]
    ca = [ca] if not isinstance(ca, list) else ca
    if not ca:
        _fail("controller.c_alpha", "needs at least one gain")
    out["c_alpha"] = [_number(c, "controller.c_alpha", positive=True) for c in ca]
    out["tol_feas"] = _number(out["tol_feas"], "controller.tol_feas", minimum=0.0)
    out["max_cuts"] = _number(out["max_cuts"], "controller.max_cuts", integer=True, minimum=0)
    if out["adversary_strategy"] not in (ADV_WORST_DIRECTION, ADV_VERTEX_ENUM):
        _fail("controller.adversary_strategy", f"unknown strategy {out['adversary_strategy']!r}")
    return out


def _sim(d: dict) -> dict:
    defaults = SimConfig()
    out = {"t0": defaults.t0, "horizon": defaults.horizon, "dt": defaults.dt,
           "substeps": defaults.substeps, "monitor_tol": defaults.monitor_tol, "seed": defaults.seed}
    if not isinstance(d, dict):
        _fail("sim", "expected an object")
    unknown = set(d) - set(out)
    if unknown:
        _fail("sim", f"unknown fields {sorted(unknown)}")
    out.update(d)
    out["t0"] = _number(out["t0"], "sim.t0")
    out["horizon"] = _number(out["horizon"], "sim.horizon", integer=True, minimum=0)
    out["dt"] = _number(out["dt"], "sim.dt", positive=True)
    out["substeps"] = _number(out["substeps"], "sim.substeps", integer=True, minimum=1)
    out["monitor_tol"] = _number(out["monitor_tol"], "sim.monitor_tol", minimum=0.0)
    out["seed"] = _number(out["seed"], "sim.seed", integer=True, minimum=0)
    return out


def _domain(d, n: int) -> DomainBox:
    if d is None:
        return DomainBox.cube(n, DEFAULT_HALF_WIDTH)
    if not isinstance(d, dict):
        _fail("domain", "expected an object")
    if "half_width" in d:
        return DomainBox.cube(n, _number(d["half_width"], "domain.half_width", positive=True))
    lo = _vector(_require(d, "lo", "domain"), "domain.lo", n)
    hi = _vector(_require(d, "hi", "domain"), "domain.hi", n)
    if np.any(lo >= hi):
        _fail("domain", "requires lo < hi componentwise")
    return DomainBox(lo, hi)


def _bounds(d):
    if d in (None, "analytic"):
        return "analytic"
    if d == "estimate":
        return "estimate"
    if isinstance(d, dict):
        try:
            return BoundSet.from_dict(d)
        except (MCBFError, KeyError, TypeError) as exc:
            _fail("bounds", str(exc))
    _fail("bounds", "expected \"analytic\", \"estimate\" or an object of constants")


def validate(data, source: str = "") -> ScenarioSpec:
    """Check a decoded scenario document and return its typed form."""
    if not isinstance(data, dict):
        _fail("<root>", "expected a JSON object")
    schema = _require(data, "schema", "")
    if schema != SCHEMA_VERSION:
        _fail("schema", f"unsupported schema version {schema!r} (expected {SCHEMA_VERSION})")
    name = _require(data, "name", "")
    if not isinstance(name, str) or not name:
        _fail("name", "expected a non-empty string")
    raw_agents = _require(data, "agents", "")
    if not isinstance(raw_agents, list) or not raw_agents:
        _fail("agents", "expected a non-empty list")
    agents = tuple(_agent(a, i) for i, a in enumerate(raw_agents))
    adv = data.get("adversaries", [])
    if not isinstance(adv, list) or any(not isinstance(j, int) or isinstance(j, bool)
                                        or not 0 <= j < len(agents) for j in adv):
        _fail("adversaries", "expected a list of agent indices")
    if len(set(adv)) != len(adv):
        _fail("adversaries", "duplicate agent index")
    if len(adv) == len(agents):
        _fail("adversaries", "at least one agent must be normal")
    safety = _safety(_require(data, "safety", ""), agents)
    n = sum(a.state_dim for a in agents)
    estimation = data.get("estimation", {})
    if not isinstance(estimation, dict):
        _fail("estimation", "expected an object")
    spec = ScenarioSpec(
        name=name, agents=agents, adversaries=tuple(sorted(adv)), safety=safety,
        controller=_controller(data.get("controller", {}), len(agents)),
        sim=_sim(data.get("sim", {})), domain=_domain(data.get("domain"), n),
        bounds=_bounds(data.get("bounds")), estimation=dict(estimation), source=source)
    # building the models catches the remaining structural problems early
    try:
        r = _models(spec, spec.controller["c_alpha"])[3].relative_degree
    except ModelError as exc:
        _fail("safety", str(exc))
    if r > 1 and spec.controller["mode"] not in ("high-order", "passthrough"):
        _fail("controller.mode", "inputs do not appear in the first derivative of H; "
                                 "use mode \"high-order\"")
    return spec


def parse_scenario(text: str, source: str = "<string>") -> ScenarioSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return validate(data, source)


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise ScenarioParseError(f"{path}: not a text file ({exc})") from exc
    return parse_scenario(text, str(path))


def builtin_path(name: str) -> Path:
    if name not in BUILTINS:
        raise UnknownScenario(f"unknown built-in scenario {name!r}; expected one of {BUILTINS}")
    return DATA_DIR / f"{name}.json"


def builtin_spec(name: str) -> ScenarioSpec:
    return load_scenario(builtin_path(name))


def _barrier(spec: ScenarioSpec) -> QuadraticMatrixBarrier:
    n = spec.n
    offsets = np.concatenate([[0], np.cumsum([a.state_dim for a in spec.agents])]).astype(int)

    def pos(i):
        return [int(offsets[i]) + p for p in spec.agents[i].position]

    safety = spec.safety
    entries = {}
    for e, ent in enumerate(safety["entries"]):
        if ent["type"] == "obstacle":
            form = obstacle_entry(n, pos(ent["agent"]), ent["center"], float(ent["radius"]))
        else:
            a, b = ent["agents"]
            form = separation_entry(n, pos(a), pos(b), float(ent["distance"]))
        entries[(e, e)] = form
    C = safety["coupling"]
    p = C.shape[0]
    for a in range(p):
        for b in range(a, p):
            if C[a, b] != 0.0:
                const = Quadratic.constant(n, C[a, b])
                entries[(a, b)] = entries[(a, b)] + const if (a, b) in entries else const
    return QuadraticMatrixBarrier(entries, p, n)


def _models(spec: ScenarioSpec, c_alpha):
    A, B = linear_system_matrices([a.A for a in spec.agents], [a.B for a in spec.agents])
    H = _barrier(spec)
    sm = build_safety_model(H, A, B, c_alpha, name=spec.name)
    return A, B, H, sm


def _system(spec: ScenarioSpec) -> MultiAgentSystem:
    agents = []
    for i, a in enumerate(spec.agents):
        A, B = a.A, a.B
        agents.append(AgentModel(a.state_dim, a.input_dim, (lambda x, A=A: A @ x),
                                 (lambda x, B=B: B), a.input_set, name=f"agent{i}"))
    return MultiAgentSystem(tuple(agents), frozenset(spec.adversaries))


def nominal_policy(spec: ScenarioSpec):
    """Goal-seeking proportional (plus damping) policy per normal agent.

    Integrators use ``kp (goal - position) - kd velocity``; linear agents use
    ``K (x_ref - x)``.  Adversaries get zeros: their nominal input is unused.
    """
    offs = np.concatenate([[0], np.cumsum([a.state_dim for a in spec.agents])]).astype(int)
    ioffs = np.concatenate([[0], np.cumsum([a.input_dim for a in spec.agents])]).astype(int)
    m = int(ioffs[-1])
    adversaries = set(spec.adversaries)

    def policy(x):
        x = np.asarray(x, dtype=float)
        u = np.zeros(m)
        for i, a in enumerate(spec.agents):
            if i in adversaries:
                continue
            xi = x[offs[i]:offs[i + 1]]
            nom = a.nominal
            if "K" in nom:
                ref = np.asarray(nom.get("x_ref", np.zeros(a.state_dim)), dtype=float)
                ui = np.asarray(nom["K"], dtype=float) @ (ref - xi)
            elif "goal" in nom:
                d = len(a.position)
                goal = np.asarray(nom["goal"], dtype=float)
                ui = float(nom.get("kp", 1.0)) * (goal - xi[list(a.position)])
                if a.kind == "double_integrator":
                    ui = ui - float(nom.get("kd", 0.0)) * xi[d:]
                if ui.size != a.input_dim:
                    raise ModelError(f"agent {i}: goal policy needs one input per position coordinate")
            else:
                ui = np.zeros(a.input_dim)
            u[ioffs[i]:ioffs[i + 1]] = ui
        return u

    return policy


def build_scenario(spec: ScenarioSpec, *, dt: Optional[float] = None, c_alpha=None,
                   mode: Optional[str] = None, seed: Optional[int] = None,
                   substeps: Optional[int] = None, horizon: Optional[int] = None,
                   adversary_strategy: Optional[str] = None) -> Scenario:
    """Build models, bounds, controller and simulation settings, applying overrides."""
    ctrl = dict(spec.controller)
    simd = dict(spec.sim)
    if mode is not None:
        if mode not in MODES:
            raise InvalidParameter(f"unknown mode {mode!r}; expected one of {MODES}")
        ctrl["mode"] = mode
    if c_alpha is not None:
        ctrl["c_alpha"] = [float(c) for c in np.atleast_1d(c_alpha)]
    if adversary_strategy is not None:
        ctrl["adversary_strategy"] = adversary_strategy
    for key, val in (("dt", dt), ("seed", seed), ("substeps", substeps), ("horizon", horizon)):
        if val is not None:
            simd[key] = val
    sim = SimConfig(**simd)
    A, B, H, sm = _models(spec, ctrl["c_alpha"])
    system = _system(spec)
    bounds = spec.bounds
    gains_changed = c_alpha is not None
    if bounds == "analytic" or (isinstance(bounds, BoundSet) and gains_changed
                                and sm.relative_degree > 1
                                and set(bounds.provenance.values()) == {ANALYTIC}):
        bounds = analytic_bounds(H, A, B, [a.input_set for a in spec.agents], spec.domain,
                                 ctrl["c_alpha"])
    elif bounds == "estimate":
        est = spec.estimation
        bounds = estimate_constants(system, sm, spec.domain, samples=int(est.get("samples", 2000)),
                                    inflation=float(est.get("inflation", 1.5)), rng=sim.seed)
    if sm.relative_degree > 1 and not bounds.has_high_order:
        raise InvalidParameter("high-order scenario needs Lhat_FH and Lhat_GH in its bounds")
    cfg = ControllerConfig(mode=ctrl["mode"], c_alpha=tuple(ctrl["c_alpha"]), dt=sim.dt,
                           bound_set=bounds, nominal_policy=nominal_policy(spec),
                           tol_feas=ctrl["tol_feas"], max_cuts=ctrl["max_cuts"],
                           adversary_strategy=ctrl["adversary_strategy"])
    x0 = np.concatenate([a.x0 for a in spec.agents])
    return Scenario(spec, system, sm, H, A, B, bounds, cfg, sim, x0)


def build_builtin(name: str):
    """(system, safety model, bound set) of a shipped scenario."""
    sc = build_scenario(builtin_spec(name))
    return sc.system, sc.safety, sc.bounds


def load(name_or_path: str, **overrides) -> Scenario:
    """Built-in name or path to a scenario file."""
    if name_or_path in BUILTINS:
        spec = builtin_spec(name_or_path)
    else:
        p = Path(name_or_path)
        if not p.exists():
            raise UnknownScenario(f"no built-in scenario or file named {name_or_path!r}")
        spec = load_scenario(p)
    return build_scenario(spec, **overrides)


def spec_to_dict(spec: ScenarioSpec, bounds: Optional[BoundSet] = None) -> dict:
    """Serialize back to the file format (used to write fixtures)."""
    agents = []
    for a in spec.agents:
        d = {"dynamics": a.kind}
        if a.kind == "linear":
            d.update(A=a.A.tolist(), B=a.B.tolist(), position=list(a.position))
        else:
            d["dim"] = len(a.position)
            if a.kind == "double_integrator":
                d["damping"] = float(-a.A[-1, -1])
        d.update(input_set=a.input_set.to_dict(), x0=a.x0.tolist(), nominal=a.nominal)
        agents.append(d)
    safety = {"kind": spec.safety["kind"], "entries": spec.safety["entries"]}
    C = spec.safety["coupling"]
    if spec.safety["kind"] == "coupled-2x2":
        safety["coupling"] = float(C[0, 1])
    elif spec.safety["kind"] == "custom" and np.any(C):
        safety["coupling"] = C.tolist()
    b = bounds if bounds is not None else spec.bounds
    out = {"schema": SCHEMA_VERSION, "name": spec.name, "agents": agents,
           "adversaries": list(spec.adversaries), "safety": safety,
           "controller": spec.controller, "sim": spec.sim,
           "domain": {"lo": spec.domain.lo.tolist(), "hi": spec.domain.hi.tolist()},
           "bounds": b.to_dict() if isinstance(b, BoundSet) else b}
    if spec.estimation:
        out["estimation"] = spec.estimation
    return out
