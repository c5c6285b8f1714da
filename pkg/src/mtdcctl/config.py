"""YAML configuration documents.

A document has the sections ``globals``, ``nodes``, ``dc_lines``,
``eta_edges``, ``phi_edges`` and an optional ``scenario``. Node numbers in
the document are 1-based. Communication edges are either a list of
``{i, j, weight}`` mappings or ``{proportional_to_dc: k}``, meaning weight
``k / R_ij`` on every DC line.
"""

from importlib import resources
from pathlib import Path

import yaml

from .exceptions import MtdcError, ValidationError
from .graph import Topology
from .model import AcArea, DcLine, DcTerminal, GainSet, SystemDescription
from .sim import Event, Scenario

BUILTIN_CONFIGS = ("testgrid6",)

_SECTIONS = {"globals", "nodes", "dc_lines", "eta_edges", "phi_edges", "scenario"}
_REQUIRED = {"nodes", "dc_lines", "eta_edges", "phi_edges"}
_GLOBALS = {"v_nom": 1.0, "omega_ref": 1.0, "gamma": 0.0}
_NODE_KEYS = {"m", "c", "v_ref", "k_omega", "k_v", "k_droop", "k_droop_i", "p_load"}
_NODE_REQUIRED = {"m", "c", "k_omega", "k_v", "k_droop", "k_droop_i"}
_LINE_KEYS = {"i", "j", "r", "l", "c"}
_EDGE_KEYS = {"i", "j", "weight"}
_SCENARIO_KEYS = {"events", "t_end", "dt_output", "model", "initial_state"}
_EVENT_KEYS = {"time", "node", "delta_p_m"}


class ConfigError(MtdcError):
    """Syntax or semantic error in a configuration document."""

    def __init__(self, message, field=None, line=None):
        self.field, self.line = field, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


def _keys(mapping, allowed, required, where):
    if not isinstance(mapping, dict):
        raise ConfigError(f"expected a mapping, got {type(mapping).__name__}", where)
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", where)
    missing = required - set(mapping)
    if missing:
        raise ConfigError(f"missing key(s) {sorted(missing)}", where)


def _num(value, where):
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a dot (``1e-3``) as strings
        try:
            return float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", where)
    return float(value)


def _node_index(value, n, where):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer node number, got {value!r}", where)
    if not 1 <= value <= n:
        raise ConfigError(f"node {value} out of range 1..{n}", where)
    return value - 1


def _build(where, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except ValidationError as exc:
        field = where if exc.field is None else f"{where}.{exc.field}"
        raise ConfigError(getattr(exc, "message", str(exc)), field) from exc


def _edges(entry, lines, n, where):
    if isinstance(entry, dict):
        _keys(entry, {"proportional_to_dc"}, {"proportional_to_dc"}, where)
        k = _num(entry["proportional_to_dc"], f"{where}.proportional_to_dc")
        if not k > 0:
            raise ConfigError("scale factor must be positive", f"{where}.proportional_to_dc")
        return _build(where, Topology, n, tuple((ln.i, ln.j, k / ln.r) for ln in lines))
    if not isinstance(entry, list):
        raise ConfigError("expected a list of edges or {proportional_to_dc: k}", where)
    edges = []
    for k, e in enumerate(entry):
        w = f"{where}[{k}]"
        _keys(e, _EDGE_KEYS, _EDGE_KEYS, w)
        edges.append((_node_index(e["i"], n, f"{w}.i"), _node_index(e["j"], n, f"{w}.j"), _num(e["weight"], f"{w}.weight")))
    return _build(where, Topology, n, tuple(edges))


def parse_config(text):
    """Parse a document into ``(SystemDescription, Scenario or None)``."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else None
        raise ConfigError(f"syntax error: {exc.problem}", line=line) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("document must be a mapping of sections")
    _keys(doc, _SECTIONS, _REQUIRED, "document")

    glob = dict(_GLOBALS)
    g_in = doc.get("globals") or {}
    _keys(g_in, set(_GLOBALS), set(), "globals")
    for key, value in g_in.items():
        glob[key] = _num(value, f"globals.{key}")

    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise ConfigError("expected a non-empty list", "nodes")
    n = len(nodes)
    areas, terminals, gains = [], [], []
    for k, node in enumerate(nodes):
        w = f"nodes[{k}]"
        _keys(node, _NODE_KEYS, _NODE_REQUIRED, w)
        vals = {key: _num(val, f"{w}.{key}") for key, val in node.items()}
        areas.append(_build(w, AcArea, vals["m"], vals.get("p_load", 0.0)))
        terminals.append(_build(w, DcTerminal, vals["c"], vals.get("v_ref", 1.0)))
        gains.append(_build(
            w, GainSet, vals["k_omega"], vals["k_v"], vals["k_droop"], vals["k_droop_i"], glob["gamma"]
        ))

    raw_lines = doc["dc_lines"]
    if not isinstance(raw_lines, list):
        raise ConfigError("expected a list", "dc_lines")
    lines = []
    for k, ln in enumerate(raw_lines):
        w = f"dc_lines[{k}]"
        _keys(ln, _LINE_KEYS, {"i", "j", "r"}, w)
        i, j = _node_index(ln["i"], n, f"{w}.i"), _node_index(ln["j"], n, f"{w}.j")
        label = f"{w} ({i + 1}-{j + 1})"
        opt = {key: _num(ln[key], f"{label}.{key}") for key in ("l", "c") if key in ln}
        lines.append(_build(label, DcLine, i, j, _num(ln["r"], f"{label}.r"), **opt))

    _build("dc_lines", Topology, n, tuple((ln.i, ln.j, 1.0 / ln.r) for ln in lines))
    eta = _edges(doc["eta_edges"], lines, n, "eta_edges")
    phi = _edges(doc["phi_edges"], lines, n, "phi_edges")
    sd = _build(
        "document", SystemDescription,
        areas, terminals, gains, lines, eta, phi,
        v_nom=glob["v_nom"], omega_ref=glob["omega_ref"],
    )

    scenario = None
    if doc.get("scenario") is not None:
        scenario = _scenario(doc["scenario"], n)
    return sd, scenario


def _scenario(entry, n):
    _keys(entry, _SCENARIO_KEYS, set(), "scenario")
    events = []
    for k, ev in enumerate(entry.get("events") or []):
        w = f"scenario.events[{k}]"
        _keys(ev, _EVENT_KEYS, _EVENT_KEYS, w)
        events.append(Event(_num(ev["time"], f"{w}.time"), _node_index(ev["node"], n, f"{w}.node"),
                            _num(ev["delta_p_m"], f"{w}.delta_p_m")))
    kwargs = {}
    for key in ("t_end", "dt_output"):
        if key in entry:
            kwargs[key] = _num(entry[key], f"scenario.{key}")
    if "model" in entry:
        kwargs["model"] = str(entry["model"])
    if entry.get("initial_state") is not None:
        init = entry["initial_state"]
        if not isinstance(init, list):
            raise ConfigError("expected a list of numbers", "scenario.initial_state")
        kwargs["initial_state"] = tuple(_num(x, f"scenario.initial_state[{k}]") for k, x in enumerate(init))
    return _build("scenario", Scenario, events=tuple(events), **kwargs)


def dump_config(sd, scenario=None):
    """Serialise to a document that :func:`parse_config` maps back to ``sd``.

    Communication edges are always written explicitly.
    """
    gammas = {g.gamma for g in sd.gains}
    doc = {
        "globals": {"v_nom": sd.v_nom, "omega_ref": sd.omega_ref, "gamma": gammas.pop()},
        "nodes": [
            {
                "m": a.m, "p_load": a.p_load, "c": t.c, "v_ref": t.v_ref,
                "k_omega": g.k_omega, "k_v": g.k_v, "k_droop": g.k_droop, "k_droop_i": g.k_droop_i,
            }
            for a, t, g in zip(sd.areas, sd.terminals, sd.gains)
        ],
        "dc_lines": [
            {"i": ln.i + 1, "j": ln.j + 1, "r": ln.r,
             **({"l": ln.l} if ln.l is not None else {}),
             **({"c": ln.c} if ln.c is not None else {})}
            for ln in sd.dc_lines
        ],
        "eta_edges": [{"i": i + 1, "j": j + 1, "weight": w} for i, j, w in sd.eta_topology.edges],
        "phi_edges": [{"i": i + 1, "j": j + 1, "weight": w} for i, j, w in sd.phi_topology.edges],
    }
    if scenario is not None:
        doc["scenario"] = {
            "t_end": scenario.t_end,
            "dt_output": scenario.dt_output,
            "model": scenario.model,
            "events": [
                {"time": ev.time, "node": ev.node + 1, "delta_p_m": ev.delta_p_m} for ev in scenario.events
            ],
        }
        if scenario.initial_state is not None:
            doc["scenario"]["initial_state"] = list(scenario.initial_state)
    return yaml.safe_dump(doc, sort_keys=False)


def builtin_config_text(name):
    return resources.files("mtdcctl").joinpath("data").joinpath(f"{name}.yaml").read_text()


def load_config(path):
    """Read a document from ``path``; bare builtin names such as
    ``testgrid6`` resolve to the copies shipped with the package."""
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN_CONFIGS:
        return parse_config(builtin_config_text(str(path)))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text)
