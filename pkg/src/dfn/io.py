"""Network file format: one JSON document per instance.

Top-level keys::

    meta   {"units": "potential" | "pressure", "name": str, "columns": [...]}
    nodes  [{"id", "slack"?, "potential" | "pressure"?, "pi_lo"/"pi_hi" | "p_lo"/"p_hi",
             "x_lo", "x_hi", "cost", "q"}]
    edges  [{"id"?, "from", "to", "delta", "alpha", "b", "b_lo", "b_hi", "compressor"}]

Missing bounds are infinite.  In pressure units the node fields hold pressures
and are squared on load; compressor boosts are always in potential units.
``meta.columns`` lists bound sweeps for reports, each
``{"label", "pi_lo"?, "pi_hi"?, "slack_potential"?}`` (or ``p_*`` in pressure
units), applied uniformly to every node.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dissipation import DissipationLaw
from .errors import InvalidLaw, MultipleSlack, NegativePressureBound, NoSlack, ParseError
from .network import Edge, Network, Scenario, validate

UNITS = ("potential", "pressure")
NODE_KEYS = {"id", "slack", "potential", "pressure", "pi_lo", "pi_hi", "p_lo", "p_hi",
             "x_lo", "x_hi", "cost", "q", "name"}
EDGE_KEYS = {"id", "from", "to", "delta", "alpha", "b", "b_lo", "b_hi", "compressor"}
META_KEYS = {"units", "name", "description", "columns"}
COLUMN_KEYS = {"label", "pi_lo", "pi_hi", "p_lo", "p_hi", "slack_potential", "slack_pressure"}


@dataclass(frozen=True)
class Column:
    """A uniform potential-bound setting used by the gap reports."""

    label: str
    pi_lo: float | None = None
    pi_hi: float | None = None
    slack_potential: float | None = None

    def apply(self, network: Network, scenario: Scenario):
        slack = self.slack_potential
        if slack is None and self.pi_hi is not None:
            slack = self.pi_hi
        net = network if slack is None else network.with_slack_potential(slack)
        sc = scenario
        if self.pi_lo is not None:
            sc = replace(sc, pi_lo=_frozen(np.full(network.n_nodes, self.pi_lo)))
        if self.pi_hi is not None:
            sc = replace(sc, pi_hi=_frozen(np.full(network.n_nodes, self.pi_hi)))
        validate(net, sc)
        return net, sc


@dataclass
class NetworkDocument:
    network: Network
    scenario: Scenario
    injections: np.ndarray | None
    meta: dict = field(default_factory=dict)
    columns: list = field(default_factory=list)

    def __iter__(self):
        # allows ``network, scenario, injections = load_network(path)``
        return iter((self.network, self.scenario, self.injections))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class _Source:
    """Raw text plus a best-effort locator for semantic errors."""

    def __init__(self, text: str):
        self.text = text

    def locate(self, key: str, value=None, nth: int = 0):
        if value is None:
            pat = rf'"{re.escape(key)}"\s*:'
        else:
            v = json.dumps(value) if not isinstance(value, str) else json.dumps(value)
            pat = rf'"{re.escape(key)}"\s*:\s*{re.escape(v)}'
        matches = list(re.finditer(pat, self.text))
        if not matches:
            return None, None
        m = matches[min(nth, len(matches) - 1)]
        line = self.text.count("\n", 0, m.start()) + 1
        col = m.start() - (self.text.rfind("\n", 0, m.start()) + 1) + 1
        return line, col

    def error(self, message, key=None, value=None, nth=0):
        line, col = self.locate(key, value, nth) if key else (None, None)
        return ParseError(message, line, col)


def _number(src: _Source, obj: dict, key: str, default=None, where=""):
    if key not in obj or obj[key] is None:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise src.error(f"{where}field {key!r} must be a number, got {v!r}", key, v)
    return float(v)


def _check_keys(src: _Source, obj, allowed, what: str, ident=None):
    if not isinstance(obj, dict):
        raise src.error(f"{what} entries must be objects, got {type(obj).__name__}")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise src.error(f"unknown key {extra[0]!r} in {what} {ident!r}", extra[0])


def parse_network(text: str, units: str | None = None) -> NetworkDocument:
    """Parse and validate a network document; ``units`` overrides ``meta.units``."""
    src = _Source(text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", 1, 1)
    extra = sorted(set(doc) - {"meta", "nodes", "edges"})
    if extra:
        raise src.error(f"unknown top-level key {extra[0]!r}", extra[0])
    meta = doc.get("meta") or {}
    _check_keys(src, meta, META_KEYS, "meta", "meta")
    units = units or meta.get("units", "potential")
    if units not in UNITS:
        raise src.error(f"units must be one of {UNITS}, got {units!r}", "units")
    pressure = units == "pressure"

    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise src.error("'nodes' must be a non-empty list", "nodes")
    edges = doc.get("edges")
    if not isinstance(edges, list):
        raise src.error("'edges' must be a list", "edges")

    ids, slack, slack_value = [], [], None
    rows = {}
    for k, nd in enumerate(nodes):
        _check_keys(src, nd, NODE_KEYS, "node", nd.get("id", k) if isinstance(nd, dict) else k)
        if "id" not in nd:
            raise src.error(f"node {k} has no 'id'", "nodes")
        nid = nd["id"]
        if not isinstance(nid, (str, int)) or isinstance(nid, bool):
            raise src.error(f"node id must be a string or integer, got {nid!r}", "id", nid)
        if nid in rows:
            raise src.error(f"duplicate node id {nid!r}", "id", nid, nth=1)
        where = f"node {nid!r}: "
        fixed_key = "pressure" if pressure else "potential"
        other_key = "potential" if pressure else "pressure"
        lo_key, hi_key = ("p_lo", "p_hi") if pressure else ("pi_lo", "pi_hi")
        for wrong in (other_key, "pi_lo" if pressure else "p_lo", "pi_hi" if pressure else "p_hi"):
            if wrong in nd:
                raise src.error(f"{where}field {wrong!r} does not match units {units!r}", wrong)
        row = {
            "lo": _number(src, nd, lo_key, -np.inf if not pressure else 0.0, where),
            "hi": _number(src, nd, hi_key, np.inf, where),
            "x_lo": _number(src, nd, "x_lo", -np.inf, where),
            "x_hi": _number(src, nd, "x_hi", np.inf, where),
            "cost": _number(src, nd, "cost", 0.0, where),
            "q": _number(src, nd, "q", None, where),
        }
        if nd.get("slack", False):
            slack.append(nid)
            slack_value = _number(src, nd, fixed_key, None, where)
            if slack_value is None:
                raise src.error(f"slack node {nid!r} needs a {fixed_key!r} value", "slack", True)
        elif fixed_key in nd:
            raise src.error(f"{where}only the slack node may fix its {fixed_key}", fixed_key)
        if pressure:
            for key in ("lo", "hi"):
                if row[key] < 0:
                    raise NegativePressureBound(f"negative pressure bound at node {nid!r}")
                row[key] = row[key] ** 2
        ids.append(nid)
        rows[nid] = row
    if not slack:
        raise NoSlack("no node is marked as slack")
    if len(slack) > 1:
        line, col = src.locate("slack", True, nth=1)
        raise MultipleSlack(f"nodes {slack} are all marked as slack" +
                            (f" (line {line}, column {col})" if line else ""))
    if pressure:
        if slack_value < 0:
            raise NegativePressureBound(f"negative slack pressure at {slack[0]!r}")
        slack_value = slack_value ** 2

    elist, b_lo, b_hi, var = [], [], [], []
    for k, ed in enumerate(edges):
        _check_keys(src, ed, EDGE_KEYS, "edge", ed.get("id", k) if isinstance(ed, dict) else k)
        eid = ed.get("id", k)
        where = f"edge {eid!r}: "
        for end in ("from", "to"):
            if end not in ed:
                raise src.error(f"{where}missing {end!r}", "edges")
            if ed[end] not in rows:
                raise src.error(f"{where}unknown node {ed[end]!r}", end, ed[end])
        delta = _number(src, ed, "delta", None, where)
        if delta is None:
            raise src.error(f"{where}missing 'delta'", "from", ed["from"])
        alpha = _number(src, ed, "alpha", 2.0, where)
        b = _number(src, ed, "b", 0.0, where)
        try:
            law = DissipationLaw(delta, alpha)
        except InvalidLaw as exc:
            line, col = src.locate("delta", ed["delta"])
            raise InvalidLaw(f"{where}{exc}" + (f" (line {line}, column {col})" if line else "")) from None
        elist.append(Edge(ed["from"], ed["to"], law, b, eid))
        b_lo.append(_number(src, ed, "b_lo", b, where))
        b_hi.append(_number(src, ed, "b_hi", b, where))
        compressor = ed.get("compressor", False)
        if not isinstance(compressor, bool):
            raise src.error(f"{where}'compressor' must be true or false", "compressor", compressor)
        var.append(compressor)

    network = Network(ids, elist, slack=slack[0], slack_potential=slack_value)
    order = network.node_names

    def col(key):
        return [rows[n][key] for n in order]

    scenario = Scenario.build(network, pi_lo=col("lo"), pi_hi=col("hi"), x_lo=col("x_lo"),
                              x_hi=col("x_hi"), cost=col("cost"), b_lo=b_lo, b_hi=b_hi,
                              b_is_variable=var)
    validate(network, scenario)
    q = None
    if any(rows[n]["q"] is not None for n in order[1:]):
        q = np.array([rows[n]["q"] or 0.0 for n in order[1:]])
    columns = [_column(src, c, pressure) for c in meta.get("columns", [])]
    meta = {**meta, "units": units}
    return NetworkDocument(network, scenario, q, meta, columns)


def _column(src: _Source, c, pressure: bool) -> Column:
    _check_keys(src, c, COLUMN_KEYS, "column", c.get("label") if isinstance(c, dict) else None)
    if "label" not in c:
        raise src.error("every column needs a 'label'", "columns")
    keys = ("p_lo", "p_hi", "slack_pressure") if pressure else ("pi_lo", "pi_hi", "slack_potential")
    vals = [_number(src, c, k, None, f"column {c['label']!r}: ") for k in keys]
    if pressure:
        if any(v is not None and v < 0 for v in vals):
            raise NegativePressureBound(f"negative pressure in column {c['label']!r}")
        vals = [None if v is None else v * v for v in vals]
    return Column(str(c["label"]), *vals)


def load_network(path, units: str | None = None) -> NetworkDocument:
    """Read a network file.  Unpacks as ``(network, scenario, injections)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_network(text, units)


def _num(v):
    if v is None or not np.isfinite(v):
        return None
    return float(v)


def to_document(network: Network, scenario: Scenario, injections=None, meta: dict | None = None,
                columns=()) -> dict:
    """Serialise in potential units (the internal representation)."""
    q = None if injections is None else network.free_injections(injections)
    nodes = []
    for i, nid in enumerate(network.node_names):
        nd = {"id": nid}
        if i == 0:
            nd["slack"] = True
            nd["potential"] = network.slack_potential
        for key, arr in (("pi_lo", scenario.pi_lo), ("pi_hi", scenario.pi_hi),
                         ("x_lo", scenario.x_lo), ("x_hi", scenario.x_hi)):
            if i == 0 and key.startswith("x_"):
                continue
            v = _num(arr[i])
            if v is not None:
                nd[key] = v
        if scenario.cost[i] != 0:
            nd["cost"] = float(scenario.cost[i])
        if q is not None and i > 0 and q[i - 1] != 0:
            nd["q"] = float(q[i - 1])
        nodes.append(nd)
    edges = []
    for e, eid in enumerate(network.edge_names):
        ed = {"id": eid, "from": network.node_names[network.tail[e]], "to": network.node_names[network.head[e]],
              "delta": float(network.delta[e]), "alpha": float(network.alpha[e])}
        if network.b_fixed[e] != 0:
            ed["b"] = float(network.b_fixed[e])
        if scenario.b_lo[e] != network.b_fixed[e] or scenario.b_hi[e] != network.b_fixed[e]:
            ed["b_lo"], ed["b_hi"] = float(scenario.b_lo[e]), float(scenario.b_hi[e])
        if scenario.b_is_variable[e]:
            ed["compressor"] = True
        edges.append(ed)
    meta = {k: v for k, v in (meta or {}).items() if k in META_KEYS and k != "columns"}
    meta["units"] = "potential"
    cols = []
    for c in columns:
        d = {"label": c.label}
        for k in ("pi_lo", "pi_hi", "slack_potential"):
            if getattr(c, k) is not None:
                d[k] = getattr(c, k)
        cols.append(d)
    if cols:
        meta["columns"] = cols
    return {"meta": meta, "nodes": nodes, "edges": edges}


def save_network(path, network: Network, scenario: Scenario, injections=None, meta=None, columns=()):
    doc = to_document(network, scenario, injections, meta, columns)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def same_network(a: Network, b: Network) -> bool:
    """Semantic equality of two validated networks."""
    return (a.node_names == b.node_names and a.edge_names == b.edge_names
            and a.slack_potential == b.slack_potential
            and all(np.array_equal(getattr(a, k), getattr(b, k))
                    for k in ("tail", "head", "delta", "alpha", "b_fixed")))


def data_path(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(__file__).with_name("data") / name


__all__ = ["Column", "NetworkDocument", "data_path", "load_network", "parse_network",
           "same_network", "save_network", "to_document"]
