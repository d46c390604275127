"""Transmission and radial distribution data model, scenario files, validation.

Scenario files are JSON documents tagged ``"schema": "gridseam/1"``.  Powers
are MW / MVAr, voltages are stored squared (``U = |V|^2``) and impedances are
per unit on ``metadata.base_mva``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

import jsonschema

SCHEMA_TAG = "gridseam/1"

DDGAG, DRAG, REAG = "DDGAG", "DRAG", "REAG"
KINDS = (DDGAG, DRAG, REAG)


class ScenarioError(ValueError):
    """A scenario document could not be turned into a valid :class:`Scenario`.

    ``violations`` lists every problem found, not only the first.
    """

    def __init__(self, message: str, violations: Iterable["Violation"] = ()) -> None:
        self.violations = list(violations)
        if self.violations:
            message = message + "\n" + "\n".join(f"  {v}" for v in self.violations)
        super().__init__(message)


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.path}: {self.message}"


@dataclass(frozen=True)
class OfferBlock:
    width: float
    price: float


@dataclass(frozen=True)
class Aggregator:
    id: str
    kind: str
    node: str
    blocks: tuple[OfferBlock, ...] = ()
    tan_phi: float = 0.0
    fixed_profile: float = 0.0

    @property
    def capacity(self) -> float:
        return sum(b.width for b in self.blocks)


@dataclass(frozen=True)
class DistNode:
    id: str
    firm_load_p: float = 0.0
    firm_load_q: float = 0.0
    u_min: float = 0.9025
    u_max: float = 1.1025


@dataclass(frozen=True)
class Branch:
    id: str
    parent_node: str
    child_node: str
    r: float
    x: float
    pl_max: float
    ql_max: float


@dataclass(frozen=True)
class DistributionSystem:
    id: str
    coupling_bus: str
    substation_node: str
    nodes: tuple[DistNode, ...]
    branches: tuple[Branch, ...]
    aggregators: tuple[Aggregator, ...] = ()
    substation_u: float = 1.0
    base_mva: float = 1.0
    # reserved: the substation reactive exchange is unbounded unless given
    q_dso_min: float | None = None
    q_dso_max: float | None = None

    def node_index(self) -> dict[str, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}


@dataclass(frozen=True)
class Bus:
    id: str
    firm_load: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    reactance: float
    flow_limit: float
    id: str = ""


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    blocks: tuple[OfferBlock, ...]


@dataclass(frozen=True)
class TransmissionSystem:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    reference_bus: str

    def bus_index(self) -> dict[str, int]:
        return {b.id: k for k, b in enumerate(self.buses)}


@dataclass(frozen=True)
class Scenario:
    transmission: TransmissionSystem
    distributions: tuple[DistributionSystem, ...] = ()
    name: str = "scenario"
    base_mva: float = 1.0
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def distribution(self, dso_id: str) -> DistributionSystem:
        for d in self.distributions:
            if d.id == dso_id:
                return d
        raise KeyError(dso_id)


# ---------------------------------------------------------------------------
# JSON schema

_NUM = {"type": "number"}
_BLOCKS = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["width_mw", "price_per_mwh"],
        "properties": {"width_mw": _NUM, "price_per_mwh": _NUM},
        "additionalProperties": False,
    },
}
_ID = {"type": ["string", "integer"]}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema", "transmission"],
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "metadata": {
            "type": "object",
            "properties": {"name": {"type": "string"}, "base_mva": {"type": "number", "exclusiveMinimum": 0}},
        },
        "transmission": {
            "type": "object",
            "required": ["buses", "lines", "generators"],
            "properties": {
                "reference_bus": _ID,
                "buses": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["id"],
                        "properties": {"id": _ID, "firm_load": _NUM},
                        "additionalProperties": False,
                    },
                },
                "lines": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["from_bus", "to_bus", "reactance", "flow_limit"],
                        "properties": {"id": _ID, "from_bus": _ID, "to_bus": _ID,
                                       "reactance": _NUM, "flow_limit": _NUM},
                        "additionalProperties": False,
                    },
                },
                "generators": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "bus", "blocks"],
                        "properties": {"id": _ID, "bus": _ID, "blocks": _BLOCKS},
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "distributions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["coupling_bus", "substation_node", "nodes", "branches", "aggregators"],
                "properties": {
                    "id": _ID,
                    "coupling_bus": _ID,
                    "substation_node": _ID,
                    "substation_u": _NUM,
                    "q_dso_min": _NUM,
                    "q_dso_max": _NUM,
                    "nodes": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["id"],
                            "properties": {"id": _ID, "firm_load_p": _NUM, "firm_load_q": _NUM,
                                           "u_min": _NUM, "u_max": _NUM, "phase": {"type": "string"}},
                            "additionalProperties": False,
                        },
                    },
                    "branches": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["parent_node", "child_node", "r", "x", "pl_max", "ql_max"],
                            "properties": {"id": _ID, "parent_node": _ID, "child_node": _ID,
                                           "r": _NUM, "x": _NUM, "pl_max": _NUM, "ql_max": _NUM},
                            "additionalProperties": False,
                        },
                    },
                    "aggregators": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["id", "kind", "node"],
                            "properties": {"id": _ID, "kind": {"enum": list(KINDS)}, "node": _ID,
                                           "blocks": _BLOCKS, "tan_phi": _NUM, "fixed_profile": _NUM},
                            "additionalProperties": False,
                        },
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _path(parts) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts)


def _blocks(raw) -> tuple[OfferBlock, ...]:
    return tuple(OfferBlock(float(b["width_mw"]), float(b["price_per_mwh"])) for b in raw or ())


def load_scenario(document: str | bytes | dict, *, check: bool = True) -> Scenario:
    """Parse a scenario document (JSON text or an already-decoded dict).

    With ``check`` (the default) the result is passed through :func:`validate`
    and any violation raises :class:`ScenarioError`.
    """
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    else:
        data = document

    validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ScenarioError("scenario does not match schema " + SCHEMA_TAG,
                            [Violation("schema", _path(e.absolute_path), e.message) for e in errors])

    meta = dict(data.get("metadata", {}))
    base_mva = float(meta.get("base_mva", 1.0))
    t = data["transmission"]
    buses = tuple(Bus(str(b["id"]), float(b.get("firm_load", 0.0))) for b in t["buses"])
    lines = tuple(Line(str(ln["from_bus"]), str(ln["to_bus"]), float(ln["reactance"]),
                       float(ln["flow_limit"]), str(ln.get("id", f"L{k}")))
                  for k, ln in enumerate(t["lines"]))
    gens = tuple(Generator(str(g["id"]), str(g["bus"]), _blocks(g["blocks"])) for g in t["generators"])
    ref = str(t.get("reference_bus", buses[0].id))
    trans = TransmissionSystem(buses, lines, gens, ref)

    dists = []
    for k, d in enumerate(data.get("distributions", [])):
        nodes = tuple(DistNode(str(n["id"]), float(n.get("firm_load_p", 0.0)), float(n.get("firm_load_q", 0.0)),
                               float(n.get("u_min", 0.9025)), float(n.get("u_max", 1.1025)))
                      for n in d["nodes"])
        branches = tuple(Branch(str(br.get("id", f"B{i}")), str(br["parent_node"]), str(br["child_node"]),
                                float(br["r"]), float(br["x"]), float(br["pl_max"]), float(br["ql_max"]))
                         for i, br in enumerate(d["branches"]))
        aggs = tuple(Aggregator(str(a["id"]), a["kind"], str(a["node"]), _blocks(a.get("blocks")),
                                float(a.get("tan_phi", 0.0)), float(a.get("fixed_profile", 0.0)))
                     for a in d["aggregators"])
        dists.append(DistributionSystem(
            id=str(d.get("id", f"dso{k + 1}")),
            coupling_bus=str(d["coupling_bus"]),
            substation_node=str(d["substation_node"]),
            nodes=nodes,
            branches=branches,
            aggregators=aggs,
            substation_u=float(d.get("substation_u", 1.0)),
            base_mva=base_mva,
            q_dso_min=float(d["q_dso_min"]) if "q_dso_min" in d else None,
            q_dso_max=float(d["q_dso_max"]) if "q_dso_max" in d else None,
        ))
    scenario = Scenario(trans, tuple(dists), name=str(meta.get("name", "scenario")),
                        base_mva=base_mva, metadata=meta)
    if check:
        problems = validate(scenario)
        if problems:
            raise ScenarioError(f"scenario {scenario.name!r} is invalid", problems)
    return scenario


def read_scenario(path, *, check: bool = True) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read(), check=check)


def _emit_blocks(blocks):
    return [{"width_mw": b.width, "price_per_mwh": b.price} for b in blocks]


def scenario_to_dict(s: Scenario) -> dict:
    meta = dict(s.metadata)
    meta.update(name=s.name, base_mva=s.base_mva)
    t = s.transmission
    out = {
        "schema": SCHEMA_TAG,
        "metadata": meta,
        "transmission": {
            "reference_bus": t.reference_bus,
            "buses": [{"id": b.id, "firm_load": b.firm_load} for b in t.buses],
            "lines": [{"id": ln.id, "from_bus": ln.from_bus, "to_bus": ln.to_bus,
                       "reactance": ln.reactance, "flow_limit": ln.flow_limit} for ln in t.lines],
            "generators": [{"id": g.id, "bus": g.bus, "blocks": _emit_blocks(g.blocks)} for g in t.generators],
        },
        "distributions": [],
    }
    for d in s.distributions:
        entry = {
            "id": d.id,
            "coupling_bus": d.coupling_bus,
            "substation_node": d.substation_node,
            "substation_u": d.substation_u,
            "nodes": [{"id": n.id, "firm_load_p": n.firm_load_p, "firm_load_q": n.firm_load_q,
                       "u_min": n.u_min, "u_max": n.u_max} for n in d.nodes],
            "branches": [{"id": br.id, "parent_node": br.parent_node, "child_node": br.child_node,
                          "r": br.r, "x": br.x, "pl_max": br.pl_max, "ql_max": br.ql_max}
                         for br in d.branches],
            "aggregators": [{"id": a.id, "kind": a.kind, "node": a.node, "blocks": _emit_blocks(a.blocks),
                             "tan_phi": a.tan_phi, "fixed_profile": a.fixed_profile}
                            for a in d.aggregators],
        }
        if d.q_dso_min is not None:
            entry["q_dso_min"] = d.q_dso_min
        if d.q_dso_max is not None:
            entry["q_dso_max"] = d.q_dso_max
        out["distributions"].append(entry)
    return out


def emit_scenario(s: Scenario) -> str:
    """Serialize to JSON text; floats keep their shortest round-trip repr."""
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


# ---------------------------------------------------------------------------
# validation


def _tree_problems(node_ids, edges, root, where):
    """Radiality problems for an edge list ``[(label, a, b), ...]``."""
    out = []
    parent = {n: n for n in node_ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for label, a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            out.append(Violation("not_radial", f"{where}.branches[{label}]",
                                 f"branch {label} closes a cycle ({a} - {b}); the feeder must be radial"))
        else:
            parent[ra] = rb
    roots = {find(n) for n in node_ids}
    if len(roots) > 1:
        stray = sorted(n for n in node_ids if find(n) != find(root))
        out.append(Violation("disconnected", f"{where}.nodes",
                             f"nodes not connected to {root}: {', '.join(stray)}"))
    return out


def _check_blocks(blocks, where, out, *, increasing: bool, code: str, label: str):
    for k, b in enumerate(blocks):
        if not b.width > 0:
            out.append(Violation("block_width", f"{where}.blocks[{k}]", f"block width {b.width} must be > 0"))
        if b.price != b.price or b.price in (float("inf"), float("-inf")):
            out.append(Violation("block_price", f"{where}.blocks[{k}]", "block price must be finite"))
    prices = [b.price for b in blocks]
    for k in range(1, len(prices)):
        bad = prices[k] < prices[k - 1] if increasing else prices[k] > prices[k - 1]
        if bad:
            out.append(Violation(code, f"{where}.blocks[{k}]",
                                 f"{label}: block prices {prices[k - 1]} then {prices[k]}"))
            break


def validate(s: Scenario) -> list[Violation]:
    """Return every invariant violation in ``s``; an empty list means valid."""
    out: list[Violation] = []
    t = s.transmission
    bus_ids = [b.id for b in t.buses]
    if len(set(bus_ids)) != len(bus_ids):
        out.append(Violation("duplicate_id", "$.transmission.buses", "bus ids are not unique"))
    known = set(bus_ids)
    if t.reference_bus not in known:
        out.append(Violation("unknown_bus", "$.transmission.reference_bus", f"unknown bus {t.reference_bus}"))
    for k, ln in enumerate(t.lines):
        where = f"$.transmission.lines[{k}]"
        for end in (ln.from_bus, ln.to_bus):
            if end not in known:
                out.append(Violation("unknown_bus", where, f"unknown bus {end}"))
        if ln.from_bus == ln.to_bus:
            out.append(Violation("self_loop", where, "line connects a bus to itself"))
        if not ln.flow_limit > 0:
            out.append(Violation("flow_limit", where, "flow_limit must be > 0"))
        if not ln.reactance > 0:
            out.append(Violation("reactance", where, "reactance must be > 0"))
    if not out:
        # connectivity of the transmission graph
        parent = {b: b for b in bus_ids}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for ln in t.lines:
            parent[find(ln.from_bus)] = find(ln.to_bus)
        if len({find(b) for b in bus_ids}) > 1:
            out.append(Violation("disconnected", "$.transmission.lines", "transmission graph is not connected"))
    gen_ids = set()
    for k, g in enumerate(t.generators):
        where = f"$.transmission.generators[{k}]"
        if g.id in gen_ids:
            out.append(Violation("duplicate_id", where, f"generator id {g.id} repeated"))
        gen_ids.add(g.id)
        if g.bus not in known:
            out.append(Violation("unknown_bus", where, f"unknown bus {g.bus}"))
        _check_blocks(g.blocks, where, out, increasing=True, code="nonconvex_offer",
                      label="non-convex generator offer")

    dso_ids = set()
    for k, d in enumerate(s.distributions):
        where = f"$.distributions[{k}]"
        if d.id in dso_ids:
            out.append(Violation("duplicate_id", where, f"distribution id {d.id} repeated"))
        dso_ids.add(d.id)
        if d.coupling_bus not in known:
            out.append(Violation("unknown_bus", f"{where}.coupling_bus", f"unknown bus {d.coupling_bus}"))
        out.extend(validate_distribution(d, where))
    return out


def validate_distribution(d: DistributionSystem, where: str = "$") -> list[Violation]:
    out: list[Violation] = []
    node_ids = [n.id for n in d.nodes]
    nodes = set(node_ids)
    if len(nodes) != len(node_ids):
        out.append(Violation("duplicate_id", f"{where}.nodes", "node ids are not unique"))
    if d.substation_node not in nodes:
        out.append(Violation("unknown_node", f"{where}.substation_node", f"unknown node {d.substation_node}"))
    for k, n in enumerate(d.nodes):
        if not n.u_min < n.u_max:
            out.append(Violation("empty_voltage_band", f"{where}.nodes[{k}]",
                                 f"empty voltage band at node {n.id}: u_min {n.u_min} >= u_max {n.u_max}"))
        if n.id == d.substation_node and not n.u_min <= d.substation_u <= n.u_max:
            out.append(Violation("substation_voltage", f"{where}.substation_u",
                                 "substation_u outside the substation node's voltage band"))
    branch_ids = [br.id for br in d.branches]
    if len(set(branch_ids)) != len(branch_ids):
        out.append(Violation("duplicate_id", f"{where}.branches", "branch ids are not unique"))
    edges = []
    for k, br in enumerate(d.branches):
        bw = f"{where}.branches[{k}]"
        ok = True
        for end in (br.parent_node, br.child_node):
            if end not in nodes:
                out.append(Violation("unknown_node", bw, f"unknown node {end}"))
                ok = False
        if br.r < 0 or br.x < 0:
            out.append(Violation("impedance", bw, "r and x must be >= 0"))
        if not (br.pl_max > 0 and br.ql_max > 0):
            out.append(Violation("branch_limit", bw, "pl_max and ql_max must be > 0"))
        if ok:
            edges.append((br.id, br.parent_node, br.child_node))
    if not out and d.substation_node in nodes:
        out.extend(_tree_problems(node_ids, edges, d.substation_node, where))
        if not out:
            out.extend(_orientation_problems(d, where))
        if not out and len(d.branches) != len(d.nodes) - 1:
            out.append(Violation("not_radial", f"{where}.branches",
                                 f"{len(d.branches)} branches for {len(d.nodes)} nodes"))
    agg_ids = set()
    for k, a in enumerate(d.aggregators):
        aw = f"{where}.aggregators[{k}]"
        if a.id in agg_ids:
            out.append(Violation("duplicate_id", aw, f"aggregator id {a.id} repeated"))
        agg_ids.add(a.id)
        if a.node not in nodes:
            out.append(Violation("unknown_node", aw, f"unknown node {a.node}"))
        if a.kind == REAG:
            if a.blocks:
                out.append(Violation("reag_blocks", aw, "renewable aggregators take no offer blocks"))
            if a.fixed_profile < 0:
                out.append(Violation("reag_profile", aw, "fixed_profile must be >= 0"))
        elif a.kind == DDGAG:
            _check_blocks(a.blocks, aw, out, increasing=True, code="nonconvex_offer",
                          label="non-convex generating offer")
        elif a.kind == DRAG:
            _check_blocks(a.blocks, aw, out, increasing=False, code="nonconvex_offer",
                          label="non-convex demand-response offer")
        else:
            out.append(Violation("unknown_kind", aw, f"unknown aggregator kind {a.kind}"))
    if d.q_dso_min is not None and d.q_dso_max is not None and d.q_dso_min > d.q_dso_max:
        out.append(Violation("q_dso_bounds", where, "q_dso_min > q_dso_max"))
    return out


def _orientation_problems(d: DistributionSystem, where: str) -> list[Violation]:
    """Every branch must point away from the substation."""
    children: dict[str, list[Branch]] = {}
    for br in d.branches:
        children.setdefault(br.parent_node, []).append(br)
    seen = {d.substation_node}
    walked = set()
    stack = [d.substation_node]
    while stack:
        n = stack.pop()
        for br in children.get(n, ()):
            if br.child_node in seen:
                continue
            walked.add(br.id)
            seen.add(br.child_node)
            stack.append(br.child_node)
    missing = [br.id for br in d.branches if br.id not in walked]
    if missing:
        return [Violation("orientation", f"{where}.branches",
                          f"branches not oriented away from the substation: {', '.join(missing)}")]
    return []


def topological_order(d: DistributionSystem) -> list[str]:
    """Node ids ordered root first (parents before children)."""
    children: dict[str, list[str]] = {}
    for br in d.branches:
        children.setdefault(br.parent_node, []).append(br.child_node)
    order = [d.substation_node]
    k = 0
    while k < len(order):
        order.extend(children.get(order[k], ()))
        k += 1
    return order


def relax_limits(s: Scenario, factor: float = 100.0) -> Scenario:
    """Widen every branch limit and voltage band by ``factor``.

    Voltage bands are scaled about their midpoint.
    """
    dists = []
    for d in s.distributions:
        nodes = tuple(replace(n, u_min=(n.u_min + n.u_max) / 2 - factor * (n.u_max - n.u_min) / 2,
                              u_max=(n.u_min + n.u_max) / 2 + factor * (n.u_max - n.u_min) / 2)
                      for n in d.nodes)
        branches = tuple(replace(br, pl_max=br.pl_max * factor, ql_max=br.ql_max * factor)
                         for br in d.branches)
        dists.append(replace(d, nodes=nodes, branches=branches))
    return replace(s, distributions=tuple(dists))
