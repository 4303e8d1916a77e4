"""System model: the data-flow diagram of an industrial system.

A model is a set of elements (processes, external entities, data stores)
annotated with Purdue levels, the directed flows between them, and the
trust boundaries that group them. Models are read from and written to a
small JSON document; see :func:`parse_model` and :func:`render_model`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from .errors import DuplicateIdError, InvalidModelError, ParseError

KINDS = ("process", "external_entity", "data_store")
DMZ = "DMZ"
PURDUE_LEVELS = (0, 1, 2, 3, 4, 5, DMZ)

_ID_RE = re.compile(r"[a-z][a-z0-9_]*\Z")


@dataclass(frozen=True)
class Element:
    id: str
    name: str
    kind: str
    purdue_level: int | str
    zone: str | None = None
    gateway: bool = False


@dataclass(frozen=True)
class Flow:
    id: str
    source: str
    target: str
    protocol: str | None = None
    data_class: str | None = None
    self_loop: bool = False


@dataclass(frozen=True)
class TrustBoundary:
    id: str
    name: str
    members: frozenset[str]


@dataclass(frozen=True)
class SystemModel:
    name: str
    elements: tuple[Element, ...] = ()
    flows: tuple[Flow, ...] = ()
    boundaries: tuple[TrustBoundary, ...] = ()
    notes: tuple[str, ...] = ()

    def element(self, element_id: str) -> Element:
        for el in self.elements:
            if el.id == element_id:
                return el
        raise KeyError(element_id)

    def flow(self, flow_id: str) -> Flow:
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise KeyError(flow_id)

    def canonical(self) -> "SystemModel":
        """Same model with every collection sorted by id."""
        return replace(
            self,
            elements=tuple(sorted(self.elements, key=lambda e: e.id)),
            flows=tuple(sorted(self.flows, key=lambda f: f.id)),
            boundaries=tuple(sorted(self.boundaries, key=lambda b: b.id)),
        )


@dataclass(frozen=True)
class Issue:
    code: str
    subject: str
    severity: str = "error"
    message: str = ""

    def __str__(self):
        text = f"{self.severity.upper()} {self.code} [{self.subject}]"
        return f"{text} {self.message}" if self.message else text


@dataclass(frozen=True)
class AssetInventory:
    external_actors: tuple[str, ...] = ()
    processes: tuple[str, ...] = ()
    data_stores: tuple[str, ...] = ()
    flows: tuple[str, ...] = ()
    interfaces: tuple[str, ...] = ()


# -- parsing -----------------------------------------------------------------

def _field(obj: dict, key: str, where: str, types, required=True, default=None):
    if key not in obj:
        if required:
            raise ParseError(f"{where}: missing field '{key}'", token=key)
        return default
    value = obj[key]
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ParseError(f"{where}.{key}: unexpected boolean", token=key)
    if not isinstance(value, types):
        raise ParseError(f"{where}.{key}: unexpected type {type(value).__name__}", token=key)
    return value


def _array(doc: dict, key: str) -> list:
    value = doc.get(key, [])
    if not isinstance(value, list):
        raise ParseError(f"'{key}' must be an array", token=key)
    for i, item in enumerate(value):
        if not isinstance(item, dict):
            raise ParseError(f"{key}[{i}] must be an object", token=key)
    return value


def _parse_level(value: Any, where: str) -> int | str:
    if isinstance(value, bool):
        raise ParseError(f"{where}.purdue_level: unexpected boolean", token="purdue_level")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value.upper() == DMZ:
        return DMZ
    raise ParseError(f"{where}.purdue_level: expected 0-5 or \"DMZ\", got {value!r}",
                     token=str(value))


def load_json(text: str | bytes) -> Any:
    """``json.loads`` with a :class:`ParseError` carrying line/column."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None


def parse_model(text: str | bytes) -> SystemModel:
    """Parse a model document, preserving declaration order.

    Only syntax and id uniqueness are checked here; dangling references,
    bad levels and unknown kinds are left to :func:`validate_model`.
    """
    doc = load_json(text)
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    name = _field(doc, "name", "model", str)

    seen: set[str] = set()
    elements = []
    for i, raw in enumerate(_array(doc, "elements")):
        where = f"elements[{i}]"
        el = Element(
            id=_field(raw, "id", where, str),
            name=_field(raw, "name", where, str, required=False, default=None) or raw.get("id"),
            kind=_field(raw, "kind", where, str),
            purdue_level=_parse_level(_field(raw, "purdue_level", where, (int, str)), where),
            zone=_field(raw, "zone", where, str, required=False),
            gateway=_field(raw, "gateway", where, bool, required=False, default=False),
        )
        if el.id in seen:
            raise DuplicateIdError(f"duplicate element id '{el.id}'", token=el.id)
        seen.add(el.id)
        elements.append(el)

    flow_ids: set[str] = set()
    flows = []
    for i, raw in enumerate(_array(doc, "flows")):
        where = f"flows[{i}]"
        source = _field(raw, "source", where, str)
        target = _field(raw, "target", where, str)
        fid = _field(raw, "id", where, str, required=False) or f"{source}_to_{target}"
        if fid in flow_ids:
            raise DuplicateIdError(f"duplicate flow id '{fid}'", token=fid)
        flow_ids.add(fid)
        flows.append(Flow(
            id=fid,
            source=source,
            target=target,
            protocol=_field(raw, "protocol", where, str, required=False),
            data_class=_field(raw, "data_class", where, str, required=False),
            self_loop=_field(raw, "self_loop", where, bool, required=False, default=False),
        ))

    boundary_ids: set[str] = set()
    boundaries = []
    for i, raw in enumerate(_array(doc, "boundaries")):
        where = f"boundaries[{i}]"
        bid = _field(raw, "id", where, str)
        members = _field(raw, "members", where, list)
        if not all(isinstance(m, str) for m in members):
            raise ParseError(f"{where}.members must be strings", token=bid)
        if bid in boundary_ids:
            raise DuplicateIdError(f"duplicate boundary id '{bid}'", token=bid)
        boundary_ids.add(bid)
        boundaries.append(TrustBoundary(
            id=bid,
            name=_field(raw, "name", where, str, required=False, default=None) or bid,
            members=frozenset(members),
        ))

    notes = doc.get("notes", [])
    if not isinstance(notes, list) or not all(isinstance(n, str) for n in notes):
        raise ParseError("'notes' must be an array of strings", token="notes")

    return SystemModel(name=name, elements=tuple(elements), flows=tuple(flows),
                       boundaries=tuple(boundaries), notes=tuple(notes))


def model_to_dict(m: SystemModel) -> dict:
    m = m.canonical()
    elements = []
    for el in m.elements:
        d = {"id": el.id, "name": el.name, "kind": el.kind, "purdue_level": el.purdue_level}
        if el.zone is not None:
            d["zone"] = el.zone
        if el.gateway:
            d["gateway"] = True
        elements.append(d)
    flows = []
    for f in m.flows:
        d = {"id": f.id, "source": f.source, "target": f.target}
        if f.protocol is not None:
            d["protocol"] = f.protocol
        if f.data_class is not None:
            d["data_class"] = f.data_class
        if f.self_loop:
            d["self_loop"] = True
        flows.append(d)
    doc = {
        "name": m.name,
        "elements": elements,
        "flows": flows,
        "boundaries": [{"id": b.id, "name": b.name, "members": sorted(b.members)}
                       for b in m.boundaries],
    }
    if m.notes:
        doc["notes"] = list(m.notes)
    return doc


def render_model(m: SystemModel) -> str:
    """Canonical writer: arrays sorted by id, 2-space indent, trailing newline."""
    return json.dumps(model_to_dict(m), indent=2, ensure_ascii=False) + "\n"


# -- validation and analysis -------------------------------------------------

def validate_model(m: SystemModel) -> list[Issue]:
    issues: list[Issue] = []
    ids = {el.id for el in m.elements}
    for el in m.elements:
        if not _ID_RE.match(el.id):
            issues.append(Issue("BAD_ID", el.id, message="ids must match [a-z][a-z0-9_]*"))
        if el.kind not in KINDS:
            issues.append(Issue("BAD_KIND", el.id, message=f"unknown kind {el.kind!r}"))
        if el.purdue_level not in PURDUE_LEVELS:
            issues.append(Issue("LEVEL_RANGE", el.id,
                                message=f"purdue_level {el.purdue_level!r} outside 0-5/DMZ"))
    for f in m.flows:
        if not _ID_RE.match(f.id):
            issues.append(Issue("BAD_ID", f.id, message="ids must match [a-z][a-z0-9_]*"))
        for end in (f.source, f.target):
            if end not in ids:
                issues.append(Issue("REF_UNKNOWN", end, message=f"flow {f.id} references it"))
        if f.source == f.target and not f.self_loop:
            issues.append(Issue("SELF_LOOP", f.id, message="source equals target"))
    for b in m.boundaries:
        if not b.members:
            issues.append(Issue("EMPTY_BOUNDARY", b.id))
        for member in sorted(b.members - ids):
            issues.append(Issue("REF_UNKNOWN", member, message=f"boundary {b.id} references it"))
    return issues


def require_valid(m: SystemModel) -> None:
    issues = validate_model(m)
    if issues:
        raise InvalidModelError(f"model '{m.name}' has {len(issues)} validation issue(s)", issues)


def identify_assets(m: SystemModel) -> AssetInventory:
    require_valid(m)
    by_kind: dict[str, list[str]] = {k: [] for k in KINDS}
    for el in m.elements:
        by_kind[el.kind].append(el.id)
    return AssetInventory(
        external_actors=tuple(by_kind["external_entity"]),
        processes=tuple(by_kind["process"]),
        data_stores=tuple(by_kind["data_store"]),
        flows=tuple(f.id for f in m.flows),
        interfaces=tuple(trust_boundary_crossings(m)),
    )


def _zones(m: SystemModel) -> dict[str, frozenset[str]]:
    membership: dict[str, set[str]] = {el.id: set() for el in m.elements}
    for b in m.boundaries:
        for member in b.members:
            membership.setdefault(member, set()).add(b.id)
    # an element outside every boundary is its own zone
    return {eid: frozenset(bs) if bs else frozenset({"\0" + eid})
            for eid, bs in membership.items()}


def trust_boundary_crossings(m: SystemModel) -> list[str]:
    """Ids of flows whose endpoints sit in different boundary sets."""
    if not m.boundaries:
        return []
    zones = _zones(m)
    return [f.id for f in m.flows
            if zones.get(f.source, frozenset({f.source})) != zones.get(f.target, frozenset({f.target}))]


def purdue_check(m: SystemModel) -> list[Issue]:
    """Flag flows that jump Purdue levels or bypass the DMZ.

    LEVEL_SKIP: endpoint levels differ by more than one (DMZ endpoints are
    exempt). NO_DMZ: a level 4/5 element talks directly to level 0-3.
    Output is sorted, so declaration order does not matter.
    """
    levels = {el.id: el.purdue_level for el in m.elements}
    found = []
    for f in m.flows:
        a, b = levels.get(f.source), levels.get(f.target)
        if not isinstance(a, int) or not isinstance(b, int):
            continue
        if abs(a - b) > 1:
            found.append(Issue("LEVEL_SKIP", f.id, "warning", f"level {a} -> level {b}"))
        if (a >= 4) != (b >= 4):
            found.append(Issue("NO_DMZ", f.id, "warning", f"level {a} -> level {b} without DMZ"))
    return sorted(found, key=lambda i: (i.subject, i.code))


# -- DOT ---------------------------------------------------------------------

def dot_quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(m: SystemModel) -> str:
    m = m.canonical()
    lines = [f"digraph {dot_quote(m.name)} {{", "  rankdir=LR;"]

    def node_line(el: Element, indent: str) -> str:
        shape = "circle" if el.gateway else "box"
        return f"{indent}{dot_quote(el.id)} [label={dot_quote(el.name)}, shape={shape}];"

    placed: set[str] = set()
    by_id = {el.id: el for el in m.elements}
    for b in m.boundaries:
        members = [by_id[i] for i in sorted(b.members) if i in by_id and i not in placed]
        lines.append(f"  subgraph {dot_quote('cluster_' + b.id)} {{")
        lines.append(f"    label={dot_quote(b.name)};")
        for el in members:
            lines.append(node_line(el, "    "))
            placed.add(el.id)
        lines.append("  }")
    for el in m.elements:
        if el.id not in placed:
            lines.append(node_line(el, "  "))
    for f in m.flows:
        lines.append(f"  {dot_quote(f.source)} -> {dot_quote(f.target)} [label={dot_quote(f.id)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def build_model(name: str, elements: Iterable[Element] = (), flows: Iterable[Flow] = (),
                boundaries: Iterable[TrustBoundary] = ()) -> SystemModel:
    """Convenience constructor taking any iterables."""
    return SystemModel(name=name, elements=tuple(elements), flows=tuple(flows),
                       boundaries=tuple(boundaries))
