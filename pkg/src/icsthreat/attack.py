"""ATT&CK for ICS matrix, STRIDE-to-technique mapping, and attack paths.

The attack graph has one node per (asset, technique) pair reachable from
the enumerated threats. An edge u -> v exists when v's tactic does not come
earlier in the matrix than u's and the two assets are the same or joined by
a model flow. Attack paths are simple paths from an entry-tactic node to a
goal-tactic node, ranked by the product of normalized step scores.
"""

from __future__ import annotations

import heapq
import re
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping

from .errors import (BadBoundsError, BadTacticError, ParseError, UnknownTechniqueError,
                     UnmappedCategoryError)
from .model import SystemModel, dot_quote, load_json, require_valid
from .stride import StrideCategory, Threat

TACTICS = (
    "Initial Access",
    "Execution",
    "Persistence",
    "Privilege Escalation",
    "Evasion",
    "Discovery",
    "Lateral Movement",
    "Collection",
    "Command and Control",
    "Inhibit Response Function",
    "Impair Process Control",
    "Impact",
)
DEFAULT_ENTRY = "Initial Access"
DEFAULT_GOAL = "Impact"
DEFAULT_STEP_SCORE = 5.0


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


@dataclass(frozen=True, order=True)
class Tactic:
    column_index: int
    name: str


@dataclass(frozen=True)
class Technique:
    technique_id: str
    name: str
    tactic: Tactic

    @property
    def key(self) -> str:
        return f"{slugify(self.tactic.name)}/{self.technique_id}"

    def sort_key(self):
        return (self.tactic.column_index, self.name)


@dataclass(frozen=True)
class AttackMatrix:
    tactics: tuple[Tactic, ...]
    techniques: tuple[Technique, ...]

    def tactic(self, name: str) -> Tactic:
        for t in self.tactics:
            if t.name.lower() == str(name).lower():
                return t
        raise BadTacticError(f"unknown tactic {name!r}", token=str(name))

    def lookup(self, name: str) -> tuple[Technique, ...]:
        """All techniques with this name, in column order (a name may sit under several tactics)."""
        found = tuple(t for t in self.techniques if t.name.lower() == str(name).lower())
        if not found:
            raise UnknownTechniqueError(f"unknown technique {name!r}", subject=str(name))
        return found

    def by_tactic(self, tactic: str) -> tuple[Technique, ...]:
        tac = self.tactic(tactic)
        return tuple(t for t in self.techniques if t.tactic == tac)


def load_attack_matrix(text: str | bytes) -> AttackMatrix:
    doc = load_json(text)
    if not isinstance(doc, dict) or not isinstance(doc.get("tactics"), list) \
            or not isinstance(doc.get("techniques"), list):
        raise ParseError("matrix file needs 'tactics' and 'techniques' arrays")
    canon = {name.lower(): i for i, name in enumerate(TACTICS)}
    listed = doc["tactics"]
    if sorted(str(n).lower() for n in listed) != sorted(canon):
        raise ParseError(f"matrix must list exactly the {len(TACTICS)} ICS tactics")
    tactics = tuple(Tactic(i, name) for i, name in enumerate(TACTICS))

    techniques, seen = [], set()
    for i, raw in enumerate(doc["techniques"]):
        if not isinstance(raw, dict) or not isinstance(raw.get("name"), str):
            raise ParseError(f"techniques[{i}]: needs a string 'name'")
        tac_name = str(raw.get("tactic", "")).lower()
        if tac_name not in canon:
            raise BadTacticError(f"techniques[{i}]: unknown tactic {raw.get('tactic')!r}",
                                 token=str(raw.get("tactic")))
        tactic = tactics[canon[tac_name]]
        if (tactic, raw["name"]) in seen:
            raise ParseError(f"duplicate technique {raw['name']!r} under {tactic.name}",
                             token=raw["name"])
        seen.add((tactic, raw["name"]))
        techniques.append(Technique(slugify(raw["name"]), raw["name"], tactic))
    techniques.sort(key=Technique.sort_key)
    return AttackMatrix(tactics, tuple(techniques))


def default_matrix() -> AttackMatrix:
    return load_attack_matrix(_data("attack_matrix.json"))


def _data(name: str) -> str:
    return resources.files("icsthreat.data").joinpath(name).read_text(encoding="utf-8")


# -- STRIDE -> technique mapping ---------------------------------------------

@dataclass(frozen=True)
class MappingTable:
    entries: Mapping[StrideCategory, tuple[Technique, ...]]

    def __contains__(self, category):
        return category in self.entries


def load_mapping(text: str | bytes, matrix: AttackMatrix) -> MappingTable:
    """Read ``{category: [technique names]}``; names resolve against ``matrix``."""
    doc = load_json(text)
    if not isinstance(doc, dict):
        raise ParseError("mapping file must be a JSON object")
    entries = {}
    for cat_name, names in doc.items():
        cat = StrideCategory.parse(cat_name)
        if not isinstance(names, list):
            raise ParseError(f"mapping for {cat_name!r} must be an array", token=cat_name)
        techs = {t for n in names for t in matrix.lookup(n)}
        entries[cat] = tuple(sorted(techs, key=Technique.sort_key))
    return MappingTable(entries)


def default_mapping(matrix: AttackMatrix | None = None) -> MappingTable:
    return load_mapping(_data("stride_mapping.json"), matrix or default_matrix())


def map_threat_to_techniques(t: Threat | StrideCategory, mapping: MappingTable) -> list[Technique]:
    category = t if isinstance(t, StrideCategory) else t.category
    if category not in mapping.entries:
        raise UnmappedCategoryError(f"no techniques mapped for {category.label}",
                                    subject=category.value)
    return list(mapping.entries[category])


# -- graph -------------------------------------------------------------------

@dataclass(frozen=True)
class AttackNode:
    node_id: str
    element: str
    technique: Technique
    threats: tuple[str, ...] = ()
    score: float | None = None
    cwe_note: str | None = None

    @property
    def column(self) -> int:
        return self.technique.tactic.column_index


@dataclass
class AttackGraph:
    nodes: dict[str, AttackNode] = field(default_factory=dict)
    successors: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def edges(self) -> list[tuple[str, str]]:
        return [(u, v) for u in sorted(self.successors) for v in self.successors[u]]

    @classmethod
    def from_edges(cls, nodes: Iterable[AttackNode], edges: Iterable[tuple[str, str]]):
        g = cls({n.node_id: n for n in nodes})
        succ: dict[str, set[str]] = {nid: set() for nid in g.nodes}
        for u, v in edges:
            succ[u].add(v)
        g.successors = {u: tuple(sorted(vs)) for u, vs in succ.items()}
        return g


def node_id_for(element: str, technique: Technique) -> str:
    return f"{element}:{technique.key}"


def build_attack_graph(m: SystemModel, ts, matrix: AttackMatrix, mapping: MappingTable,
                       scores: Mapping[str, float] | None = None,
                       cwe_notes: Mapping[str, str] | None = None) -> AttackGraph:
    """Build the (asset, technique) graph.

    ``scores`` and ``cwe_notes`` are keyed by threat id; a node takes the
    highest score among its threats and the first note found.
    """
    require_valid(m)
    scores = scores or {}
    cwe_notes = cwe_notes or {}
    known = set(matrix.techniques)
    grouped: dict[str, list] = {}
    for threat in ts:
        for tech in map_threat_to_techniques(threat, mapping):
            if tech not in known:
                raise UnknownTechniqueError(f"{tech.name} not in matrix", subject=tech.name)
            nid = node_id_for(threat.attributed_asset, tech)
            grouped.setdefault(nid, [threat.attributed_asset, tech, []])[2].append(threat.threat_id)

    nodes = []
    for nid, (element, tech, tids) in grouped.items():
        tids = sorted(set(tids))
        known_scores = [scores[t] for t in tids if scores.get(t) is not None]
        note = next((cwe_notes[t] for t in tids if cwe_notes.get(t)), None)
        nodes.append(AttackNode(nid, element, tech, tuple(tids),
                                max(known_scores) if known_scores else None, note))

    linked = {(f.source, f.target) for f in m.flows}
    by_element: dict[str, list[AttackNode]] = {}
    for n in nodes:
        by_element.setdefault(n.element, []).append(n)
    edges = []
    for u in nodes:
        neighbours = [u.element] + sorted(t for s, t in linked if s == u.element and t != u.element)
        for el in neighbours:
            for v in by_element.get(el, ()):
                if v.node_id != u.node_id and v.column >= u.column:
                    edges.append((u.node_id, v.node_id))
    return AttackGraph.from_edges(nodes, edges)


# -- paths -------------------------------------------------------------------

@dataclass(frozen=True)
class AttackStep:
    element: str
    technique: Technique
    threat: str | None = None
    cwe_note: str | None = None
    score: float | None = None

    @property
    def node_id(self) -> str:
        return node_id_for(self.element, self.technique)

    @property
    def tactic(self) -> str:
        return self.technique.tactic.name


@dataclass(frozen=True)
class AttackPath:
    goal: str
    steps: tuple[AttackStep, ...]
    path_score: float | None = None

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(s.node_id for s in self.steps)

    def __len__(self):
        return len(self.steps)


def _distance_to_goal(g: AttackGraph, goals: set[str]) -> dict[str, int]:
    preds: dict[str, list[str]] = {n: [] for n in g.nodes}
    for u, vs in g.successors.items():
        for v in vs:
            preds[v].append(u)
    dist = {n: 0 for n in goals}
    queue = deque(sorted(goals))
    while queue:
        v = queue.popleft()
        for u in preds[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def simple_paths(g: AttackGraph, entry: str, goal: str, max_len: int) -> list[tuple[str, ...]]:
    """Node-id tuples of every simple entry->goal path with at most ``max_len`` nodes."""
    starts = sorted(n.node_id for n in g.nodes.values() if n.technique.tactic.name == entry)
    goals = {n.node_id for n in g.nodes.values() if n.technique.tactic.name == goal}
    dist = _distance_to_goal(g, goals)
    found: list[tuple[str, ...]] = []

    path: list[str] = []
    on_path: set[str] = set()

    def extend(node: str) -> None:
        path.append(node)
        on_path.add(node)
        if node in goals and len(path) >= 2:
            found.append(tuple(path))
        if len(path) < max_len:
            for nxt in g.successors.get(node, ()):
                # shortest remaining distance is a lower bound, so this never drops a path
                if nxt not in on_path and nxt in dist and len(path) + 1 + dist[nxt] <= max_len:
                    extend(nxt)
        path.pop()
        on_path.discard(node)

    for s in starts:
        if s in dist:
            extend(s)
    return found


def enumerate_paths(g: AttackGraph, entry: str = DEFAULT_ENTRY, goal: str = DEFAULT_GOAL,
                    max_len: int = 4, max_paths: int | None = None,
                    default_score: float = DEFAULT_STEP_SCORE) -> list[AttackPath]:
    """Ranked simple paths from ``entry``-tactic nodes to ``goal``-tactic nodes."""
    try:
        entry_col, goal_col = TACTICS.index(entry), TACTICS.index(goal)
    except ValueError:
        raise BadBoundsError(f"unknown tactic in {entry!r} -> {goal!r}") from None
    if entry_col >= goal_col:
        raise BadBoundsError(f"entry tactic {entry!r} must precede goal {goal!r}")
    if max_len < 2:
        raise BadBoundsError(f"max_len must be at least 2, got {max_len}")
    if max_paths is not None and max_paths < 1:
        raise BadBoundsError(f"max_paths must be positive, got {max_paths}")

    if max_paths is None:
        found = simple_paths(g, entry, goal, max_len)
    else:
        found = best_paths(g, entry, goal, max_len, max_paths, default_score)
    paths = []
    for ids in found:
        steps = []
        for nid in ids:
            node = g.nodes[nid]
            steps.append(AttackStep(node.element, node.technique,
                                    node.threats[0] if node.threats else None,
                                    node.cwe_note, node.score))
        paths.append(AttackPath(goal, tuple(steps)))
    ranked = rank_paths(paths, default_score=default_score)
    return ranked if max_paths is None else ranked[:max_paths]


def best_paths(g: AttackGraph, entry: str, goal: str, max_len: int, k: int,
               default_score: float = DEFAULT_STEP_SCORE) -> list[tuple[str, ...]]:
    """The ``k`` best paths in ranking order, without enumerating the rest.

    Extending a path multiplies its score by a factor <= 1 and makes it
    longer, so no extension ranks ahead of its prefix. Popping partial paths
    best-first therefore yields complete paths already in ranking order.
    """
    starts = sorted(n.node_id for n in g.nodes.values() if n.technique.tactic.name == entry)
    goals = {n.node_id for n in g.nodes.values() if n.technique.tactic.name == goal}
    dist = _distance_to_goal(g, goals)

    def step(nid: str) -> float:
        s = g.nodes[nid].score
        return (default_score if s is None else s) / 10.0

    heap = []
    for s in starts:
        if s in dist:
            value = 10.0 * step(s)
            heapq.heappush(heap, (-round(value, 9), 1, (s,), value))
    found: list[tuple[str, ...]] = []
    while heap and len(found) < k:
        _, length, ids, value = heapq.heappop(heap)
        if length >= 2 and ids[-1] in goals:
            found.append(ids)
        if length == max_len:
            continue
        for nxt in g.successors.get(ids[-1], ()):
            if nxt not in ids and nxt in dist and length + 1 + dist[nxt] <= max_len:
                v = value * step(nxt)
                heapq.heappush(heap, (-round(v, 9), length + 1, ids + (nxt,), v))
    return found


def path_score(step_scores: Iterable[float]) -> float:
    """10 * prod(s_i / 10): every step must succeed."""
    value = 10.0
    for s in step_scores:
        value *= s / 10.0
    return value


def rank_paths(paths: Iterable[AttackPath], scores: Mapping[str, float] | None = None,
               default_score: float = DEFAULT_STEP_SCORE) -> list[AttackPath]:
    """Attach ``path_score`` and sort best first.

    A step's score comes from ``scores[node_id]`` when given, else from the
    step itself, else ``default_score``. Ties go to the shorter path, then
    to the lexicographically smaller node-id sequence.
    """
    scored = []
    for p in paths:
        step_values = []
        for s in p.steps:
            value = scores.get(s.node_id) if scores is not None else None
            if value is None:
                value = s.score if s.score is not None else default_score
            step_values.append(value)
        scored.append(replace(p, path_score=path_score(step_values)))
    scored.sort(key=lambda p: (-round(p.path_score, 9), len(p.steps), p.node_ids))
    return scored


def export_paths_dot(paths: Iterable[AttackPath]) -> str:
    lines = ['digraph "attack_paths" {', "  rankdir=LR;"]
    for i, p in enumerate(paths, 1):
        score = "" if p.path_score is None else f" (score {p.path_score:.2f})"
        lines.append(f"  subgraph {dot_quote(f'cluster_path_{i}')} {{")
        lines.append(f"    label={dot_quote(f'Path {i}: {p.goal}{score}')};")
        for j, s in enumerate(p.steps):
            label = f"{s.element} / {s.technique.name} / {s.tactic}"
            lines.append(f"    {dot_quote(f'p{i}_{j}')} [label={dot_quote(label)}, shape=box];")
        for j in range(len(p.steps) - 1):
            lines.append(f"    {dot_quote(f'p{i}_{j}')} -> {dot_quote(f'p{i}_{j + 1}')};")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
