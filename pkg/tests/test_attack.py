import json

import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsthreat.attack import (TACTICS, AttackGraph, AttackNode, AttackPath, AttackStep, Tactic,
                              Technique, build_attack_graph, default_mapping, default_matrix,
                              enumerate_paths, export_paths_dot, load_attack_matrix,
                              load_mapping, map_threat_to_techniques, path_score, rank_paths)
from icsthreat.errors import (BadBoundsError, BadTacticError, ParseError,
                              UnknownTechniqueError, UnmappedCategoryError)
from icsthreat.model import Element, Flow, build_model
from icsthreat.stride import StrideCategory, Threat, ThreatSet

from oracles import brute_force_paths, random_graph

S = StrideCategory
IA, IMPACT = 0, 11


def tech(name, col):
    return Technique(name.lower(), name, Tactic(col, TACTICS[col]))


def node(nid, col, score=None, element=None):
    return AttackNode(nid, element or nid, tech(nid, col), score=score)


# -- matrix ------------------------------------------------------------------

def test_bundled_matrix_shape():
    mx = default_matrix()
    assert [t.name for t in mx.tactics] == list(TACTICS)
    counts = [len(mx.by_tactic(t.name)) for t in mx.tactics]
    assert counts == [12, 9, 6, 2, 6, 5, 7, 11, 3, 14, 5, 12]


def test_lookup():
    mx = default_matrix()
    assert [t.tactic.name for t in mx.lookup("Drive-by Compromise")] == ["Initial Access"]
    with pytest.raises(UnknownTechniqueError) as exc:
        mx.lookup("No Such Technique")
    assert exc.value.code == "UNKNOWN_TECHNIQUE"


def test_names_unique_within_tactic():
    mx = default_matrix()
    for t in mx.tactics:
        names = [x.name for x in mx.by_tactic(t.name)]
        assert len(names) == len(set(names))


def test_bad_tactic():
    doc = {"tactics": list(TACTICS), "techniques": [{"name": "X", "tactic": "Recon"}]}
    with pytest.raises(BadTacticError):
        load_attack_matrix(json.dumps(doc))


def test_matrix_needs_all_tactics():
    with pytest.raises(ParseError):
        load_attack_matrix(json.dumps({"tactics": ["Impact"], "techniques": []}))


# -- mapping -----------------------------------------------------------------

def test_default_mapping_covers_all():
    mp = default_mapping()
    for cat in S:
        techs = map_threat_to_techniques(cat, mp)
        assert techs and techs == sorted(techs, key=Technique.sort_key)


def test_mapping_examples():
    mp = default_mapping()
    assert "Spoof Reporting Message" in {t.name for t in map_threat_to_techniques(S.SPOOFING, mp)}
    assert "Denial of Service" in {t.name for t in
                                   map_threat_to_techniques(S.DENIAL_OF_SERVICE, mp)}


def test_unmapped_category():
    mx = default_matrix()
    mp = load_mapping(json.dumps({"Spoofing": ["Rogue Master"]}), mx)
    with pytest.raises(UnmappedCategoryError) as exc:
        map_threat_to_techniques(S.TAMPERING, mp)
    assert exc.value.code == "UNMAPPED_CATEGORY"


def test_mapping_unknown_technique():
    with pytest.raises(UnknownTechniqueError):
        load_mapping(json.dumps({"Spoofing": ["Telepathy"]}), default_matrix())


# -- graph -------------------------------------------------------------------

def _two_element_model():
    return build_model("m", [Element("a", "A", "process", 1), Element("b", "B", "process", 1)],
                       [Flow("a_to_b", "a", "b")])


def _mapping(mx, entries):
    return load_mapping(json.dumps(entries), mx)


def test_empty_threat_set_graph():
    g = build_attack_graph(_two_element_model(), ThreatSet("m"), default_matrix(),
                           default_mapping())
    assert g.nodes == {} and g.edges() == []


def test_one_threat_one_node():
    mx = default_matrix()
    t = Threat("R@a_to_b", S.TAMPERING, "a_to_b", "b", "", "", "R")
    g = build_attack_graph(_two_element_model(), ThreatSet("m", (t,)), mx,
                           _mapping(mx, {"Tampering": ["Modify Parameter"]}))
    assert len(g.nodes) == 1 and g.edges() == []


def test_adjacent_elements_single_edge():
    mx = default_matrix()
    mp = _mapping(mx, {"Spoofing": ["Drive-by Compromise"], "Tampering": ["Loss of Safety"]})
    # spoofing lands on the flow source (a), tampering on the target (b)
    ts = ThreatSet("m", (Threat("S@a_to_b", S.SPOOFING, "a_to_b", "a", "", "", "S"),
                         Threat("T@a_to_b", S.TAMPERING, "a_to_b", "b", "", "", "T")))
    g = build_attack_graph(_two_element_model(), ts, mx, mp)
    assert g.edges() == [("a:initial-access/drive-by-compromise", "b:impact/loss-of-safety")]


def test_graph_soundness(iom):
    m, ts, sts = iom
    mx = default_matrix()
    g = build_attack_graph(m, ts, mx, default_mapping(mx), sts.scores())
    ids = {t.threat_id for t in ts}
    linked = {(f.source, f.target) for f in m.flows}
    for n in g.nodes.values():
        assert n.threats and set(n.threats) <= ids
    for u, v in g.edges():
        a, b = g.nodes[u], g.nodes[v]
        assert b.column >= a.column
        assert a.element == b.element or (a.element, b.element) in linked


# -- paths -------------------------------------------------------------------

def test_linear_chain():
    g = AttackGraph.from_edges([node("e", IA), node("m", 5), node("g", IMPACT)],
                               [("e", "m"), ("m", "g")])
    paths = enumerate_paths(g)
    assert [p.node_ids for p in paths] == [("e:initial-access/e", "m:discovery/m",
                                            "g:impact/g")]


def test_diamond():
    g = AttackGraph.from_edges([node("e", IA), node("a", 3), node("b", 4), node("g", IMPACT)],
                               [("e", "a"), ("e", "b"), ("a", "g"), ("b", "g")])
    assert len(enumerate_paths(g)) == 2


@pytest.mark.parametrize("kwargs", [{"max_len": 1}, {"entry": "Impact", "goal": "Impact"},
                                    {"entry": "Impact", "goal": "Initial Access"},
                                    {"goal": "Exfiltration"}, {"max_paths": 0}])
def test_bad_bounds(kwargs):
    with pytest.raises(BadBoundsError) as exc:
        enumerate_paths(AttackGraph(), **kwargs)
    assert exc.value.code == "BAD_BOUNDS"


def _oracle_ranked(g, max_len, default=5.0):
    column = {nid: n.column for nid, n in g.nodes.items()}
    found = brute_force_paths(list(g.nodes), g.edges(), column, IA, IMPACT, max_len)

    def score(ids):
        value = 10.0
        for nid in ids:
            s = g.nodes[nid].score
            value *= (default if s is None else s) / 10.0
        return value

    return sorted(found, key=lambda ids: (-round(score(ids), 9), len(ids), ids)), score


@pytest.mark.parametrize("seed", range(0, 1000, 50))
def test_oracle_sample(seed):
    g, max_len = random_graph(seed)
    expected, score = _oracle_ranked(g, max_len)
    got = enumerate_paths(g, max_len=max_len)
    assert [p.node_ids for p in got] == expected
    for p in got:
        assert p.path_score == pytest.approx(score(p.node_ids))


@pytest.mark.parametrize("seed", range(0, 1000, 25))
def test_top_k_matches_full_ranking(seed):
    g, max_len = random_graph(seed)
    expected, _ = _oracle_ranked(g, max_len)
    for k in (1, 2, 5):
        got = enumerate_paths(g, max_len=max_len, max_paths=k)
        assert [p.node_ids for p in got] == expected[:k]


def test_fixture_paths_end_in_impact(iom):
    m, ts, sts = iom
    mx = default_matrix()
    g = build_attack_graph(m, ts, mx, default_mapping(mx), sts.scores())
    paths = enumerate_paths(g, max_paths=10)
    assert len(paths) == 10
    for p in paths:
        cols = [s.technique.tactic.column_index for s in p.steps]
        assert cols == sorted(cols)
        assert p.steps[0].tactic == "Initial Access" and p.steps[-1].tactic == "Impact"
        assert all(m.element(s.element) for s in p.steps)
    scores = [p.path_score for p in paths]
    assert scores == sorted(scores, reverse=True)


def test_top_k_agrees_with_full_enumeration_on_fixture(iop):
    m, ts, sts = iop
    mx = default_matrix()
    g = build_attack_graph(m, ts, mx, default_mapping(mx), sts.scores())
    full = enumerate_paths(g, max_len=3)
    top = enumerate_paths(g, max_len=3, max_paths=25)
    assert [p.node_ids for p in top] == [p.node_ids for p in full[:25]]


# -- scoring of paths --------------------------------------------------------

def _path(*scores):
    steps = tuple(AttackStep(f"e{i}", tech(f"T{i}", 0), score=s) for i, s in enumerate(scores))
    return AttackPath("Impact", steps)


def test_path_score_examples():
    assert path_score([9.8, 7.5]) == pytest.approx(7.35)
    assert path_score([9.8, 0.0, 7.5]) == 0.0
    assert path_score([9.1]) == pytest.approx(9.1)


def test_rank_paths_order():
    ranked = rank_paths([_path(5.0, 5.0), _path(9.8, 7.5), _path(7.35)])
    assert [round(p.path_score, 4) for p in ranked] == [7.35, 7.35, 2.5]
    assert len(ranked[0].steps) == 1  # tie goes to the shorter path


def test_rank_paths_default_and_lookup():
    p = _path(None, None)
    assert rank_paths([p])[0].path_score == pytest.approx(2.5)
    assert rank_paths([p], default_score=10.0)[0].path_score == pytest.approx(10.0)
    lookup = {p.steps[0].node_id: 8.0}
    assert rank_paths([p], lookup, default_score=10.0)[0].path_score == pytest.approx(8.0)


@settings(max_examples=300)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=6), st.floats(0, 10))
def test_appending_step_never_increases(scores, extra):
    before, after = path_score(scores), path_score(scores + [extra])
    if extra < 10 and before > 0:
        assert after < before
    elif extra == 10:
        assert after == pytest.approx(before)
    assert 0.0 <= after <= 10.0


# -- DOT ---------------------------------------------------------------------

def test_paths_dot():
    assert "subgraph" not in export_paths_dot([])
    paths = rank_paths([_path(9.8, 7.5), _path(5.0), _path(1.0, 2.0, 3.0)])
    text = export_paths_dot(paths)
    assert text == export_paths_dot(paths)
    graph = pydot.graph_from_dot_data(text)[0]
    assert len(graph.get_subgraphs()) == 3
    assert '"e0 / T0 / Initial Access"' in text
