import copy
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kslat.algebra import DensityOperator
from kslat.datasets import load, manifest
from kslat.errors import DimensionMismatch, HashMismatch
from kslat.linalg import Operator
from kslat.oracles import presheaf_census
from kslat.presheaf import (
    assignment_to_section,
    build_spectral_presheaf,
    enumerate_global_sections,
    functoriality_violations,
    global_section_search,
    point_measure_classify,
    section_is_valid,
    section_to_assignment,
    state_presheaf_section,
    verify_section_certificate,
)
from kslat.projlattice import REST, RayConfiguration
from kslat.search import SAT, UNSAT, enumerate_two_valued_measures


@pytest.fixture(scope="module")
def shared_ray():
    # two bases of C^3 sharing e1
    return RayConfiguration.from_vectors(3, [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 1, 1], [0, 1, -1]],
                                         ["e1", "e2", "e3", "f", "g"])


def test_single_context_bundle(basis3):
    b = build_spectral_presheaf(basis3)
    assert len(b.nodes) == 1 and b.spectrum(0) == (0, 1, 2)
    assert b.poset.covers == [] and b.restriction == {}


def test_shared_ray_subcontext(shared_ray):
    b = build_spectral_presheaf(shared_ray)
    keys = [c.ray_ids for c in b.nodes]
    assert keys == [(0,), (0, 1, 2), (0, 3, 4)]
    assert b.restriction[(0, 1)] == {0: 0, 1: REST, 2: REST}
    assert b.restriction[(0, 2)] == {0: 0, 3: REST, 4: REST}
    # dominance oracle: each atom of the big node lies under exactly one atom of {e1}
    small = b.nodes[0].all_atoms()
    for a, img in b.restriction[(0, 1)].items():
        big_atom = b.nodes[1].all_atoms()[b.spectrum(1).index(a)].operator.to_numpy()
        dom = [k for k, s in enumerate(small) if np.allclose(s.operator.to_numpy() @ big_atom, big_atom)]
        assert [b.spectrum(0)[k] for k in dom] == [img]


@pytest.mark.parametrize("name", ["basis3", "dim2_pairs", "peres33", "cabello18"])
def test_bundle_census_matches_oracle(name):
    cfg = load(name)
    b = build_spectral_presheaf(cfg)
    census = presheaf_census(cfg)
    pairs = sum(1 for _ in b.poset.order_pairs())
    assert (len(b.nodes), pairs) == (census.nodes, census.order_pairs)
    entry = manifest()["datasets"][name]
    assert (entry["poset_nodes"], entry["poset_order_pairs"]) == (census.nodes, census.order_pairs)
    assert functoriality_violations(b) == []


def test_functoriality_detects_broken_map():
    # {e1} < {e1,e2} < standard basis gives a chain of length two
    cfg = RayConfiguration.from_vectors(4, [
        [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
        [0, 0, 1, 1], [0, 0, 1, -1], [0, 1, 1, 1], [0, 1, -1, 0], [0, 1, 1, -2],
    ])
    b = build_spectral_presheaf(cfg)
    assert functoriality_violations(b) == []
    chain = next((m, n, c) for c, mids in b.poset.below.items() for n in mids for m in b.poset.below[n])
    m, n, c = chain
    broken = copy.deepcopy(b)
    atom = next(a for a in broken.spectrum(c) if broken.restrict(m, c, a) != REST)
    broken.restriction[(m, c)][atom] = REST
    assert functoriality_violations(broken)


def test_bundle_serialization(cabello):
    data = json.loads(build_spectral_presheaf(cabello).dumps())
    assert data["format"] == "kslat-presheaf-bundle" and data["config_hash"] == cabello.hash
    assert len(data["nodes"]) == manifest()["datasets"]["cabello18"]["poset_nodes"]


# global sections ---------------------------------------------------------------


def test_single_context_has_three_sections(basis3):
    b = build_spectral_presheaf(basis3)
    assert global_section_search(b).verdict == SAT
    assert len(enumerate_global_sections(b)) == 3


def test_peres_has_no_section(peres):
    b = build_spectral_presheaf(peres)
    out = global_section_search(b)
    assert out.verdict == UNSAT and verify_section_certificate(out.to_certificate(), b)


def test_dim2_section_exists(dim2):
    b = build_spectral_presheaf(dim2)
    out = global_section_search(b)
    assert out.verdict == SAT and section_is_valid(b, out.section)


def test_tampered_section_certificates(dim2, peres, cabello):
    b = build_spectral_presheaf(dim2)
    cert = global_section_search(b).to_certificate()
    k = next(iter(cert["section"]))
    cert["section"][k] = "rest"
    assert not verify_section_certificate(cert, b)
    bp = build_spectral_presheaf(peres)
    cert = global_section_search(bp).to_certificate()
    cert["tree"]["choices"].popitem()
    assert not verify_section_certificate(cert, bp)
    with pytest.raises(HashMismatch):
        verify_section_certificate(cert, build_spectral_presheaf(cabello))


@pytest.mark.parametrize("name", ["basis3", "dim2_pairs"])
def test_sections_biject_with_measures(name):
    cfg = load(name)
    b = build_spectral_presheaf(cfg)
    sections = enumerate_global_sections(b)
    measures = enumerate_two_valued_measures(cfg)
    assert sorted(section_to_assignment(b, s) for s in sections) == measures
    for w in measures:
        assert section_is_valid(b, assignment_to_section(b, w))
        assert section_to_assignment(b, assignment_to_section(b, w)) == w


def test_section_search_budget(peres):
    assert global_section_search(build_spectral_presheaf(peres), budget=5).verdict == "INDETERMINATE"


# state presheaf ----------------------------------------------------------------


def test_maximally_mixed_uniform(basis3):
    sec = state_presheaf_section(DensityOperator.maximally_mixed(3).operator, build_spectral_presheaf(basis3))
    assert all(abs(w - 1 / 3) < 1e-15 for w in sec.weights[0].values())
    assert point_measure_classify(sec).per_node == [None]


def test_pure_atom_gives_point_measure(shared_ray):
    b = build_spectral_presheaf(shared_ray)
    sec = state_presheaf_section(DensityOperator.pure([0, 1, 1]).operator, b)
    assert point_measure_classify(sec).per_node[2] == 3


def test_edge_compatibility_two_contexts(shared_ray):
    b = build_spectral_presheaf(shared_ray)
    sec = state_presheaf_section(Operator(np.diag([0.5, 0.3, 0.2])), b)
    # the e1 node: weight 0.5 on e1, remainder 0.5 = 0.3 + 0.2 = (f, g) weights
    assert sec.weights[0][0] == 0.5 and abs(sec.weights[0][REST] - 0.5) < 1e-15
    assert abs(sec.weights[2][3] + sec.weights[2][4] - 0.5) < 1e-15
    assert sec.max_residual <= 1e-12


def test_incomplete_nodes_carry_remainder(peres):
    sec = state_presheaf_section(DensityOperator.maximally_mixed(3).operator, build_spectral_presheaf(peres))
    for w in sec.weights:
        assert abs(sum(w.values()) - 1) < 1e-12


def test_dimension_mismatch(basis3):
    with pytest.raises(DimensionMismatch):
        state_presheaf_section(Operator.identity(2), build_spectral_presheaf(basis3))


def test_point_sections_match_spectral_sections(basis3):
    b = build_spectral_presheaf(basis3)
    choices = []
    for k in range(3):
        rho = DensityOperator.pure([int(j == k) for j in range(3)]).operator
        verdict = point_measure_classify(state_presheaf_section(rho, b))
        assert verdict.global_verdict == "ALL-POINT"
        choices.append(verdict.spectral_choice)
    assert sorted(map(str, choices)) == sorted(map(str, enumerate_global_sections(b)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_point_measure_iff_rank_one_on_atom(seed):
    rng = np.random.default_rng(seed)
    cfg = load("cabello18")
    b = build_spectral_presheaf(cfg)
    k = int(rng.integers(len(cfg)))
    if rng.random() < 0.5:
        rho = DensityOperator.pure(list(cfg.rays[k].vector)).operator
    else:
        rho = DensityOperator.random(4, rng, rank=int(rng.integers(1, 5))).operator
    w, v = np.linalg.eigh(rho.to_numpy())
    verdict = point_measure_classify(state_presheaf_section(rho, b))
    for n, c in enumerate(b.nodes):
        if not c.complete:
            continue
        rank_one_on = None
        if abs(w[-1] - 1) < 1e-10:
            for a, p in zip(c.spectrum(), c.all_atoms()):
                if np.allclose(p.operator.to_numpy(), np.outer(v[:, -1], v[:, -1].conj()), atol=1e-8):
                    rank_one_on = a
        assert verdict.per_node[n] == rank_one_on
    assert verdict.global_verdict == "NOT-ALL-POINT"
