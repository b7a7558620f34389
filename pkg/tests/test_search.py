import copy
import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from kslat.datasets import ks_configuration, load, manifest
from kslat.errors import CorruptCertificate, HashMismatch
from kslat.linalg import Operator
from kslat.measures import check_func_on_context, valuation_from_assignment
from kslat.oracles import cnf_clause_count, count_colourings, naive_colourable
from kslat.projlattice import RayConfiguration, enumerate_contexts
from kslat.search import (
    INDETERMINATE,
    SAT,
    UNSAT,
    build_constraint_model,
    enumerate_two_valued_measures,
    export_cnf,
    iter_tree_leaves,
    load_certificate,
    search_two_valued_measure,
    verify_certificate,
)

R3 = Operator([[Fraction(a, 3) for a in row] for row in [[1, 2, 2], [2, 1, -2], [2, -2, 1]]])


def test_single_basis_sat_with_three_witnesses(basis3):
    out = search_two_valued_measure(basis3)
    assert out.verdict == SAT and sum(out.witness) == 1
    assert enumerate_two_valued_measures(basis3) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


def test_dim2_pairs_sat(dim2):
    out = search_two_valued_measure(dim2)
    assert out.verdict == SAT
    assert len(enumerate_two_valued_measures(dim2)) == count_colourings(dim2) == 16


def test_peres_unsat_matches_naive_oracle(peres):
    assert not naive_colourable(peres)
    out = search_two_valued_measure(peres)
    assert out.verdict == UNSAT and out.witness is None
    assert verify_certificate(out, peres).ok


def test_sat_certificate_verifies(basis3):
    assert verify_certificate(search_two_valued_measure(basis3), basis3).ok


def test_flipped_witness_names_context(basis3):
    cert = search_two_valued_measure(basis3).to_certificate()
    k = cert["witness"].index(1)
    cert["witness"][k] = 0
    check = verify_certificate(cert, basis3)
    assert not check.ok and check.context == ("e1", "e2", "e3")


def test_tampered_unsat_tree_rejected(peres):
    cert = search_two_valued_measure(peres).to_certificate()
    bad = copy.deepcopy(cert)
    node = bad["tree"]
    while "decide" in node["one"]:
        node = node["one"]
    node["one"] = {"sat": True}
    with pytest.raises(CorruptCertificate):
        verify_certificate(bad, peres)
    bad = copy.deepcopy(cert)
    del bad["tree"]["zero"]
    assert not verify_certificate(bad, peres).ok
    bad = copy.deepcopy(cert)
    bad["tree"] = {"conflict": 0}
    assert not verify_certificate(bad, peres).ok


def test_hash_mismatch_and_corruption(peres, cabello):
    cert = search_two_valued_measure(peres).to_certificate()
    with pytest.raises(HashMismatch):
        verify_certificate(cert, cabello)
    with pytest.raises(CorruptCertificate):
        verify_certificate({**cert, "tree": None}, peres)
    with pytest.raises(CorruptCertificate):
        verify_certificate({**cert, "version": 99}, peres)
    with pytest.raises(CorruptCertificate):
        load_certificate("{not json")


def test_certificate_roundtrips_through_json(cabello):
    cert = search_two_valued_measure(cabello).to_certificate()
    assert verify_certificate(json.loads(json.dumps(cert)), cabello).ok
    assert sum(1 for _ in iter_tree_leaves(cert["tree"])) >= 2


def test_budget_exhaustion(peres):
    out = search_two_valued_measure(peres, budget=2)
    assert out.verdict == INDETERMINATE
    assert not verify_certificate(out, peres).ok


def test_parallel_split_matches_sequential(peres):
    seq = search_two_valued_measure(peres, workers=1)
    par = search_two_valued_measure(peres, workers=2)
    assert par.verdict == UNSAT
    assert verify_certificate(par, peres).ok
    assert par.tree == seq.tree


# CNF ---------------------------------------------------------------------------


def test_cnf_single_basis(basis3):
    cnf = export_cnf(build_constraint_model(basis3))
    assert cnf.text.splitlines()[0] == "p cnf 3 4"
    assert (1, 2, 3) in cnf.clauses
    assert sorted(c for c in cnf.clauses if len(c) == 2) == [(-2, -3), (-1, -3), (-1, -2)]
    assert json.loads(cnf.sidecar())["variables"]["1"] == {"ray": 0, "label": "e1"}


def test_cnf_empty_configuration():
    empty = RayConfiguration.from_vectors(3, [])
    assert export_cnf(build_constraint_model(empty)).text == "p cnf 0 0\n"


@pytest.mark.parametrize("name", ["peres33", "cabello18"])
def test_cnf_counts_match_census(name):
    cfg = load(name)
    cnf = export_cnf(build_constraint_model(cfg))
    assert cnf.num_vars == len(cfg)
    assert len(cnf.clauses) == cnf_clause_count(cfg) == manifest()["datasets"][name]["cnf_clauses"]


@pytest.mark.parametrize("name, expected", [("basis3", True), ("dim2_pairs", True), ("peres33", False), ("cabello18", False)])
def test_external_solver_agrees(name, expected):
    solvers = pytest.importorskip("pysat.solvers")
    cnf = export_cnf(build_constraint_model(load(name)))
    with solvers.Solver(name="glucose3", bootstrap_with=[list(c) for c in cnf.clauses]) as s:
        assert s.solve() is expected


# structural invariants ---------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(st.permutations(range(33)))
def test_verdict_invariant_under_permutation(order):
    peres = load("peres33")
    out = search_two_valued_measure(peres.permuted(order))
    assert out.verdict == UNSAT


@pytest.mark.parametrize("name", ["basis3", "dim2_pairs", "peres33"])
def test_verdict_invariant_under_rotation(name):
    cfg = load(name)
    if cfg.dim != 3:
        rot = Operator([[Fraction(3, 5), Fraction(-4, 5)], [Fraction(4, 5), Fraction(3, 5)]])
    else:
        rot = R3
    assert search_two_valued_measure(cfg.transformed(rot)).verdict == search_two_valued_measure(cfg).verdict


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_single_context_has_d_witnesses(d):
    cfg = RayConfiguration.from_vectors(d, [[int(i == j) for j in range(d)] for i in range(d)])
    assert len(enumerate_two_valued_measures(cfg)) == d


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6).flatmap(lambda d: st.tuples(st.just(d), st.sets(st.integers(0, d - 1), min_size=1))))
def test_abelian_families_always_sat(args):
    d, keep = args
    cfg = RayConfiguration.from_vectors(d, [[int(i == j) for j in range(d)] for i in sorted(keep)])
    assert search_two_valued_measure(cfg).verdict == SAT


@pytest.mark.parametrize("n", [3, 4, 6])
def test_uncolourable_sets_embed_in_blocks(n):
    cfg = ks_configuration(n)
    out = search_two_valued_measure(cfg)
    assert cfg.dim == n and out.verdict == UNSAT
    assert verify_certificate(out, cfg).ok


def test_sat_witness_lifts_to_valuation(dim2):
    out = search_two_valued_measure(dim2)
    ctxs = enumerate_contexts(dim2)
    v = valuation_from_assignment(dim2, out.witness, ctxs)
    assert not v.spectrum_violations() and not v.func_violations()
    assert all(check_func_on_context(v, c).passed for c in ctxs)


def test_node_count_stable(peres):
    counts = {search_two_valued_measure(peres).stats.nodes for _ in range(3)}
    assert len(counts) == 1
