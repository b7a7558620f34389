import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kslat.datasets import load, manifest
from kslat.errors import DimensionMismatch, NotAProjection, ParseError, ZeroVector
from kslat.exact import Surd
from kslat.linalg import Operator, commutes
from kslat.oracles import brute_force_contexts
from kslat.projlattice import (
    REST,
    Projection,
    RayConfiguration,
    enumerate_contexts,
    lattice_join,
    lattice_meet,
    load_ray_configuration,
    ortho_complement,
    projection_family,
)

R3 = Operator([[Fraction(a, 3) for a in row] for row in [[1, 2, 2], [2, 1, -2], [2, -2, 1]]])


def diag(*v):
    return Projection.from_operator(Operator.diagonal(list(v)))


def line(*v):
    return Projection.onto([list(v)], len(v), "exact")


# documents ---------------------------------------------------------------------


def test_basis_document(basis3):
    ctxs = enumerate_contexts(basis3)
    assert len(basis3) == 3
    assert [c.complete for c in ctxs] == [True]


def test_peres_document_matches_oracle(peres):
    complete, incomplete = brute_force_contexts(peres)
    ctxs = enumerate_contexts(peres)
    assert len(peres) == 33
    assert sorted(c.ray_ids for c in ctxs if c.complete) == complete
    assert sorted(c.ray_ids for c in ctxs if not c.complete) == incomplete
    assert len(complete) == manifest()["datasets"]["peres33"]["complete_contexts"]


def test_parse_header_and_comments():
    text = "# a comment\ndimension 2\nmode exact\ncount 2\nx: 1 0\ny: 0 1  # trailing\n"
    cfg = load_ray_configuration(text)
    assert cfg.labels == ("x", "y") and cfg.orthogonal(0, 1)


def test_surd_pair_entries():
    cfg = load_ray_configuration("dimension 2\nmode exact\ncount 2\n1 1+√2\n1+√2 -1\n")
    assert cfg.orthogonal(0, 1)


def test_float_document():
    cfg = load_ray_configuration("dimension 2\nmode float\ncount 2\n0.6 0.8\n-0.8 0.6\n")
    assert cfg.mode == "approximate" and cfg.orthogonal(0, 1)


def test_duplicate_ray_rejected_or_deduped():
    text = "dimension 2\nmode exact\ncount 2\n1 2\n2 4\n"
    with pytest.raises(ParseError):
        load_ray_configuration(text)
    assert len(load_ray_configuration(text, dedupe=True)) == 1


@pytest.mark.parametrize("text, err", [
    ("dimension 2\nmode exact\ncount 1\n0 0\n", ZeroVector),
    ("dimension 3\nmode exact\ncount 1\n1 0\n", DimensionMismatch),
    ("dimension 2\nmode exact\ncount 3\n1 0\n0 1\n", ParseError),
    ("dimension 2\nmode exact\ncount 1\n1 x\n", ParseError),
    ("mode exact\ncount 1\n1 0\n", ParseError),
])
def test_document_errors(text, err):
    with pytest.raises(err):
        load_ray_configuration(text)


def test_document_roundtrip(peres):
    again = load_ray_configuration(peres.to_document("peres"))
    assert again.hash == peres.hash


# contexts ----------------------------------------------------------------------


def test_basis_plus_diagonal_contexts():
    cfg = RayConfiguration.from_vectors(3, [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0]], ["e1", "e2", "e3", "d"])
    ctxs = {c.generators: c.complete for c in enumerate_contexts(cfg)}
    assert ctxs == {("e1", "e2", "e3"): True, ("e3", "d"): False}


def test_complete_contexts_resolve_identity(peres, cabello):
    for cfg in (peres, cabello):
        for c in enumerate_contexts(cfg):
            total = c.all_atoms()[0]
            for a in c.all_atoms()[1:]:
                total = total + a
            assert total.operator.equals(Operator.identity(cfg.dim))
            assert (REST in c.spectrum()) == (not c.complete)


def test_closure_contains_shared_subcontexts(basis3):
    keys = [c.ray_ids for c in enumerate_contexts(basis3, closure=True)]
    assert keys == [(0,), (1,), (2,), (0, 1, 2)]


@settings(max_examples=10, deadline=None)
@given(st.permutations(range(18)))
def test_context_order_stable_under_reordering(order):
    cab = load("cabello18")
    perm = cab.permuted(order)
    by_label = lambda cfg: sorted(tuple(sorted(c.generators)) for c in enumerate_contexts(cfg))
    assert by_label(perm) == by_label(cab)
    ctxs = enumerate_contexts(perm)
    assert [c.ray_ids for c in ctxs] == sorted(c.ray_ids for c in ctxs)


def test_rotation_preserves_orthogonality(peres):
    rotated = peres.transformed(R3)
    assert rotated.edges() == peres.edges()


# lattice operations ------------------------------------------------------------


def test_meet_examples():
    e = diag(1, 1, 0)
    assert lattice_meet(e, Projection.identity(3)).equals(e)
    assert lattice_meet(line(1, 0), line(1, 1)).equals(Projection.zero(2))
    m = lattice_meet(e, diag(0, 1, 1))
    # oracle: intersection of coordinate spans is span{e2}
    assert m.equals(diag(0, 1, 0)) and m.rank == 1


def test_join_examples():
    e = diag(1, 0, 0)
    assert lattice_join(e, Projection.zero(3)).equals(e)
    assert lattice_join(e, diag(0, 1, 0)).equals(diag(1, 1, 0))
    j = lattice_join(line(1, 0), line(1, 1))
    assert np.linalg.matrix_rank(np.array([[1, 0], [1, 1]])) == 2
    assert j.equals(Projection.identity(2))


def test_complement_examples():
    assert ortho_complement(Projection.zero(3)).equals(Projection.identity(3))
    assert ortho_complement(Projection.identity(3)).equals(Projection.zero(3))
    assert ortho_complement(diag(1, 0, 0)).equals(diag(0, 1, 1))


def test_float_join_and_meet(rng):
    from kslat.algebra import random_projection

    e, f = random_projection(4, rng, 2), random_projection(4, rng, 2)
    assert lattice_join(e, f).rank == 4
    assert lattice_meet(e, f).rank == 0


def test_projection_validation():
    with pytest.raises(NotAProjection):
        Projection.from_operator(Operator.diagonal([1, 2]))
    with pytest.raises(DimensionMismatch):
        lattice_join(diag(1, 0), diag(1, 0, 0))


def test_rank_equals_trace():
    p = line(1, Surd.sqrt(2), 1)
    assert p.rank == 1 and p.operator.trace() == 1


@pytest.mark.parametrize("name", ["basis3", "dim2_pairs", "peres33", "cabello18"])
def test_orthomodularity_on_comparable_pairs(name):
    fam = projection_family(load(name))
    for e, f in itertools.product(fam.projections, repeat=2):
        if e.leq(f):
            assert f.equals(lattice_join(e, lattice_meet(f, ortho_complement(e))))


@pytest.mark.parametrize("name", ["basis3", "dim2_pairs", "peres33"])
def test_de_morgan_within_contexts(name):
    cfg = load(name)
    for ctx in enumerate_contexts(cfg):
        atoms = ctx.all_atoms()
        members = []
        for r in range(1, len(atoms) + 1):
            for sub in itertools.combinations(atoms, r):
                acc = sub[0]
                for a in sub[1:]:
                    acc = acc + a
                members.append(acc)
        for e, f in itertools.combinations(members, 2):
            assert commutes(e.operator, f.operator)
            lhs = ortho_complement(lattice_join(e, f))
            assert lhs.equals(lattice_meet(ortho_complement(e), ortho_complement(f)))


def test_family_additive_triples_oracle(basis3):
    fam = projection_family(basis3)
    # oracle: brute-force over all member pairs with exact products and sums
    expect = set()
    for i, j in itertools.combinations(range(len(fam)), 2):
        p, q = fam.projections[i].operator, fam.projections[j].operator
        if (p @ q).is_zero():
            for k, r in enumerate(fam.projections):
                if (p + q).equals(r.operator):
                    expect.add((i, j, k))
    assert set(fam.additive_triples) == expect
