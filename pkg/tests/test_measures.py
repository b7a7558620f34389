from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kslat.algebra import DensityOperator
from kslat.errors import IncompleteAssignment, MissingValue, QuasiStateFailure
from kslat.exact import I_UNIT
from kslat.linalg import BorelFunction, Operator, borel_apply
from kslat.measures import (
    TwoValuedMeasure,
    ValuationCandidate,
    check_func_on_context,
    check_probability_measure,
    context_generators,
    extend_valuation,
    measure_from_ray_assignment,
    quasi_state_check,
    restrict_to_projections,
    trace_functional,
    valuation_from_assignment,
)
from kslat.projlattice import enumerate_contexts, projection_family
from kslat.search import enumerate_two_valued_measures


def test_normalized_trace_passes(peres):
    fam = projection_family(peres)
    report = check_probability_measure([Fraction(p.rank, 3) for p in fam.projections], fam)
    assert report.passed and report.max_residual == 0.0 and report.checked_pairs == len(fam.additive_triples)


def test_constant_one_fails_additivity(basis3):
    fam = projection_family(basis3)
    report = check_probability_measure([1] * len(fam), fam)
    assert not report.passed
    assert {v.kind for v in report.violations} >= {"M2"}


def test_basis_point_measure_passes(basis3):
    fam = projection_family(basis3)
    mu = measure_from_ray_assignment(basis3, fam, (1, 0, 0))
    assert isinstance(mu, TwoValuedMeasure) and mu.check().passed


def test_out_of_range_value_flagged(basis3):
    fam = projection_family(basis3)
    vals = [Fraction(p.rank, 3) for p in fam.projections]
    vals[1] = Fraction(-1, 3)
    assert "M1" in {v.kind for v in check_probability_measure(vals, fam).violations}


def test_missing_value(basis3):
    fam = projection_family(basis3)
    with pytest.raises(MissingValue):
        check_probability_measure({fam.labels[0]: 1}, fam)


# extension v -> v' -----------------------------------------------------------


def _swap_valuation():
    a1 = Operator([[0, Fraction(1, 2)], [Fraction(1, 2), 0]])
    a2 = Operator([[0, -Fraction(1, 2) * I_UNIT], [Fraction(1, 2) * I_UNIT, 0]])
    return ValuationCandidate({"A1": a1, "A2": a2}, {"A1": Fraction(1, 2), "A2": Fraction(-1, 2)}), a1, a2


def test_extension_on_self_adjoint_and_scaled():
    v, a1, _ = _swap_valuation()
    ext = extend_valuation(v)
    assert ext(a1) == Fraction(1, 2)
    assert ext(a1.scale(I_UNIT)) == I_UNIT * Fraction(1, 2)


def test_extension_of_nilpotent():
    v, a1, a2 = _swap_valuation()
    b = Operator([[0, 1], [0, 0]])
    p1, p2 = extend_valuation(v).parts(b)
    assert p1.equals(a1) and p2.equals(a2)
    # independent reassembly in floating point
    assert np.allclose(a1.to_numpy() + 1j * a2.to_numpy(), [[0, 1], [0, 0]])
    assert extend_valuation(v)(b) == Fraction(1, 2) - Fraction(1, 2) * I_UNIT


def test_extension_of_zero_and_identity(basis3):
    ext = extend_valuation(valuation_from_assignment(basis3, (0, 1, 0)))
    assert ext(Operator.zero(3)) == 0
    assert ext(Operator.identity(3)) == 1


def test_unregistered_operator(basis3):
    ext = extend_valuation(valuation_from_assignment(basis3, (0, 1, 0)))
    with pytest.raises(IncompleteAssignment):
        ext(Operator([[0, 1, 0], [1, 0, 0], [0, 0, 0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2), st.lists(st.integers(-3, 3), min_size=4, max_size=4),
       st.lists(st.integers(-3, 3), min_size=4, max_size=4))
def test_extension_commutes_with_complex_functions(hot, re, im):
    from kslat.datasets import load

    cfg = load("basis3")
    v = valuation_from_assignment(cfg, tuple(int(k == hot) for k in range(3)))
    a = v.operators["A0"]
    g = BorelFunction.from_table({k: re[k] + im[k] * I_UNIT for k in range(4)})
    ga = borel_apply(g.real_part(), a) + borel_apply(g.imag_part(), a).scale(I_UNIT)
    ext = extend_valuation(v)
    assert ext(ga) == g(ext(a))


# context characters ------------------------------------------------------------


def test_point_evaluation_is_character(basis3):
    ctx = enumerate_contexts(basis3)[0]
    v = valuation_from_assignment(basis3, (0, 0, 1))
    chk = check_func_on_context(v, ctx)
    assert chk.passed and chk.max_residual == 0.0
    assert extend_valuation(v)(ctx.observable()) == 3


def test_two_true_atoms_fail(basis3):
    ctx = enumerate_contexts(basis3)[0]
    v = ValuationCandidate({"E1": ctx.atoms[0].operator, "E2": ctx.atoms[1].operator,
                            "E3": ctx.atoms[2].operator}, {"E1": 1, "E2": 1, "E3": 0})
    chk = check_func_on_context(v, ctx, fns=[])
    assert not chk.passed and chk.sum_rule == 1.0 and not chk.exactly_one


@pytest.mark.parametrize("assignment", [(1, 0, 0), (0, 1, 0), (0, 0, 1)])
def test_func_forces_exactly_one_atom(basis3, assignment):
    v = valuation_from_assignment(basis3, assignment)
    assert not v.spectrum_violations() and not v.func_violations()
    chk = check_func_on_context(v, enumerate_contexts(basis3)[0])
    assert chk.exactly_one and chk.two_valued


def test_bad_assignment_breaks_spectrum_rule(basis3):
    v = valuation_from_assignment(basis3, (1, 1, 0))
    assert v.spectrum_violations() == ["A0"]


def test_sat_witnesses_pass_every_context(dim2):
    ctxs = enumerate_contexts(dim2)
    for w in enumerate_two_valued_measures(dim2):
        v = valuation_from_assignment(dim2, w, ctxs)
        assert all(check_func_on_context(v, c).passed for c in ctxs)


# quasi-states ------------------------------------------------------------------


def test_density_functional_is_quasi_state(peres, rng):
    rho = DensityOperator.random(3, rng)
    assert quasi_state_check(trace_functional(rho.operator), context_generators(peres)).passed


def test_doubled_functional_fails_normalisation(basis3):
    rho = Operator.diagonal([Fraction(1, 3)] * 3)
    rep = quasi_state_check(lambda x: 2 * trace_functional(rho)(x), context_generators(basis3))
    assert not rep.passed and rep.normalization == 1.0


def test_sat_valuation_is_quasi_state(dim2):
    w = enumerate_two_valued_measures(dim2)[5]
    gens = context_generators(dim2)
    rep = quasi_state_check(extend_valuation(valuation_from_assignment(dim2, w)), gens)
    assert rep.passed and rep.decomposition == 0.0


def test_restrict_maximally_mixed(peres):
    fam = projection_family(peres)
    mu = restrict_to_projections(trace_functional(Operator.diagonal([Fraction(1, 3)] * 3)), fam,
                                 context_generators(peres))
    assert mu.values == [Fraction(p.rank, 3) for p in fam.projections]


def test_restrict_vector_state(cabello, rng):
    fam = projection_family(cabello)
    x = rng.normal(size=4) + 1j * rng.normal(size=4)
    x /= np.linalg.norm(x)
    mu = restrict_to_projections(trace_functional(Operator(np.outer(x, x.conj()))), fam, context_generators(cabello))
    for val, p in zip(mu.values, fam.projections):
        assert abs(val - np.linalg.norm(p.operator.to_numpy() @ x) ** 2) < 1e-12
    assert mu.check().passed


def test_restrict_two_valued(basis3):
    fam = projection_family(basis3)
    ext = extend_valuation(valuation_from_assignment(basis3, (0, 1, 0)))
    mu = restrict_to_projections(ext, fam, context_generators(basis3))
    assert isinstance(mu, TwoValuedMeasure) and mu.check().passed


def test_restrict_rejects_non_quasi_state(basis3):
    fam = projection_family(basis3)
    with pytest.raises(QuasiStateFailure):
        restrict_to_projections(lambda x: 2 * x.trace(), fam, context_generators(basis3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quasi_state_restrictions_are_measures(seed):
    from kslat.datasets import load

    cfg = load("cabello18")
    rho = DensityOperator.random(4, np.random.default_rng(seed))
    mu = restrict_to_projections(trace_functional(rho.operator), projection_family(cfg), context_generators(cfg))
    assert mu.check().passed
