"""Finitely additive measures, valuation functions and quasi-state checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import IncompleteAssignment, MissingValue, QuasiStateFailure
from .exact import I_UNIT, Surd, as_surd, is_exact_scalar
from .linalg import (
    BorelFunction,
    Operator,
    SpectralDecomposition,
    as_function_of,
    borel_apply,
    spectral_decompose,
)
from .projlattice import Context, ProjectionFamily, RayConfiguration, enumerate_contexts

Value = Union[int, Fraction, Surd, float, complex]

MEASURE_TOL = 1e-10
CHARACTER_TOL = 1e-10

DEFAULT_FUNCTIONS: tuple[BorelFunction, ...] = (
    BorelFunction.identity(),
    BorelFunction.square(),
    BorelFunction.scale(2),
    BorelFunction.affine(-1, 3),
    BorelFunction.constant(1),
)


def residual(a: Value, b: Value) -> float:
    """|a - b|, exactly zero when both are exact and equal."""
    if is_exact_scalar(a) and is_exact_scalar(b):
        d = as_surd(a) - as_surd(b)
        return 0.0 if d.is_zero() else abs(complex(d))
    return abs(complex(a) - complex(b))


def _real(x: Value) -> Value:
    if isinstance(x, Surd):
        return x.real.to_fraction() if x.real.is_rational() else x.real
    if is_exact_scalar(x):
        return x
    return complex(x).real


# probability measures --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # "M1", "M2", "normalization", "two-valued"
    labels: tuple[str, ...]
    residual: float


@dataclass
class MeasureReport:
    violations: list[Violation]
    max_residual: float
    checked_pairs: int

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.passed


def _aligned(values: Mapping[str, Value] | Sequence[Value], family: ProjectionFamily) -> list[Value]:
    if isinstance(values, Mapping):
        missing = [l for l in family.labels if l not in values]
        if missing:
            raise MissingValue(f"no value for {', '.join(missing[:5])}")
        return [values[l] for l in family.labels]
    vals = list(values)
    if len(vals) != len(family):
        raise MissingValue(f"{len(vals)} values for a family of {len(family)}")
    return vals


def check_probability_measure(
    values: Mapping[str, Value] | Sequence[Value], family: ProjectionFamily, tol: float = MEASURE_TOL
) -> MeasureReport:
    """Check (M1) range/normalisation and (M2) additivity on orthogonal pairs."""
    vals = _aligned(values, family)
    violations: list[Violation] = []
    worst = 0.0
    for label, v in zip(family.labels, vals):
        if is_exact_scalar(v):
            q = as_surd(v)
            bad = not q.is_real() or complex(q).real < 0 or complex(q).real > 1
            r = 0.0 if not bad else max(-complex(q).real, complex(q).real - 1, abs(complex(q).imag))
        else:
            z = complex(v)
            r = max(0.0, -z.real, z.real - 1, abs(z.imag))
            bad = r > tol
        worst = max(worst, r)
        if bad:
            violations.append(Violation("M1", (label,), r))
    if family.identity_index is not None:
        r = residual(vals[family.identity_index], 1)
        worst = max(worst, r)
        if r > (0 if is_exact_scalar(vals[family.identity_index]) else tol):
            violations.append(Violation("normalization", ("I",), r))
    triples = family.additive_triples
    for i, j, k in triples:
        r = residual(vals[k], _add(vals[i], vals[j]))
        worst = max(worst, r)
        exact = all(is_exact_scalar(vals[x]) for x in (i, j, k))
        if r > (0 if exact else tol):
            violations.append(Violation("M2", (family.labels[i], family.labels[j], family.labels[k]), r))
    return MeasureReport(violations, worst, len(triples))


def _add(a: Value, b: Value) -> Value:
    if is_exact_scalar(a) and is_exact_scalar(b):
        return as_surd(a) + as_surd(b)
    return complex(a) + complex(b)


@dataclass
class ProbabilityMeasure:
    family: ProjectionFamily
    values: list[Value]

    def __post_init__(self):
        self.values = _aligned(self.values, self.family)

    def __getitem__(self, label: str) -> Value:
        return self.values[self.family.index(label)]

    def as_dict(self) -> dict[str, Value]:
        return dict(zip(self.family.labels, self.values))

    def check(self, tol: float = MEASURE_TOL) -> MeasureReport:
        return check_probability_measure(self.values, self.family, tol)

    def is_two_valued(self) -> bool:
        return all(residual(v, 0) == 0 or residual(v, 1) == 0 for v in self.values)


class TwoValuedMeasure(ProbabilityMeasure):
    def __post_init__(self):
        super().__post_init__()
        if not self.is_two_valued():
            raise ValueError("two-valued measures take only the values 0 and 1")


def measure_from_ray_assignment(config: RayConfiguration, family: ProjectionFamily,
                                assignment: Sequence[int]) -> TwoValuedMeasure:
    """Extend a 0/1 ray assignment additively to every family member.

    Each family member is a sum of rays from one context; its value is the
    sum of its rays' values.  0 and I are handled by value (0 and 1).
    """
    by_label = {r.label: i for i, r in enumerate(config.rays)}
    values = []
    for label in family.labels:
        if label == "0":
            values.append(0)
        elif label == "I":
            values.append(1)
        else:
            values.append(sum(assignment[by_label[part]] for part in label.split("+")))
    return TwoValuedMeasure(family, values)


# valuation functions ---------------------------------------------------------------


@dataclass(frozen=True)
class Resolution:
    source: str
    coefficients: tuple
    value: Value


class ValuationCandidate:
    """A valuation on a finite registered family of self-adjoint operators.

    Values extend to every Borel image f(A) of a registered A by FUNC,
    v(f(A)) := f(v(A)).  An operator that is a function of several
    registered operators receives several candidate values; FUNC holds on the
    registered family exactly when they all agree.
    """

    def __init__(self, operators: Mapping[str, Operator] | None = None,
                 values: Mapping[str, Value] | None = None,
                 functions: Sequence[BorelFunction] = DEFAULT_FUNCTIONS):
        self.operators: dict[str, Operator] = {}
        self.values: dict[str, Value] = {}
        self.functions = tuple(functions)
        self._decs: dict[str, SpectralDecomposition] = {}
        for name, op in (operators or {}).items():
            self.register(name, op, (values or {})[name])

    def register(self, name: str, op: Operator, value: Value) -> None:
        self.operators[name] = op
        self.values[name] = value
        self._decs[name] = spectral_decompose(op)

    def decomposition(self, name: str) -> SpectralDecomposition:
        return self._decs[name]

    def spectrum_violations(self) -> list[str]:
        """Registered operators whose value is not an eigenvalue."""
        return [n for n, v in self.values.items() if self._decs[n].index_of(v) is None]

    def resolve(self, b: Operator) -> list[Resolution]:
        out = []
        for name, dec in self._decs.items():
            if not _maybe_function_of(b, dec):
                continue
            coeffs = as_function_of(b, dec)
            if coeffs is None:
                continue
            k = dec.index_of(self.values[name])
            if k is None:
                continue
            out.append(Resolution(name, tuple(coeffs), _simplify(coeffs[k])))
        return out

    def value_of(self, b: Operator) -> Value:
        res = self.resolve(b)
        if not res:
            raise IncompleteAssignment("operator is not a Borel function of any registered operator")
        return res[0].value

    def closure(self) -> list[tuple[str, BorelFunction, Operator, Value]]:
        """(source, f, f(A), f(v(A))) for every library function and every spectral indicator."""
        out = []
        for name, dec in self._decs.items():
            fns = list(self.functions) + [BorelFunction.indicator([lam]) for lam in dec.eigenvalues]
            for f in fns:
                out.append((name, f, borel_apply(f, dec), f(self.values[name])))
        return out

    def func_violations(self, tol: float = CHARACTER_TOL) -> list[tuple[str, str, str, float]]:
        """(source, function tag, other source, residual) for every FUNC clash."""
        bad = []
        for name, f, image, value in self.closure():
            for res in self.resolve(image):
                r = residual(res.value, value)
                exact = is_exact_scalar(res.value) and is_exact_scalar(value)
                if r > (0 if exact else tol):
                    bad.append((name, f.tag, res.source, r))
        return bad


def _simplify(x: Value) -> Value:
    if isinstance(x, Surd) and x.is_rational():
        return x.to_fraction()
    return x


def _maybe_function_of(b: Operator, dec: SpectralDecomposition) -> bool:
    """Cheap float pre-screen: B commutes with every eigenprojection."""
    bb = b.to_numpy()
    for p in dec.projections:
        pp = p.to_numpy()
        if np.max(np.abs(bb @ pp - pp @ bb)) > 1e-7:
            return False
    return True


def valuation_from_assignment(config: RayConfiguration, assignment: Sequence[int],
                              contexts: Sequence[Context] | None = None,
                              functions: Sequence[BorelFunction] = DEFAULT_FUNCTIONS) -> ValuationCandidate:
    """Lift a 0/1 ray assignment to a valuation on the contexts' observables.

    Context k contributes A_k = Σ (j+1)·atom_j with value j+1 for its true
    atom, or 0 (the remainder's eigenvalue) when no atom is true.
    """
    contexts = enumerate_contexts(config) if contexts is None else contexts
    v = ValuationCandidate(functions=functions)
    for k, ctx in enumerate(contexts):
        ones = [j for j, i in enumerate(ctx.ray_ids) if assignment[i]]
        value = ones[0] + 1 if len(ones) == 1 else (0 if not ones else -1)
        v.register(f"A{k}", ctx.observable(), value)
    return v


class ExtendedValuation:
    """v'(B) = v(A1) + i·v(A2) with A1 = (B+B*)/2, A2 = (B-B*)/(2i)."""

    def __init__(self, v: ValuationCandidate):
        self.base = v

    @staticmethod
    def parts(b: Operator) -> tuple[Operator, Operator]:
        half = Fraction(1, 2) if b.exact else 0.5
        a1 = (b + b.H).scale(half)
        a2 = (b - b.H).scale(-I_UNIT * half if b.exact else -0.5j)
        return a1, a2

    def __call__(self, b: Operator) -> Value:
        a1, a2 = self.parts(b)
        x, y = self.base.value_of(a1), self.base.value_of(a2)
        if is_exact_scalar(x) and is_exact_scalar(y):
            return _simplify(as_surd(x) + I_UNIT * as_surd(y))
        return complex(x) + 1j * complex(y)


def extend_valuation(v: ValuationCandidate) -> ExtendedValuation:
    return ExtendedValuation(v)


@dataclass
class ContextCheck:
    context: Context
    atom_values: dict
    normalization: float
    sum_rule: float
    product_rule: float
    two_valued: bool
    exactly_one: bool
    skipped: list[str] = field(default_factory=list)
    tol: float = CHARACTER_TOL

    @property
    def max_residual(self) -> float:
        return max(self.normalization, self.sum_rule, self.product_rule)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol and self.two_valued and self.exactly_one

    def __bool__(self) -> bool:
        return self.passed


def check_func_on_context(v: ValuationCandidate | ExtendedValuation, ctx: Context,
                          fns: Sequence[BorelFunction] = DEFAULT_FUNCTIONS,
                          tol: float = CHARACTER_TOL) -> ContextCheck:
    """Verify that v' restricted to the context's algebra is a character.

    Sub-checks: normalisation v'(I) = 1, the sum rule (additivity over the
    atoms and over Borel images of the context observable) and the product
    rule (multiplicativity on atom products and on products of images).
    """
    ext = v if isinstance(v, ExtendedValuation) else ExtendedValuation(v)
    atoms = ctx.all_atoms()
    spec = ctx.spectrum()
    try:
        x = [ext(p.operator) for p in atoms]
    except IncompleteAssignment as exc:
        raise IncompleteAssignment(f"context {list(ctx.ray_ids)}: atom value unavailable ({exc})") from None
    eye = Operator.identity(ctx.atoms[0].dim, ctx.atoms[0].operator.mode)
    v_eye = ext(eye)
    normalization = residual(v_eye, 1)
    sums = [residual(v_eye, _sum(x))]
    prods = []
    for (pj, xj), (pk, xk) in itertools.product(zip(atoms, x), repeat=2):
        prods.append(residual(ext(pj.operator @ pk.operator), _mul(xj, xk)))
    skipped = []
    eigen = list(range(1, len(ctx.atoms) + 1)) + ([0] if ctx.remainder is not None else [])
    images = []
    for f in fns:
        img = sum((p.operator.scale(f(lam)) for p, lam in zip(atoms[1:], eigen[1:])),
                  atoms[0].operator.scale(f(eigen[0])))
        try:
            val = ext(img)
        except IncompleteAssignment:
            skipped.append(f.tag)
            continue
        sums.append(residual(val, _sum(_mul(f(lam), xk) for lam, xk in zip(eigen, x))))
        images.append((img, val))
    for (a, va), (b, vb) in itertools.combinations(images, 2):
        try:
            prods.append(residual(ext(a @ b), _mul(va, vb)))
        except IncompleteAssignment:
            skipped.append("product")
    two_valued = all(residual(xk, 0) <= tol or residual(xk, 1) <= tol for xk in x)
    ones = sum(1 for xk in x if residual(xk, 1) <= tol)
    return ContextCheck(ctx, dict(zip(spec, x)), normalization, max(sums), max(prods, default=0.0),
                        two_valued, ones == 1, skipped, tol)


def _sum(xs: Iterable[Value]) -> Value:
    xs = list(xs)
    if all(is_exact_scalar(a) for a in xs):
        return sum((as_surd(a) for a in xs), as_surd(0))
    return sum(complex(a) for a in xs)


def _mul(a: Value, b: Value) -> Value:
    if is_exact_scalar(a) and is_exact_scalar(b):
        return as_surd(a) * as_surd(b)
    return complex(a) * complex(b)


# quasi-states ----------------------------------------------------------------------


@dataclass
class QuasiStateReport:
    linearity: dict[str, float]
    positivity: dict[str, bool]
    decomposition: float
    normalization: float
    tol: float = MEASURE_TOL

    @property
    def passed(self) -> bool:
        return (all(r <= self.tol for r in self.linearity.values())
                and all(self.positivity.values())
                and self.decomposition <= self.tol
                and self.normalization <= self.tol)

    def __bool__(self) -> bool:
        return self.passed


Functional = Callable[[Operator], Value]


def quasi_state_check(phi: Functional, generators: Mapping[str, Operator],
                      non_selfadjoint: Iterable[Operator] | None = None,
                      fns: Sequence[BorelFunction] = DEFAULT_FUNCTIONS,
                      tol: float = MEASURE_TOL) -> QuasiStateReport:
    """Check linearity and positivity of ``phi`` on each singly generated
    abelian subalgebra, additivity over self-adjoint decompositions, and
    normalisation.  Reports exactly what was evaluated.

    ``non_selfadjoint`` defaults to B_k + i·B_{k+1} for consecutive generators.
    """
    linearity: dict[str, float] = {}
    positivity: dict[str, bool] = {}
    gens = list(generators.items())
    if not gens:
        raise MissingValue("quasi_state_check needs at least one generator")
    try:
        for name, b in gens:
            dec = spectral_decompose(b)
            atom_vals = [phi(p) for p in dec.projections]
            positivity[name] = all(
                residual(_real(a), a) <= tol and complex(a).real >= -tol for a in atom_vals
            )
            worst = 0.0
            images = []
            for f in fns:
                img = borel_apply(f, dec)
                val = phi(img)
                worst = max(worst, residual(val, _sum(_mul(f(lam), a) for lam, a in zip(dec.eigenvalues, atom_vals))))
                images.append((img, val))
            for (x, vx), (y, vy) in itertools.combinations(images, 2):
                c = 2 if x.exact else 2.0
                worst = max(worst, residual(phi(x.scale(c) + y), _add(_mul(c, vx), vy)))
            linearity[name] = worst
        if non_selfadjoint is None:
            ops = [a[1] for a in gens]
            non_selfadjoint = [x + y.scale(I_UNIT if y.exact else 1j) for x, y in zip(ops, ops[1:])]
        decomposition = 0.0
        for c in non_selfadjoint:
            a1, a2 = ExtendedValuation.parts(c)
            decomposition = max(decomposition, residual(phi(c), _add(phi(a1), _mul(I_UNIT if a2.exact else 1j, phi(a2)))))
        dim = gens[0][1].dim
        normalization = residual(phi(Operator.identity(dim, gens[0][1].mode)), 1)
    except IncompleteAssignment as exc:
        raise MissingValue(f"functional undefined on a required operator: {exc}") from None
    return QuasiStateReport(linearity, positivity, decomposition, normalization, tol)


def context_generators(config: RayConfiguration) -> dict[str, Operator]:
    return {f"A{k}": ctx.observable() for k, ctx in enumerate(enumerate_contexts(config))}


def restrict_to_projections(phi: Functional, family: ProjectionFamily,
                            generators: Mapping[str, Operator] | None = None,
                            tol: float = MEASURE_TOL) -> ProbabilityMeasure:
    """Values of a quasi-state on a projection family, as a measure."""
    if generators is None:
        generators = {label: p.operator for label, p in zip(family.labels, family.projections)}
    report = quasi_state_check(phi, generators, tol=tol)
    if not report.passed:
        raise QuasiStateFailure(f"functional is not a quasi-state: {report}")
    values = [_real(phi(p.operator)) for p in family.projections]
    measure = ProbabilityMeasure(family, values)
    if measure.is_two_valued():
        return TwoValuedMeasure(family, values)
    return measure


def trace_functional(rho: Operator) -> Functional:
    """φ(X) = tr(ρX)."""

    def phi(x: Operator) -> Value:
        return _simplify((rho @ x).trace()) if rho.exact and x.exact else complex(np.trace(rho.to_numpy() @ x.to_numpy()))

    return phi
