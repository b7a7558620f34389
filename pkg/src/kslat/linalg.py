"""Dense complex operators, spectral decomposition and finite functional calculus.

Operators come in two arithmetic modes.  ``exact`` operators hold
:class:`~kslat.exact.Surd` entries and every comparison is an exact equality;
``approximate`` operators wrap a read-only ``complex128`` array and compare
within a tolerance.  Mixing modes degrades to approximate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionTooLarge,
    DomainGap,
    NotSelfAdjoint,
    NumericalDegeneracy,
)
from .exact import ONE, ZERO, Surd, as_surd, is_exact_scalar

Mode = Literal["exact", "approximate"]

TOLERANCE = 1e-9
EIGEN_GAP = 1e-7
DIMENSION_CAP = 64


class Operator:
    """A square complex matrix in exact or approximate mode."""

    __slots__ = ("_dim", "_mode", "_rows", "_array", "_key")

    def __init__(self, entries: Any, mode: Mode | None = None):
        if isinstance(entries, Operator):
            entries = entries._rows if entries.exact else entries._array
        if isinstance(entries, np.ndarray):
            rows = None
        else:
            rows = [list(r) for r in entries]
        if mode is None:
            if rows is not None and all(is_exact_scalar(x) for r in rows for x in r):
                mode = "exact"
            else:
                mode = "approximate"
        if mode == "exact":
            if rows is None:
                raise TypeError("exact operators need Surd/rational entries")
            self._rows: tuple[tuple[Surd, ...], ...] | None = tuple(
                tuple(as_surd(x) for x in r) for r in rows
            )
            n = len(self._rows)
            if any(len(r) != n for r in self._rows):
                raise DimensionMismatch("operator entries are not square")
            self._array: np.ndarray | None = None
        else:
            if rows is not None:
                arr = np.array([[complex(x) for x in r] for r in rows], dtype=complex)
            else:
                arr = np.array(entries, dtype=complex, copy=True)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise DimensionMismatch(f"operator entries have shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError("operator entries must be finite")
            arr.setflags(write=False)
            self._array = arr
            self._rows = None
            n = arr.shape[0]
        if n < 1:
            raise DimensionMismatch("operators need positive dimension")
        if n > DIMENSION_CAP:
            raise DimensionTooLarge(f"dimension {n} exceeds cap {DIMENSION_CAP}")
        self._dim = n
        self._mode: Mode = mode
        self._key = None

    # constructors ----------------------------------------------------------

    @classmethod
    def identity(cls, dim: int, mode: Mode = "exact") -> "Operator":
        return cls.diagonal([1] * dim, mode)

    @classmethod
    def zero(cls, dim: int, mode: Mode = "exact") -> "Operator":
        return cls.diagonal([0] * dim, mode)

    @classmethod
    def diagonal(cls, values: Sequence, mode: Mode | None = None) -> "Operator":
        n = len(values)
        rows = [[values[i] if i == j else 0 for j in range(n)] for i in range(n)]
        return cls(rows, mode)

    @classmethod
    def outer(cls, u: Sequence, v: Sequence | None = None) -> "Operator":
        """|u><v| (v defaults to u)."""
        v = u if v is None else v
        if all(is_exact_scalar(x) for x in list(u) + list(v)):
            uu = [as_surd(x) for x in u]
            vv = [as_surd(x).conjugate() for x in v]
            return cls([[a * b for b in vv] for a in uu], "exact")
        a = np.asarray([complex(x) for x in u])
        b = np.asarray([complex(x) for x in v])
        return cls(np.outer(a, b.conj()))

    @classmethod
    def matrix_unit(cls, dim: int, i: int, j: int) -> "Operator":
        return cls([[1 if (r, c) == (i, j) else 0 for c in range(dim)] for r in range(dim)], "exact")

    # basic properties --------------------------------------------------------

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def mode(self) -> Mode:
        return self._mode

    @property
    def exact(self) -> bool:
        return self._mode == "exact"

    @property
    def rows(self) -> tuple[tuple[Surd, ...], ...]:
        if self._rows is None:
            raise TypeError("approximate operator has no exact rows")
        return self._rows

    def to_numpy(self) -> np.ndarray:
        if self._array is None:
            self._array = np.array([[complex(x) for x in r] for r in self._rows], dtype=complex)
            self._array.setflags(write=False)
        return self._array

    def approximate(self) -> "Operator":
        return self if not self.exact else Operator(self.to_numpy())

    def __getitem__(self, ij: tuple[int, int]):
        i, j = ij
        return self._rows[i][j] if self.exact else self.to_numpy()[i, j]

    # arithmetic ----------------------------------------------------------------

    def _check(self, other: "Operator") -> None:
        if not isinstance(other, Operator):
            raise TypeError(f"expected Operator, got {type(other).__name__}")
        if other.dim != self.dim:
            raise DimensionMismatch(f"dimensions {self.dim} and {other.dim} differ")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        if self.exact and other.exact:
            return Operator(
                [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self._rows, other._rows)], "exact"
            )
        return Operator(self.to_numpy() + other.to_numpy())

    def __neg__(self) -> "Operator":
        if self.exact:
            return Operator([[-a for a in r] for r in self._rows], "exact")
        return Operator(-self.to_numpy())

    def __sub__(self, other: "Operator") -> "Operator":
        return self + (-other)

    def scale(self, c) -> "Operator":
        if self.exact and is_exact_scalar(c):
            c = as_surd(c)
            return Operator([[c * a for a in r] for r in self._rows], "exact")
        return Operator(complex(c) * self.to_numpy())

    def __rmul__(self, c) -> "Operator":
        return self.scale(c)

    def __mul__(self, c) -> "Operator":
        if isinstance(c, Operator):
            return self @ c
        return self.scale(c)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        if self.exact and other.exact:
            cols = list(zip(*other._rows))
            out = []
            for r in self._rows:
                row = []
                for c in cols:
                    acc = ZERO
                    for a, b in zip(r, c):
                        if a and b:
                            acc = acc + a * b
                    row.append(acc)
                out.append(row)
            return Operator(out, "exact")
        return Operator(self.to_numpy() @ other.to_numpy())

    @property
    def H(self) -> "Operator":
        """Adjoint."""
        if self.exact:
            return Operator([[self._rows[j][i].conjugate() for j in range(self.dim)] for i in range(self.dim)], "exact")
        return Operator(self.to_numpy().conj().T)

    def trace(self):
        if self.exact:
            acc = ZERO
            for i in range(self.dim):
                acc = acc + self._rows[i][i]
            return acc
        return complex(np.trace(self.to_numpy()))

    def norm(self) -> float:
        """Operator (spectral) norm, always as a float."""
        return float(np.linalg.norm(self.to_numpy(), 2))

    # comparisons ---------------------------------------------------------------

    def is_zero(self, tol: float = TOLERANCE) -> bool:
        if self.exact:
            return all(x.is_zero() for r in self._rows for x in r)
        return float(np.max(np.abs(self.to_numpy()), initial=0.0)) <= tol

    def equals(self, other: "Operator", tol: float = TOLERANCE) -> bool:
        self._check(other)
        if self.exact and other.exact:
            return self._rows == other._rows
        return (self - other).is_zero(tol)

    def is_hermitian(self, tol: float = TOLERANCE) -> bool:
        return self.equals(self.H, tol)

    def key(self) -> tuple:
        """Hashable identity: exact entries, or float entries rounded to 1e-6."""
        if self._key is None:
            if self.exact:
                self._key = ("exact", self._rows)
            else:
                a = np.round(self.to_numpy(), 6) + 0.0  # drop negative zeros
                self._key = ("approximate", a.real.tobytes(), a.imag.tobytes())
        return self._key

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Operator) or other.dim != self.dim:
            return NotImplemented
        return self.equals(other)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        if self.exact:
            body = "; ".join(" ".join(str(x) for x in r) for r in self._rows)
        else:
            body = np.array2string(self.to_numpy(), precision=4, suppress_small=True)
        return f"Operator[{self.mode}, {self.dim}]({body})"

    # serialization ---------------------------------------------------------------

    def to_json(self) -> dict:
        if self.exact:
            return {"mode": "exact", "dim": self.dim,
                    "entries": [[x.to_json() for x in r] for r in self._rows]}
        a = self.to_numpy()
        return {"mode": "approximate", "dim": self.dim,
                "entries": [[[float(x.real), float(x.imag)] for x in r] for r in a]}

    @classmethod
    def from_json(cls, data: Mapping) -> "Operator":
        if data["mode"] == "exact":
            return cls([[Surd.from_json(x) for x in r] for r in data["entries"]], "exact")
        return cls(np.array([[complex(re, im) for re, im in r] for r in data["entries"]]))


# exact Gaussian elimination ---------------------------------------------------


def exact_null_space(rows: Sequence[Sequence[Surd]], ncols: int) -> list[list[Surd]]:
    """Basis of {x : M x = 0} for an exact matrix given by its rows."""
    m = [list(r) for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = m[r][c].inverse()
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c]:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fcol in free:
        v = [ZERO] * ncols
        v[fcol] = ONE
        for i, pc in enumerate(pivots):
            v[pc] = -m[i][fcol]
        basis.append(v)
    return basis


def exact_orthogonal_basis(vectors: Iterable[Sequence[Surd]]) -> list[list[Surd]]:
    """Gram-Schmidt without normalisation; drops dependent vectors."""
    basis: list[list[Surd]] = []
    norms: list[Surd] = []
    for v in vectors:
        w = [as_surd(x) for x in v]
        for q, qq in zip(basis, norms):
            c = inner(q, w) / qq
            if c:
                w = [a - c * b for a, b in zip(w, q)]
        if any(w):
            basis.append(w)
            norms.append(inner(w, w))
    return basis


def inner(u: Sequence, v: Sequence):
    """<u, v> = sum conj(u_k) v_k (exact when both are exact)."""
    if all(isinstance(x, Surd) for x in u) and all(isinstance(x, Surd) for x in v):
        acc = ZERO
        for a, b in zip(u, v):
            if a and b:
                acc = acc + a.conjugate() * b
        return acc
    return complex(np.vdot(np.asarray([complex(x) for x in u]), np.asarray([complex(x) for x in v])))


def projector_onto(vectors: Sequence[Sequence], dim: int, mode: Mode, tol: float = TOLERANCE) -> Operator:
    """Orthogonal projection onto the span of ``vectors``."""
    if mode == "exact":
        acc = Operator.zero(dim)
        for q in exact_orthogonal_basis(vectors):
            acc = acc + Operator.outer(q).scale(inner(q, q).inverse())
        return acc
    if not len(vectors):
        return Operator(np.zeros((dim, dim), dtype=complex))
    m = np.asarray([[complex(x) for x in v] for v in vectors]).T
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    r = int(np.sum(s > tol))
    u = u[:, :r]
    return Operator(u @ u.conj().T)


def columns(op: Operator) -> list[list]:
    if op.exact:
        return [list(c) for c in zip(*op.rows)]
    return [list(c) for c in op.to_numpy().T]


# spectral theory ----------------------------------------------------------------


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenvalues (ascending) with their eigenprojections."""

    eigenvalues: tuple
    projections: tuple[Operator, ...]

    def __iter__(self):
        return iter(zip(self.eigenvalues, self.projections))

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def exact(self) -> bool:
        return all(p.exact for p in self.projections)

    def reconstruct(self) -> Operator:
        acc = None
        for lam, p in self:
            term = p.scale(lam)
            acc = term if acc is None else acc + term
        return acc

    def ranks(self) -> tuple[int, ...]:
        out = []
        for p in self.projections:
            t = p.trace()
            out.append(int(t.to_fraction()) if isinstance(t, Surd) else int(round(t.real)))
        return tuple(out)

    def index_of(self, value, tol: float = EIGEN_GAP) -> int | None:
        for k, lam in enumerate(self.eigenvalues):
            if _scalar_close(lam, value, tol):
                return k
        return None


def _scalar_close(a, b, tol: float) -> bool:
    if is_exact_scalar(a) and is_exact_scalar(b):
        return as_surd(a) == as_surd(b)
    return abs(complex(a) - complex(b)) <= tol


def _clusters(values: np.ndarray, gap: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and v - values[groups[-1][-1]] < gap:
            groups[-1].append(i)
        else:
            groups.append([i])
    for g in groups:
        if values[g[-1]] - values[g[0]] >= gap:
            raise NumericalDegeneracy(
                f"eigenvalue cluster spans {values[g[-1]] - values[g[0]]:.3g} at gap {gap:g}"
            )
    return groups


def spectral_decompose(a: Operator, gap: float = EIGEN_GAP, tol: float = TOLERANCE) -> SpectralDecomposition:
    """Spectral decomposition of a self-adjoint operator.

    Eigenvalues closer than ``gap`` are merged into one eigenprojection; a
    merged cluster wider than ``gap`` (chained near-degeneracies) raises
    :class:`NumericalDegeneracy`.  Exact operators must have rational
    eigenvalues, which are then confirmed by exact kernel computations.
    """
    if not a.is_hermitian(tol):
        raise NotSelfAdjoint("operator is not self-adjoint")
    w, v = np.linalg.eigh(a.to_numpy())
    groups = _clusters(w, gap)
    if not a.exact:
        vals, projs = [], []
        for g in groups:
            vals.append(float(np.mean(w[g])))
            vg = v[:, g]
            projs.append(Operator(vg @ vg.conj().T))
        return SpectralDecomposition(tuple(vals), tuple(projs))

    vals, projs = [], []
    for g in groups:
        lam = Fraction(float(np.mean(w[g]))).limit_denominator(10**6)
        shifted = a - Operator.identity(a.dim).scale(lam)
        kernel = exact_null_space(shifted.rows, a.dim)
        if len(kernel) != len(g):
            raise NumericalDegeneracy(
                f"eigenvalue near {float(lam):.6g} is not an exact rational eigenvalue"
            )
        vals.append(lam)
        projs.append(projector_onto(kernel, a.dim, "exact"))
    return SpectralDecomposition(tuple(vals), tuple(projs))


# Borel functional calculus -------------------------------------------------------


@dataclass(frozen=True)
class BorelFunction:
    """A function on finite spectra: an explicit value table or a named rule.

    Tabulated functions look eigenvalues up exactly (exact keys) or within
    ``EIGEN_GAP`` (float keys); a missing eigenvalue raises :class:`DomainGap`.
    """

    table: Mapping | None = None
    rule: Callable[[Any], Any] | None = field(default=None, compare=False)
    tag: str = "table"

    def __post_init__(self):
        if (self.table is None) == (self.rule is None):
            raise ValueError("BorelFunction needs exactly one of table or rule")

    @classmethod
    def identity(cls) -> "BorelFunction":
        return cls(rule=lambda x: x, tag="identity")

    @classmethod
    def square(cls) -> "BorelFunction":
        return cls(rule=lambda x: x * x, tag="square")

    @classmethod
    def scale(cls, c) -> "BorelFunction":
        return cls(rule=lambda x: c * x, tag=f"scale({c})")

    @classmethod
    def affine(cls, a, b) -> "BorelFunction":
        return cls(rule=lambda x: a * x + b, tag=f"affine({a},{b})")

    @classmethod
    def constant(cls, c) -> "BorelFunction":
        return cls(rule=lambda x: c, tag=f"constant({c})")

    @classmethod
    def indicator(cls, points: Iterable) -> "BorelFunction":
        pts = tuple(points)

        def rule(x):
            return 1 if any(_scalar_close(x, p, EIGEN_GAP) for p in pts) else 0

        return cls(rule=rule, tag=f"indicator({', '.join(str(p) for p in pts)})")

    @classmethod
    def from_table(cls, table: Mapping) -> "BorelFunction":
        return cls(table=dict(table), tag="table")

    def __call__(self, x):
        if self.rule is not None:
            return self.rule(x)
        for key, val in self.table.items():
            if _scalar_close(key, x, EIGEN_GAP):
                return val
        raise DomainGap(f"value-map has no entry for eigenvalue {x}")

    def then(self, outer: "BorelFunction") -> "BorelFunction":
        """outer ∘ self."""
        return BorelFunction(rule=lambda x: outer(self(x)), tag=f"{outer.tag}∘{self.tag}")

    def real_part(self) -> "BorelFunction":
        return BorelFunction(rule=lambda x: _re(self(x)), tag=f"Re {self.tag}")

    def imag_part(self) -> "BorelFunction":
        return BorelFunction(rule=lambda x: _im(self(x)), tag=f"Im {self.tag}")

    def tabulate(self, spectrum: Iterable) -> dict:
        return {lam: self(lam) for lam in spectrum}


def _re(x):
    if isinstance(x, Surd):
        return x.real
    if is_exact_scalar(x):
        return x
    return complex(x).real


def _im(x):
    if isinstance(x, Surd):
        return x.imag
    if is_exact_scalar(x):
        return 0
    return complex(x).imag


def borel_apply(f: BorelFunction, a: Operator | SpectralDecomposition, **kw) -> Operator:
    """f(A) = sum f(λ) P_λ over the spectral decomposition of A."""
    dec = a if isinstance(a, SpectralDecomposition) else spectral_decompose(a, **kw)
    acc = None
    for lam, p in dec:
        term = p.scale(f(lam))
        acc = term if acc is None else acc + term
    return acc


def commutes(a: Operator, b: Operator, tol: float = TOLERANCE) -> bool:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions {a.dim} and {b.dim} differ")
    return (a @ b - b @ a).is_zero(tol)


def as_function_of(b: Operator, dec: SpectralDecomposition, tol: float = TOLERANCE):
    """Return the value list g(λ_k) when B = Σ g(λ_k) P_k, else None."""
    coeffs = []
    for lam, p in zip(dec.eigenvalues, dec.projections):
        rank = p.trace()
        c = (b @ p).trace()
        if isinstance(c, Surd) and isinstance(rank, Surd):
            coeffs.append(c / rank)
        else:
            coeffs.append(complex(c) / complex(rank).real)
    rebuilt = None
    for c, p in zip(coeffs, dec.projections):
        term = p.scale(c)
        rebuilt = term if rebuilt is None else rebuilt + term
    return coeffs if rebuilt.equals(b, tol) else None

