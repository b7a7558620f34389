"""Finite-dimensional von Neumann algebras ⊕ M_{n_i}: density-operator
measures, fractional-value witnesses, equivalent projections, the GNS
construction, multiplicative-state no-go certificates and the central type
census that decides whether valuation functions exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    BadBlockSpec,
    CorruptCertificate,
    DimensionMismatch,
    EmptyAlgebra,
    IndivisibleRank,
    NotNormalized,
    NotPositive,
)
from .exact import Surd, is_exact_scalar
from .linalg import TOLERANCE, Operator
from .measures import ProbabilityMeasure, _simplify
from .projlattice import Projection, ProjectionFamily

DENSITY_EIG_TOL = 1e-12
DENSITY_TRACE_TOL = 1e-10
WITNESS_DELTA = 1e-6
WITNESS_ATTEMPTS = 100
GNS_NULL_THRESHOLD = 1e-10
GNS_RANDOM_PAIRS = 50

EXISTS_ABELIAN = "EXISTS-ABELIAN"
EXISTS_I2_FINITE = "EXISTS-I2-FINITE"
NONE = "NONE"


# density operators -----------------------------------------------------------------


@dataclass(frozen=True)
class DensityOperator:
    operator: Operator

    def __post_init__(self):
        op = self.operator
        if not op.is_hermitian():
            raise NotPositive("density operator is not self-adjoint")
        w = np.linalg.eigvalsh(op.to_numpy())
        if w[0] < -DENSITY_EIG_TOL:
            raise NotPositive(f"density operator has eigenvalue {w[0]:.3g}")
        t = op.trace()
        if isinstance(t, Surd):
            if t != 1:
                raise NotNormalized(f"trace is {t}, not 1")
        elif abs(t - 1) > DENSITY_TRACE_TOL:
            raise NotNormalized(f"trace is {t.real:.12g}, not 1")

    @property
    def dim(self) -> int:
        return self.operator.dim

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(Operator.diagonal([Fraction(1, dim)] * dim))

    @classmethod
    def diagonal(cls, values: Sequence) -> "DensityOperator":
        return cls(Operator.diagonal(list(values)))

    @classmethod
    def pure(cls, vector: Sequence) -> "DensityOperator":
        """Projection onto the line through ``vector`` (normalised here)."""
        op = Operator.outer(vector)
        return cls(op.scale(1 / op.trace()) if op.exact else op.scale(1 / op.trace().real))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, rank: int | None = None) -> "DensityOperator":
        """Induced-measure random state: G G* / tr for a dim×rank Ginibre G."""
        g = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
        rho = g @ g.conj().T
        rho = (rho + rho.conj().T) / 2
        return cls(Operator(rho / np.trace(rho).real))

    def functional(self) -> Callable[[Operator], object]:
        rho = self.operator

        def phi(x: Operator):
            if rho.exact and x.exact:
                return _simplify((rho @ x).trace())
            return complex(np.trace(rho.to_numpy() @ x.to_numpy()))

        return phi

    def expectation(self, e: Operator):
        return self.functional()(e)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_projection(dim: int, rng: np.random.Generator, rank: int | None = None) -> Projection:
    rank = int(rng.integers(0, dim + 1)) if rank is None else rank
    u = random_unitary(dim, rng)[:, :rank]
    return Projection(Operator(u @ u.conj().T), rank)


# finite algebras -------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteAlgebra:
    """The block-diagonal algebra ⊕ M_{n_i} acting on C^{Σ n_i}."""

    blocks: tuple[int, ...]

    def __post_init__(self):
        if not self.blocks:
            raise EmptyAlgebra("an algebra needs at least one block")
        if any((not isinstance(n, (int, np.integer))) or n < 1 for n in self.blocks):
            raise BadBlockSpec(f"block sizes must be positive integers, got {self.blocks}")
        object.__setattr__(self, "blocks", tuple(int(n) for n in self.blocks))

    @classmethod
    def parse(cls, spec: str) -> "FiniteAlgebra":
        try:
            blocks = tuple(int(s) for s in spec.replace(" ", "").split(",") if s)
        except ValueError:
            raise BadBlockSpec(f"cannot parse block list {spec!r}") from None
        if not blocks:
            raise BadBlockSpec("empty block list")
        if any(n < 1 for n in blocks):
            raise BadBlockSpec(f"block sizes must be positive, got {spec!r}")
        return cls(blocks)

    @property
    def dim(self) -> int:
        return sum(self.blocks)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for n in self.blocks:
            out.append(acc)
            acc += n
        return tuple(out)

    def central_projection(self, b: int) -> Projection:
        off, n = self.offsets[b], self.blocks[b]
        return Projection(Operator.diagonal([1 if off <= k < off + n else 0 for k in range(self.dim)]), n)

    def central_projections(self) -> list[Projection]:
        return [self.central_projection(b) for b in range(len(self.blocks))]

    def basis(self) -> list[tuple[int, int, int]]:
        """Matrix units (block, row, col), block-local indices."""
        return [(b, i, j) for b, n in enumerate(self.blocks) for i in range(n) for j in range(n)]

    def unit(self, b: int, i: int, j: int) -> Operator:
        off = self.offsets[b]
        return Operator.matrix_unit(self.dim, off + i, off + j)

    def embed(self, b: int, block: np.ndarray | Operator) -> Operator:
        """Operator equal to ``block`` on block b and 0 elsewhere."""
        off, n = self.offsets[b], self.blocks[b]
        if isinstance(block, Operator) and block.exact:
            rows = [[0] * self.dim for _ in range(self.dim)]
            for i in range(n):
                for j in range(n):
                    rows[off + i][off + j] = block[i, j]
            return Operator(rows, "exact")
        arr = np.zeros((self.dim, self.dim), dtype=complex)
        arr[off:off + n, off:off + n] = block.to_numpy() if isinstance(block, Operator) else block
        return Operator(arr)

    def contains(self, op: Operator, tol: float = TOLERANCE) -> bool:
        if op.dim != self.dim:
            return False
        mask = np.zeros((self.dim, self.dim), dtype=bool)
        for off, n in zip(self.offsets, self.blocks):
            mask[off:off + n, off:off + n] = True
        return bool(np.all(np.abs(op.to_numpy()[~mask]) <= tol))

    def random_element(self, rng: np.random.Generator, hermitian: bool = False) -> Operator:
        arr = np.zeros((self.dim, self.dim), dtype=complex)
        for off, n in zip(self.offsets, self.blocks):
            z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            arr[off:off + n, off:off + n] = (z + z.conj().T) / 2 if hermitian else z
        return Operator(arr)

    def coefficients(self, op: Operator) -> np.ndarray:
        a = op.to_numpy()
        return np.array([a[self.offsets[b] + i, self.offsets[b] + j] for b, i, j in self.basis()])

    def from_coefficients(self, c: np.ndarray) -> Operator:
        arr = np.zeros((self.dim, self.dim), dtype=complex)
        for x, (b, i, j) in zip(c, self.basis()):
            arr[self.offsets[b] + i, self.offsets[b] + j] = x
        return Operator(arr)

    def self_adjoint_generators(self) -> dict[str, Operator]:
        """e_jj, e_jk + e_kj and i(e_jk - e_kj) for every block."""
        out = {}
        for b, n in enumerate(self.blocks):
            for j in range(n):
                out[f"b{b}:e{j}{j}"] = self.unit(b, j, j)
                for k in range(j + 1, n):
                    ejk, ekj = self.unit(b, j, k), self.unit(b, k, j)
                    out[f"b{b}:x{j}{k}"] = ejk + ekj
                    out[f"b{b}:y{j}{k}"] = (ejk - ekj).scale(Surd.parse("i"))
        return out


# Gleason-side measures ---------------------------------------------------------------


def gleason_measure(rho: DensityOperator, family: ProjectionFamily) -> ProbabilityMeasure:
    """μ(E) = tr(ρE) on every member of the family."""
    if rho.dim != family.dim:
        raise DimensionMismatch(f"density has dimension {rho.dim}, family {family.dim}")
    if rho.operator.exact and family.exact:
        phi = rho.functional()
        return ProbabilityMeasure(family, [_real_part(phi(p.operator)) for p in family.projections])
    vals = np.real(np.einsum("ij,kji->k", rho.operator.to_numpy(), family.stack()))
    return ProbabilityMeasure(family, [float(v) for v in vals])


def _real_part(x):
    if isinstance(x, Surd):
        return _simplify(x.real)
    return x if is_exact_scalar(x) else complex(x).real


@dataclass
class FractionalWitness:
    projection: Projection
    value: object
    block: int
    attempt: int  # 0 = standard partition, k = k-th random conjugation


def fractional_witness(rho: DensityOperator, algebra: FiniteAlgebra, delta: float = WITNESS_DELTA,
                       attempts: int = WITNESS_ATTEMPTS, seed: int = 0) -> FractionalWitness | None:
    """A projection E of the algebra with tr(ρE) in (δ, 1-δ), or None.

    Non-abelian blocks are tried first with the standard rank-1 partition of
    the block identity, then with seeded random unitary conjugations of it.
    Each partition member E is tried together with E + (I - P_block).
    Abelian coordinates are tried last.  None is returned only when ρ restricts
    to a {0,1}-valued character of the algebra.
    """
    if rho.dim != algebra.dim:
        raise DimensionMismatch(f"density has dimension {rho.dim}, algebra {algebra.dim}")
    phi = rho.functional()
    eye = Operator.identity(algebra.dim)

    def accept(e: Operator):
        val = _real_part(phi(e))
        return val if delta < float(val) < 1 - delta else None

    rng = np.random.default_rng(seed)
    big = [b for b, n in enumerate(algebra.blocks) if n >= 2]
    for b in big:
        n = algebra.blocks[b]
        outside = eye - algebra.central_projection(b).operator
        for attempt in range(attempts + 1):
            if attempt == 0:
                parts = [algebra.unit(b, j, j) for j in range(n)]
            else:
                u = random_unitary(n, rng)
                parts = [algebra.embed(b, np.outer(u[:, j], u[:, j].conj())) for j in range(n)]
            for e in parts:
                for cand in (e, e + outside):
                    val = accept(cand)
                    if val is not None:
                        return FractionalWitness(Projection.from_operator(cand), val, b, attempt)
    for b, n in enumerate(algebra.blocks):
        if n == 1:
            e = algebra.unit(b, 0, 0)
            val = accept(e)
            if val is not None:
                return FractionalWitness(Projection(e, 1), val, b, 0)
    return None


# equivalent projections ----------------------------------------------------------


@dataclass
class EquivalencePartition:
    target: Projection
    parts: list[Projection]
    isometries: list[Operator]  # θ_2..θ_n with θ*θ = E_1, θθ* = E_j

    def residual(self) -> float:
        """Largest violation of the defining identities (0.0 when exact and valid)."""
        worst = 0.0

        def gap(a: Operator, b: Operator) -> float:
            if a.exact and b.exact:
                return 0.0 if a.equals(b) else float(np.max(np.abs(a.to_numpy() - b.to_numpy())))
            return float(np.max(np.abs(a.to_numpy() - b.to_numpy())))

        total = self.parts[0].operator
        for p in self.parts[1:]:
            total = total + p.operator
        worst = max(worst, gap(total, self.target.operator))
        zero = Operator.zero(self.target.dim)
        for j, p in enumerate(self.parts):
            worst = max(worst, gap(p.operator @ p.operator, p.operator), gap(p.operator.H, p.operator))
            for q in self.parts[j + 1:]:
                worst = max(worst, gap(p.operator @ q.operator, zero))
        e1 = self.parts[0].operator
        for theta, p in zip(self.isometries, self.parts[1:]):
            worst = max(worst, gap(theta.H @ theta, e1), gap(theta @ theta.H, p.operator))
        return worst


def partition_identity(n: int, target: Projection, parts: int, tol: float = TOLERANCE) -> EquivalencePartition:
    """Split ``target`` in M_n into ``parts`` equivalent orthogonal projections.

    Matrix analogue of parting a projection: requires rank(E) divisible by
    ``parts``.  Exact when E is a 0/1 diagonal projection.
    """
    if target.dim != n:
        raise DimensionMismatch(f"target has dimension {target.dim}, block is M_{n}")
    if parts < 1 or target.rank % parts:
        raise IndivisibleRank(f"rank {target.rank} is not divisible by {parts}")
    m = target.rank // parts
    op = target.operator
    diag01 = op.exact and all(
        (op[i, j] == 0 if i != j else op[i, i] in (0, 1)) for i in range(n) for j in range(n)
    )
    if diag01:
        idx = [i for i in range(n) if op[i, i] == 1]
        vecs = [[1 if k == i else 0 for k in range(n)] for i in idx]
    else:
        w, v = np.linalg.eigh(op.to_numpy())
        vecs = [list(v[:, k]) for k in range(n) if w[k] > 0.5]
    groups = [vecs[j * m:(j + 1) * m] for j in range(parts)]
    projs = [Projection(sum((Operator.outer(q) for q in g[1:]), Operator.outer(g[0])), m) for g in groups]
    thetas = []
    for g in groups[1:]:
        theta = Operator.outer(g[0], groups[0][0])
        for q, q1 in zip(g[1:], groups[0][1:]):
            theta = theta + Operator.outer(q, q1)
        thetas.append(theta)
    return EquivalencePartition(target, projs, thetas)


# GNS ---------------------------------------------------------------------------------


@dataclass
class GnsResult:
    dimension: int
    representation: dict[tuple[int, int, int], np.ndarray]
    cyclic_vector: np.ndarray
    residual: float
    homomorphism_residual: float
    multiplicativity_residual: float
    algebra: FiniteAlgebra = field(repr=False)
    basis_change: np.ndarray = field(repr=False, default=None)
    gram: np.ndarray = field(repr=False, default=None)

    def represent(self, op: Operator) -> np.ndarray:
        """π(A) for an arbitrary algebra element."""
        c = self.algebra.coefficients(op)
        out = np.zeros((self.dimension, self.dimension), dtype=complex)
        for x, key in zip(c, self.algebra.basis()):
            if x:
                out = out + x * self.representation[key]
        return out


def _as_table(phi, algebra: FiniteAlgebra) -> dict[tuple[int, int, int], complex]:
    if isinstance(phi, Mapping):
        return {k: complex(phi.get(k, 0)) for k in algebra.basis()}
    return {k: complex(phi(algebra.unit(*k))) for k in algebra.basis()}


def character(algebra: FiniteAlgebra, block: int) -> dict[tuple[int, int, int], complex]:
    """Evaluation at a 1×1 block, as a value-map on matrix units."""
    if algebra.blocks[block] != 1:
        raise BadBlockSpec(f"block {block} is not abelian")
    return {k: (1.0 if k == (block, 0, 0) else 0.0) for k in algebra.basis()}


def gns_construct(phi, algebra: FiniteAlgebra, null_threshold: float = GNS_NULL_THRESHOLD,
                  seed: int = 0, random_pairs: int = GNS_RANDOM_PAIRS) -> GnsResult:
    """GNS representation of the state ``phi`` (callable or matrix-unit value-map).

    The form <X, Y> = φ(Y*X) is assembled on matrix units, its null space
    (Gram eigenvalues below ``null_threshold``) is quotiented out, and left
    multiplication is written in an orthonormal basis of the quotient.
    """
    table = _as_table(phi, algebra)
    basis = algebra.basis()
    pos = {k: a for a, k in enumerate(basis)}
    identity = np.array([1.0 if i == j else 0.0 for _, i, j in basis], dtype=complex)
    norm = sum(table[k] * identity[pos[k]] for k in basis)
    if abs(norm - 1) > DENSITY_TRACE_TOL:
        raise NotNormalized(f"φ(I) = {norm:.12g}, not 1")
    size = len(basis)
    gram = np.zeros((size, size), dtype=complex)
    # <e_a, e_b> = φ(e_b* e_a); e_b* e_a = E_{lk} E_{ij} = δ_{ki} E_{lj} within one block
    for a, (ba, i, j) in enumerate(basis):
        for b, (bb, k, l) in enumerate(basis):
            if ba == bb and k == i:
                gram[b, a] = table[(ba, l, j)]
    if not np.allclose(gram, gram.conj().T, atol=1e-9):
        raise NotPositive("φ is not hermitian on the algebra")
    w, v = np.linalg.eigh((gram + gram.conj().T) / 2)
    if w[0] < -1e-9:
        raise NotPositive(f"Gram matrix has eigenvalue {w[0]:.3g}")
    keep = w > null_threshold
    u = v[:, keep] / np.sqrt(w[keep])
    dim = int(keep.sum())
    # left multiplication by a matrix unit E_{ij}: E_{ij} E_{kl} = δ_{jk} E_{il}
    rep = {}
    for (ba, i, j) in basis:
        left = np.zeros((size, size), dtype=complex)
        for c, (bc, k, l) in enumerate(basis):
            if bc == ba and k == j:
                left[pos[(ba, i, l)], c] = 1.0
        rep[(ba, i, j)] = u.conj().T @ gram @ left @ u
    x = u.conj().T @ gram @ identity
    result = GnsResult(dim, rep, x, 0.0, 0.0, 0.0, algebra, u, gram)

    def state(op_coeffs: np.ndarray) -> complex:
        return sum(table[k] * c for k, c in zip(basis, op_coeffs))

    residual = max(abs(table[k] - np.vdot(x, rep[k] @ x)) for k in basis)
    hom, mult = 0.0, 0.0
    units = {k: algebra.unit(*k).to_numpy() for k in basis}
    pairs = [(units[a], units[b]) for a in basis for b in basis]
    rng = np.random.default_rng(seed)
    pairs += [(algebra.random_element(rng).to_numpy(), algebra.random_element(rng).to_numpy())
              for _ in range(random_pairs)]
    for a, b in pairs:
        ca, cb = algebra.coefficients(Operator(a)), algebra.coefficients(Operator(b))
        cab = algebra.coefficients(Operator(a @ b))
        pa, pb, pab = (sum(c * rep[k] for c, k in zip(cs, basis) if c) if np.any(cs) else np.zeros((dim, dim))
                       for cs in (ca, cb, cab))
        hom = max(hom, float(np.max(np.abs(pab - pa @ pb), initial=0.0)))
        mult = max(mult, abs(state(cab) - state(ca) * state(cb)))
    result.residual = float(residual)
    result.homomorphism_residual = hom
    result.multiplicativity_residual = float(mult)
    return result


# multiplicative-state no-go ------------------------------------------------------


@dataclass
class NoGoCertificate:
    n: int
    projections: list[Operator]
    isometries: list[Operator]

    @property
    def sum_values(self) -> list[int]:
        # multiplicative ⇒ φ(E_j) ∈ {0,1}; tracial ⇒ all equal; so Σ φ(E_j) ∈ {0, n}
        return [0, self.n]

    def to_json(self) -> dict:
        return {
            "format": "kslat-certificate",
            "version": 1,
            "kind": "no-go-multiplicative",
            "n": self.n,
            "projections": [p.to_json() for p in self.projections],
            "isometries": [t.to_json() for t in self.isometries],
            "schema": {
                "forced_values": [0, 1],
                "tracial_equalities": [[0, j] for j in range(1, self.n)],
                "sum_values": self.sum_values,
                "normalization": 1,
                "pattern": "F ~ I-F" if self.n == 2 else f"I = E_1 + ... + E_{self.n}, E_1 ~ E_j",
            },
        }


def multiplicative_no_go_witness(n: int) -> NoGoCertificate:
    """Matrix units E_j = e_jj and θ_j = e_j1 in M_n (exact)."""
    if n < 2:
        raise BadBlockSpec("no-go certificates need a block of size at least 2")
    projs = [Operator.matrix_unit(n, j, j) for j in range(n)]
    thetas = [Operator.matrix_unit(n, j, 0) for j in range(1, n)]
    return NoGoCertificate(n, projs, thetas)


@dataclass
class NoGoCheck:
    ok: bool
    reason: str

    def __bool__(self) -> bool:
        return self.ok


def verify_no_go_certificate(cert: NoGoCertificate | dict, tol: float = TOLERANCE) -> NoGoCheck:
    data = cert.to_json() if isinstance(cert, NoGoCertificate) else cert
    try:
        if data.get("kind") != "no-go-multiplicative":
            raise CorruptCertificate("not a no-go certificate")
        n = int(data["n"])
        projs = [Operator.from_json(p) for p in data["projections"]]
        thetas = [Operator.from_json(t) for t in data["isometries"]]
        schema = data["schema"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCertificate(f"malformed no-go certificate: {exc}") from None
    if len(projs) != n or len(thetas) != n - 1:
        return NoGoCheck(False, "wrong number of projections or isometries")
    eye = Operator.identity(projs[0].dim, projs[0].mode)
    total = projs[0]
    for p in projs[1:]:
        total = total + p
    if not total.equals(eye, tol):
        return NoGoCheck(False, "projections do not sum to I")
    for j, p in enumerate(projs):
        if not ((p @ p).equals(p, tol) and p.is_hermitian(tol)):
            return NoGoCheck(False, f"E_{j + 1} is not a projection")
    for j, (theta, p) in enumerate(zip(thetas, projs[1:]), start=2):
        if not (theta.H @ theta).equals(projs[0], tol):
            return NoGoCheck(False, f"θ_{j}*θ_{j} ≠ E_1")
        if not (theta @ theta.H).equals(p, tol):
            return NoGoCheck(False, f"θ_{j}θ_{j}* ≠ E_{j}")
    allowed = sorted({t * n for t in schema["forced_values"]})
    if allowed != sorted(schema["sum_values"]) or schema["normalization"] in allowed:
        return NoGoCheck(False, "arithmetic schema does not yield a contradiction")
    return NoGoCheck(True, f"Σ φ(E_j) ∈ {{0, {n}}} cannot equal φ(I) = 1")


# central decomposition -------------------------------------------------------------


class CharacterValuation:
    """v(A) = the entry of A in an abelian (1×1) block: a valuation function."""

    def __init__(self, algebra: FiniteAlgebra, block: int):
        if algebra.blocks[block] != 1:
            raise BadBlockSpec(f"block {block} is not abelian")
        self.algebra = algebra
        self.block = block
        self.coordinate = algebra.offsets[block]

    def __call__(self, a: Operator):
        x = a[self.coordinate, self.coordinate]
        return _simplify(x) if isinstance(x, Surd) else complex(x).real


@dataclass
class CentralCensus:
    algebra: FiniteAlgebra
    abelian_projection: Projection  # P_{I1}
    type_i_projection: Projection  # sum over blocks of size ≥ 3
    abelian_blocks: list[int]
    i2_blocks: list[int]
    large_blocks: list[int]
    verdict: str
    valuation: CharacterValuation | None

    def summary(self) -> dict:
        return {
            "blocks": list(self.algebra.blocks),
            "abelian_blocks": self.abelian_blocks,
            "i2_blocks": self.i2_blocks,
            "type_i_blocks_n_ge_3": self.large_blocks,
            "abelian_projection_rank": self.abelian_projection.rank,
            "type_i_projection_rank": self.type_i_projection.rank,
            "verdict": self.verdict,
        }


def decompose_center(algebra: FiniteAlgebra) -> CentralCensus:
    dim = algebra.dim
    abelian = [b for b, n in enumerate(algebra.blocks) if n == 1]
    i2 = [b for b, n in enumerate(algebra.blocks) if n == 2]
    large = [b for b, n in enumerate(algebra.blocks) if n >= 3]

    def total(bs: list[int]) -> Projection:
        acc = Projection.zero(dim)
        for b in bs:
            acc = acc + algebra.central_projection(b)
        return acc

    if abelian:
        verdict, valuation = EXISTS_ABELIAN, CharacterValuation(algebra, abelian[0])
    elif i2:
        verdict, valuation = EXISTS_I2_FINITE, None
    else:
        verdict, valuation = NONE, None
    return CentralCensus(algebra, total(abelian), total(large), abelian, i2, large, verdict, valuation)
