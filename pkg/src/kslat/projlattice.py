"""Projections, ray configurations, abelian contexts and lattice operations.

Ray-set documents are line-oriented text::

    # Peres 33-ray set
    dimension 3
    mode exact
    count 33
    z1: 1 0 0
    a1: 0 1 √2
    ...

Header lines (``dimension``, ``mode``, ``count``) precede the body.  Each
body line is one ray: an optional ``label:`` followed by whitespace-separated
components.  Exact components are sums of terms ``[±][p[/q]][√r|sqrt(r)][i]``;
float components are anything :func:`complex` accepts.  ``#`` starts a comment.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import DimensionMismatch, NotAProjection, ParseError, ZeroVector
from .exact import ONE, ZERO, Surd, as_surd
from .linalg import TOLERANCE, Mode, Operator, columns, inner, projector_onto

REST = "rest"


# projections ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Projection:
    operator: Operator
    rank: int

    @classmethod
    def from_operator(cls, op: Operator, tol: float = TOLERANCE) -> "Projection":
        if not op.is_hermitian(tol) or not (op @ op).equals(op, tol):
            raise NotAProjection("operator is not an orthogonal projection")
        t = op.trace()
        rank = int(t.to_fraction()) if isinstance(t, Surd) else int(round(t.real))
        return cls(op, rank)

    @classmethod
    def onto(cls, vectors: Sequence[Sequence], dim: int, mode: Mode, tol: float = TOLERANCE) -> "Projection":
        return cls.from_operator(projector_onto(vectors, dim, mode, tol), tol)

    @classmethod
    def identity(cls, dim: int, mode: Mode = "exact") -> "Projection":
        return cls(Operator.identity(dim, mode), dim)

    @classmethod
    def zero(cls, dim: int, mode: Mode = "exact") -> "Projection":
        return cls(Operator.zero(dim, mode), 0)

    @property
    def dim(self) -> int:
        return self.operator.dim

    @property
    def exact(self) -> bool:
        return self.operator.exact

    def __add__(self, other: "Projection") -> "Projection":
        """Sum of two orthogonal projections."""
        return Projection(self.operator + other.operator, self.rank + other.rank)

    def orthogonal_to(self, other: "Projection", tol: float = TOLERANCE) -> bool:
        return (self.operator @ other.operator).is_zero(tol)

    def leq(self, other: "Projection", tol: float = TOLERANCE) -> bool:
        return (other.operator @ self.operator).equals(self.operator, tol)

    def equals(self, other: "Projection", tol: float = TOLERANCE) -> bool:
        return self.rank == other.rank and self.operator.equals(other.operator, tol)

    def key(self) -> tuple:
        return self.operator.key()

    def __repr__(self) -> str:
        return f"Projection(rank={self.rank}, {self.operator!r})"


def _same_dim(e: Projection, f: Projection) -> None:
    if e.dim != f.dim:
        raise DimensionMismatch(f"dimensions {e.dim} and {f.dim} differ")


def ortho_complement(e: Projection) -> Projection:
    eye = Operator.identity(e.dim, e.operator.mode)
    return Projection(eye - e.operator, e.dim - e.rank)


def lattice_join(e: Projection, f: Projection, tol: float = TOLERANCE) -> Projection:
    """Projection onto range(E) + range(F)."""
    _same_dim(e, f)
    mode: Mode = "exact" if e.exact and f.exact else "approximate"
    if mode == "exact":
        return Projection.onto(columns(e.operator) + columns(f.operator), e.dim, mode)
    w, v = np.linalg.eigh((e.operator + f.operator).to_numpy())
    keep = v[:, w > tol]
    return Projection(Operator(keep @ keep.conj().T), keep.shape[1])


def lattice_meet(e: Projection, f: Projection, tol: float = TOLERANCE) -> Projection:
    """Projection onto range(E) ∩ range(F), via (E⊥ ∨ F⊥)⊥."""
    _same_dim(e, f)
    return ortho_complement(lattice_join(ortho_complement(e), ortho_complement(f), tol))


# ray configurations ----------------------------------------------------------------


@dataclass(frozen=True)
class RaySetDocument:
    dimension: int
    mode: Mode
    count: int
    labels: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]


_HEADER_KEYS = {"dimension", "mode", "count"}


def parse_ray_document(text: str) -> RaySetDocument:
    header: dict[str, str] = {}
    labels: list[str] = []
    rows: list[tuple[str, ...]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        first = line.split(None, 1)[0].lower()
        if first in _HEADER_KEYS and not rows:
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: malformed header {raw!r}")
            if first in header:
                raise ParseError(f"line {lineno}: duplicate header {first!r}")
            header[first] = parts[1]
            continue
        label = None
        if ":" in line:
            label, line = (s.strip() for s in line.split(":", 1))
            if not label or " " in label:
                raise ParseError(f"line {lineno}: bad label in {raw!r}")
        rows.append(tuple(line.split()))
        labels.append(label if label is not None else f"r{len(rows)}")
    missing = _HEADER_KEYS - header.keys()
    if missing:
        raise ParseError(f"missing header field(s): {', '.join(sorted(missing))}")
    try:
        dim, count = int(header["dimension"]), int(header["count"])
    except ValueError as exc:
        raise ParseError(f"non-integer header value: {exc}") from None
    mode = {"exact": "exact", "float": "approximate", "approximate": "approximate"}.get(header["mode"].lower())
    if mode is None:
        raise ParseError(f"unknown entry mode {header['mode']!r}")
    if dim < 1:
        raise ParseError("dimension must be positive")
    if count != len(rows):
        raise ParseError(f"header declares {count} rays, body has {len(rows)}")
    if len(set(labels)) != len(labels):
        raise ParseError("ray labels are not unique")
    return RaySetDocument(dim, mode, count, tuple(labels), tuple(rows))


def _parse_entry(tok: str, mode: Mode):
    if mode == "exact":
        return Surd.parse(tok)
    try:
        return complex(tok.replace("i", "j"))
    except ValueError:
        raise ParseError(f"bad float entry {tok!r}") from None


def _normalize_exact(vec: Sequence[Surd]) -> tuple[Surd, ...]:
    lead = next(x for x in vec if x)
    inv = lead.inverse()
    return tuple(x * inv for x in vec)


def _normalize_float(vec: np.ndarray) -> np.ndarray:
    v = vec / np.linalg.norm(vec)
    lead = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
    return v * (abs(lead) / lead)


@dataclass(frozen=True)
class Ray:
    label: str
    vector: tuple

    @property
    def exact(self) -> bool:
        return isinstance(self.vector[0], Surd)


class RayConfiguration:
    """A finite set of projectively distinct rays with their orthogonality graph."""

    def __init__(self, dim: int, rays: Iterable[Ray], mode: Mode, tol: float = TOLERANCE):
        self.dim = dim
        self.mode: Mode = mode
        self.tol = tol
        self.rays: tuple[Ray, ...] = tuple(rays)
        for r in self.rays:
            if len(r.vector) != dim:
                raise DimensionMismatch(f"ray {r.label} has {len(r.vector)} components, expected {dim}")
        n = len(self.rays)
        adj: list[set[int]] = [set() for _ in range(n)]
        for i, j in itertools.combinations(range(n), 2):
            if self._orthogonal(self.rays[i].vector, self.rays[j].vector):
                adj[i].add(j)
                adj[j].add(i)
        self.adjacency: tuple[frozenset[int], ...] = tuple(frozenset(a) for a in adj)

    @classmethod
    def from_vectors(
        cls, dim: int, vectors: Iterable[Sequence], labels: Iterable[str] | None = None,
        mode: Mode | None = None, dedupe: bool = False,
    ) -> "RayConfiguration":
        vectors = [list(v) for v in vectors]
        if mode is None:
            mode = "exact" if all(isinstance(x, (int, Surd)) or hasattr(x, "denominator")
                                  for v in vectors for x in v) else "approximate"
        labels = list(labels) if labels is not None else [f"r{k + 1}" for k in range(len(vectors))]
        rays: list[Ray] = []
        seen: dict = {}
        for label, v in zip(labels, vectors):
            if len(v) != dim:
                raise DimensionMismatch(f"ray {label} has {len(v)} components, expected {dim}")
            if mode == "exact":
                vec = tuple(as_surd(x) for x in v)
                if not any(vec):
                    raise ZeroVector(f"ray {label} is the zero vector")
                norm = _normalize_exact(vec)
                key = norm
            else:
                arr = np.asarray([complex(x) for x in v])
                if np.linalg.norm(arr) <= TOLERANCE:
                    raise ZeroVector(f"ray {label} is the zero vector")
                norm = tuple(_normalize_float(arr))
                key = None
                for prev in rays:
                    if abs(abs(np.vdot(np.asarray(prev.vector), np.asarray(norm))) - 1) <= TOLERANCE:
                        key = prev.label
                        break
            dup = seen.get(key) if mode == "exact" else key
            if dup is not None:
                if dedupe:
                    continue
                raise ParseError(f"ray {label} is parallel to ray {dup}")
            if mode == "exact":
                seen[key] = label
            rays.append(Ray(label, norm))
        return cls(dim, rays, mode)

    @classmethod
    def from_document(cls, doc: RaySetDocument, dedupe: bool = False) -> "RayConfiguration":
        vectors = []
        for label, row in zip(doc.labels, doc.rows):
            if len(row) != doc.dimension:
                raise DimensionMismatch(f"ray {label} has {len(row)} components, expected {doc.dimension}")
            vectors.append([_parse_entry(tok, doc.mode) for tok in row])
        return cls.from_vectors(doc.dimension, vectors, doc.labels, doc.mode, dedupe)

    def _orthogonal(self, u: Sequence, v: Sequence) -> bool:
        ip = inner(u, v)
        if isinstance(ip, Surd):
            return ip.is_zero()
        return abs(ip) <= self.tol

    def __len__(self) -> int:
        return len(self.rays)

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.rays)

    def orthogonal(self, i: int, j: int) -> bool:
        return j in self.adjacency[i]

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(len(self)) for j in sorted(self.adjacency[i]) if i < j]

    @cached_property
    def projections(self) -> tuple[Projection, ...]:
        return tuple(Projection(Operator.outer(r.vector).scale(_inv_norm2(r.vector)), 1) for r in self.rays)

    def projection(self, i: int) -> Projection:
        return self.projections[i]

    def span_projection(self, ids: Iterable[int]) -> Projection:
        """Sum of the (pairwise orthogonal) ray projections ``ids``."""
        acc = Projection.zero(self.dim, self.mode)
        for i in ids:
            acc = acc + self.projections[i]
        return acc

    def canonical_rows(self) -> list[list[str]]:
        if self.exact:
            return [[str(x) for x in r.vector] for r in self.rays]
        return [[f"{complex(x).real:.12f}{complex(x).imag:+.12f}j" for x in r.vector] for r in self.rays]

    @cached_property
    def hash(self) -> str:
        payload = json.dumps(
            {"dimension": self.dim, "mode": self.mode, "labels": list(self.labels), "rays": self.canonical_rows()},
            sort_keys=True, separators=(",", ":"),
        )
        return "sha256:" + hashlib.sha256(payload.encode()).hexdigest()

    def transformed(self, unitary: Operator) -> "RayConfiguration":
        """Image of every ray under ``unitary`` (labels kept)."""
        vecs = []
        for r in self.rays:
            if unitary.exact and self.exact:
                vecs.append([sum((unitary[i, k] * r.vector[k] for k in range(self.dim)), ZERO) for i in range(self.dim)])
            else:
                vecs.append(list(unitary.to_numpy() @ np.asarray([complex(x) for x in r.vector])))
        mode = "exact" if unitary.exact and self.exact else "approximate"
        return RayConfiguration.from_vectors(self.dim, vecs, self.labels, mode)

    def permuted(self, order: Sequence[int]) -> "RayConfiguration":
        return RayConfiguration(self.dim, [self.rays[k] for k in order], self.mode, self.tol)

    def to_document(self, title: str | None = None) -> str:
        lines = [f"# {title}"] if title else []
        lines += [f"dimension {self.dim}", f"mode {'exact' if self.exact else 'float'}", f"count {len(self)}"]
        for r, row in zip(self.rays, self._document_rows()):
            lines.append(f"{r.label}: " + " ".join(row))
        return "\n".join(lines) + "\n"

    def _document_rows(self) -> list[list[str]]:
        if self.exact:
            return [[str(x) for x in r.vector] for r in self.rays]
        return [[repr(complex(x).real) if complex(x).imag == 0 else repr(complex(x)).strip("()")
                 for x in r.vector] for r in self.rays]

    def __repr__(self) -> str:
        return f"RayConfiguration(dim={self.dim}, rays={len(self)}, mode={self.mode})"


def _inv_norm2(v: Sequence):
    n2 = inner(v, v)
    if isinstance(n2, Surd):
        return n2.inverse()
    return 1.0 / n2.real


def load_ray_configuration(source: str | Path, dedupe: bool = False) -> RayConfiguration:
    """Load a ray-set document from a path (or from literal text containing newlines)."""
    if isinstance(source, Path) or "\n" not in str(source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read {source}: {exc}") from exc
    else:
        text = str(source)
    return RayConfiguration.from_document(parse_ray_document(text), dedupe=dedupe)


# contexts ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Context:
    """Abelian subalgebra generated by pairwise-orthogonal ray projections.

    ``ray_ids`` index into the owning configuration.  When the rays do not
    resolve the identity the leftover ``remainder = I - Σ atoms`` is itself an
    atom of the generated algebra.
    """

    ray_ids: tuple[int, ...]
    atoms: tuple[Projection, ...]
    complete: bool
    remainder: Projection | None = None
    generators: tuple[str, ...] | None = None

    @property
    def size(self) -> int:
        return len(self.ray_ids)

    def all_atoms(self) -> tuple[Projection, ...]:
        return self.atoms + ((self.remainder,) if self.remainder is not None else ())

    def spectrum(self) -> tuple:
        """Atom labels: ray ids, plus ``REST`` for a nonzero remainder."""
        return self.ray_ids + ((REST,) if self.remainder is not None else ())

    def observable(self) -> Operator:
        """Σ (k+1)·atom_k; the remainder (if any) sits at eigenvalue 0."""
        acc = None
        for k, p in enumerate(self.atoms):
            term = p.operator.scale(k + 1)
            acc = term if acc is None else acc + term
        return acc

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Context) and self.ray_ids == other.ray_ids

    def __hash__(self) -> int:
        return hash(self.ray_ids)

    def __repr__(self) -> str:
        return f"Context({list(self.ray_ids)}, complete={self.complete})"


def make_context(config: RayConfiguration, ids: Iterable[int]) -> Context:
    ids = tuple(sorted(ids))
    for i, j in itertools.combinations(ids, 2):
        if not config.orthogonal(i, j):
            raise ValueError(f"rays {i} and {j} are not orthogonal")
    atoms = tuple(config.projection(i) for i in ids)
    complete = len(ids) == config.dim
    rem = None if complete else ortho_complement(config.span_projection(ids))
    return Context(ids, atoms, complete, rem, tuple(config.rays[i].label for i in ids))


def maximal_orthogonal_sets(config: RayConfiguration) -> list[tuple[int, ...]]:
    g = nx.Graph()
    g.add_nodes_from(range(len(config)))
    g.add_edges_from(config.edges())
    return sorted(tuple(sorted(c)) for c in nx.find_cliques(g))


def canonical_subset(config: RayConfiguration, ids: Iterable[int]) -> tuple[int, ...]:
    """Canonical ray set generating the same algebra as ``ids``.

    A set of d-1 orthogonal rays whose missing partner is itself a ray of the
    configuration generates the same algebra as the completed set.
    """
    ids = tuple(sorted(ids))
    if len(ids) == config.dim - 1:
        cands = set(range(len(config))) - set(ids)
        for i in ids:
            cands &= config.adjacency[i]
        if cands:
            (extra,) = cands  # at most one ray is orthogonal to d-1 independent rays
            return tuple(sorted(ids + (extra,)))
    return ids


def enumerate_contexts(config: RayConfiguration, closure: bool = False) -> list[Context]:
    """Maximal pairwise-orthogonal ray sets as contexts, in canonical order.

    With ``closure`` every nonempty orthogonal subset's generated context is
    included too (deduplicated by generated algebra).
    """
    maximal = maximal_orthogonal_sets(config)
    if not closure:
        keys = maximal
    else:
        seen: set[tuple[int, ...]] = set()
        for clique in maximal:
            for r in range(1, len(clique) + 1):
                for sub in itertools.combinations(clique, r):
                    seen.add(canonical_subset(config, sub))
        keys = sorted(seen, key=lambda k: (len(k), k))
    return [make_context(config, k) for k in keys]


# projection families -------------------------------------------------------------


@dataclass
class ProjectionFamily:
    """A labelled finite family of projections with its additive structure.

    ``additive_triples`` lists every (i, j, k) with P_i P_j = 0 and
    P_i + P_j = P_k (= P_i ∨ P_j) inside the family, i < j.
    """

    labels: list[str]
    projections: list[Projection]
    dim: int
    identity_index: int | None = None
    _triples: list[tuple[int, int, int]] | None = field(default=None, repr=False)

    @classmethod
    def build(cls, items: Iterable[tuple[str, Projection]]) -> "ProjectionFamily":
        labels: list[str] = []
        projs: list[Projection] = []
        index: dict = {}
        dim = None
        for label, p in items:
            dim = p.dim if dim is None else dim
            if p.dim != dim:
                raise DimensionMismatch("family members have different dimensions")
            k = p.key()
            if k in index:
                continue
            index[k] = len(projs)
            labels.append(label)
            projs.append(p)
        fam = cls(labels, projs, dim or 0)
        if dim:
            fam.identity_index = index.get(Projection.identity(dim, projs[0].operator.mode).key())
        return fam

    def __len__(self) -> int:
        return len(self.projections)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @property
    def exact(self) -> bool:
        return all(p.exact for p in self.projections)

    def stack(self) -> np.ndarray:
        return np.stack([p.operator.to_numpy() for p in self.projections])

    @property
    def additive_triples(self) -> list[tuple[int, int, int]]:
        if self._triples is None:
            self._triples = self._compute_triples()
        return self._triples

    def _compute_triples(self) -> list[tuple[int, int, int]]:
        if not self.projections:
            return []
        mats = self.stack()
        prods = np.einsum("aij,bjk->abik", mats, mats)
        orth = np.max(np.abs(prods), axis=(2, 3)) <= 1e-7
        keys = {p.key(): k for k, p in enumerate(self.projections)}
        approx_keys = {p.operator.approximate().key(): k for k, p in enumerate(self.projections)}
        out = []
        for i, j in zip(*np.nonzero(np.triu(orth, 1))):
            i, j = int(i), int(j)
            pi, pj = self.projections[i], self.projections[j]
            if pi.exact and pj.exact:
                if not pi.orthogonal_to(pj):
                    continue
                k = keys.get((pi.operator + pj.operator).key())
            else:
                k = approx_keys.get(Operator(mats[i] + mats[j]).key())
            if k is not None:
                out.append((i, j, k))
        return out


def projection_family(config: RayConfiguration) -> ProjectionFamily:
    """0, I, every ray, and every partial sum of every context's atoms."""
    mode = config.mode
    items: list[tuple[str, Projection]] = [
        ("0", Projection.zero(config.dim, mode)),
        ("I", Projection.identity(config.dim, mode)),
    ]
    items += [(r.label, config.projection(i)) for i, r in enumerate(config.rays)]
    for ctx in enumerate_contexts(config):
        for r in range(2, ctx.size + 1):
            for sub in itertools.combinations(ctx.ray_ids, r):
                items.append(("+".join(config.rays[i].label for i in sub), config.span_projection(sub)))
    return ProjectionFamily.build(items)
