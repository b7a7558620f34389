"""Spectral and state presheaves over the finite poset of contexts.

Nodes are the maximal contexts together with every context generated by a
ray set that two or more nodes share (closed under intersection,
deduplicated by generated algebra).  A node's spectrum is its atom list:
its ray ids plus ``REST`` for a nonzero remainder I - Σ atoms.  Restriction
runs against inclusion: for M ⊆ N an atom of N maps to the unique atom of M
dominating it (the same ray if M has it, otherwise M's remainder).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import ClosureFailure, CorruptCertificate, DimensionMismatch, HashMismatch
from .linalg import Operator
from .projlattice import REST, Context, RayConfiguration, canonical_subset, make_context, maximal_orthogonal_sets
from .search import DEFAULT_BUDGET, INDETERMINATE, SAT, UNSAT

Atom = Any  # ray index or REST
BUNDLE_FORMAT = "kslat-presheaf-bundle"
BUNDLE_VERSION = 1
POINT_TOL = 1e-10


@dataclass
class ContextPoset:
    nodes: list[Context]
    below: dict[int, list[int]]  # node -> strictly smaller nodes
    covers: list[tuple[int, int]]  # (M, N) with M ⋖ N

    def order_pairs(self) -> Iterator[tuple[int, int]]:
        for n, lows in self.below.items():
            for m in lows:
                yield m, n

    def maximal(self) -> list[int]:
        lower = {m for lows in self.below.values() for m in lows}
        return [k for k in range(len(self.nodes)) if k not in lower]


@dataclass
class SpectralPresheafBundle:
    config: RayConfiguration
    poset: ContextPoset
    restriction: dict[tuple[int, int], dict[Atom, Atom]]

    @property
    def nodes(self) -> list[Context]:
        return self.poset.nodes

    def spectrum(self, k: int) -> tuple:
        return self.nodes[k].spectrum()

    def restrict(self, m: int, n: int, atom: Atom) -> Atom:
        return self.restriction[(m, n)][atom]

    def to_json(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "config_hash": self.config.hash,
            "nodes": [
                {"rays": list(c.ray_ids), "labels": [self.config.rays[i].label for i in c.ray_ids],
                 "complete": c.complete,
                 "atoms": [a.operator.to_json() for a in c.all_atoms()]}
                for c in self.nodes
            ],
            "edges": [list(e) for e in self.poset.covers],
            "restrictions": [
                {"from": n, "to": m, "table": {str(a): b for a, b in table.items()}}
                for (m, n), table in sorted(self.restriction.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"


def _restriction_table(m: Context, n: Context) -> dict[Atom, Atom]:
    table: dict[Atom, Atom] = {}
    mset = set(m.ray_ids)
    for a in n.spectrum():
        if a in mset:
            table[a] = a
        elif m.remainder is not None:
            table[a] = REST
        else:
            raise ClosureFailure(f"atom {a} of {n} has no dominating atom in {m}")
    return table


def poset_keys(config: RayConfiguration) -> list[tuple[int, ...]]:
    """Ray sets of the poset nodes: maximal contexts closed under shared intersections."""
    keys = {canonical_subset(config, c) for c in maximal_orthogonal_sets(config)}
    fresh = set(keys)
    while fresh:
        new = set()
        for a in fresh:
            for b in keys:
                common = set(a) & set(b)
                if common and a != b:
                    key = canonical_subset(config, common)
                    if key not in keys:
                        new.add(key)
        keys |= new
        fresh = new
    return sorted(keys, key=lambda k: (len(k), k))


def build_spectral_presheaf(config: RayConfiguration) -> SpectralPresheafBundle:
    nodes = [make_context(config, k) for k in poset_keys(config)]
    index = {c.ray_ids: k for k, c in enumerate(nodes)}
    sets = [set(c.ray_ids) for c in nodes]
    below: dict[int, list[int]] = {k: [] for k in range(len(nodes))}
    for n, big in enumerate(sets):
        for m, small in enumerate(sets):
            if m != n and small < big:
                below[n].append(m)
        for other in sets:
            common = big & other
            if common and canonical_subset(config, common) not in index:
                raise ClosureFailure(f"shared sub-context {sorted(common)} missing from the poset")
    covers = []
    for n, lows in below.items():
        lows_set = set(lows)
        for m in lows:
            if not any(m in below[k] for k in lows_set if k != m):
                covers.append((m, n))
    poset = ContextPoset(nodes, {k: sorted(v) for k, v in below.items()}, sorted(covers))
    restriction = {(m, n): _restriction_table(nodes[m], nodes[n]) for m, n in poset.order_pairs()}
    bundle = SpectralPresheafBundle(config, poset, restriction)
    bad = functoriality_violations(bundle)
    if bad:
        raise ClosureFailure(f"restriction maps do not compose on chains {bad[:3]}")
    return bundle


def functoriality_violations(bundle: SpectralPresheafBundle) -> list[tuple[int, int, int]]:
    """Chains M ⊆ N ⊆ C where restriction C→M differs from C→N→M."""
    bad = []
    below = bundle.poset.below
    for c, mids in below.items():
        for n in mids:
            for m in below[n]:
                for a in bundle.spectrum(c):
                    if bundle.restrict(m, c, a) != bundle.restrict(m, n, bundle.restrict(n, c, a)):
                        bad.append((m, n, c))
                        break
    return bad


# global sections -------------------------------------------------------------------


@dataclass
class SectionOutcome:
    verdict: str
    config_hash: str
    section: dict[int, Atom] | None = None
    tree: Any = None
    nodes_explored: int = 0

    def to_certificate(self) -> dict:
        return {
            "format": "kslat-certificate",
            "version": 1,
            "kind": "presheaf-section",
            "config_hash": self.config_hash,
            "verdict": self.verdict,
            "section": None if self.section is None else {str(k): v for k, v in self.section.items()},
            "tree": self.tree,
        }


class _Budget(Exception):
    pass


class _SectionSearch:
    """Backtracking over maximal nodes; lower nodes are fixed by restriction."""

    def __init__(self, bundle: SpectralPresheafBundle, budget: int):
        self.b = bundle
        self.budget = budget
        self.top = sorted(bundle.poset.maximal(), key=lambda k: (-bundle.nodes[k].size, k))
        self.value: dict[int, Atom] = {}
        self.owner: dict[int, int] = {}
        self.count = 0

    def place(self, n: int, atom: Atom) -> tuple[list[int], int | None]:
        """Fix node n and its restrictions; returns (newly fixed, conflicting node)."""
        fixed = []
        for m in [n] + self.b.poset.below[n]:
            img = atom if m == n else self.b.restrict(m, n, atom)
            cur = self.value.get(m)
            if cur is None:
                self.value[m] = img
                fixed.append(m)
            elif cur != img:
                return fixed, m
        return fixed, None

    def run(self, depth: int, sink: list | None, enumerate_all: bool):
        self.count += 1
        if self.count > self.budget:
            raise _Budget
        if depth == len(self.top):
            if sink is not None:
                sink.append(dict(self.value))
            return SAT, {"sat": True}
        n = self.top[depth]
        children = {}
        found = False
        for atom in self.b.spectrum(n):
            fixed, clash = self.place(n, atom)
            if clash is not None:
                sub = (UNSAT, {"conflict": clash})
            else:
                sub = self.run(depth + 1, sink, enumerate_all)
            for m in fixed:
                del self.value[m]
            children[str(atom)] = sub[1]
            if sub[0] == SAT:
                found = True
                if not enumerate_all:
                    return SAT, None
        return (SAT if found else UNSAT), {"node": n, "choices": children}


def global_section_search(bundle: SpectralPresheafBundle, budget: int = DEFAULT_BUDGET) -> SectionOutcome:
    """Find a compatible choice of one spectrum element per node, or refute."""
    s = _SectionSearch(bundle, budget)
    sink: list = []
    try:
        verdict, tree = s.run(0, sink, False)
    except _Budget:
        return SectionOutcome(INDETERMINATE, bundle.config.hash, nodes_explored=s.count)
    if verdict == SAT:
        return SectionOutcome(SAT, bundle.config.hash, sink[0], None, s.count)
    return SectionOutcome(UNSAT, bundle.config.hash, None, tree, s.count)


def enumerate_global_sections(bundle: SpectralPresheafBundle, budget: int = DEFAULT_BUDGET) -> list[dict[int, Atom]]:
    s = _SectionSearch(bundle, budget)
    sink: list = []
    s.run(0, sink, True)
    return sink


def section_is_valid(bundle: SpectralPresheafBundle, section: dict[int, Atom]) -> bool:
    if set(section) != set(range(len(bundle.nodes))):
        return False
    for k, a in section.items():
        if a not in bundle.spectrum(k):
            return False
    return all(section[m] == bundle.restrict(m, n, section[n]) for m, n in bundle.poset.order_pairs())


def section_to_assignment(bundle: SpectralPresheafBundle, section: dict[int, Atom]) -> tuple[int, ...]:
    """Ray x is true iff some node chooses x (well defined for valid sections)."""
    values = [0] * len(bundle.config)
    for k, a in section.items():
        if a != REST:
            values[a] = 1
    return tuple(values)


def assignment_to_section(bundle: SpectralPresheafBundle, assignment: Sequence[int]) -> dict[int, Atom]:
    section = {}
    for k, c in enumerate(bundle.nodes):
        ones = [i for i in c.ray_ids if assignment[i]]
        section[k] = ones[0] if len(ones) == 1 else (REST if not ones else None)
    return section


def verify_section_certificate(cert: dict, bundle: SpectralPresheafBundle) -> bool:
    """Replay a presheaf certificate: SAT sections are checked edge by edge;
    UNSAT trees must branch over every spectrum element and every leaf must
    show two path choices restricting differently onto the named node."""
    if cert.get("kind") != "presheaf-section":
        raise CorruptCertificate("not a presheaf-section certificate")
    if cert.get("config_hash") != bundle.config.hash:
        raise HashMismatch("certificate does not match this bundle")
    if cert["verdict"] == SAT:
        section = {int(k): (v if v == REST else int(v)) for k, v in cert["section"].items()}
        return section_is_valid(bundle, section)
    if cert["verdict"] != UNSAT:
        return False
    stack = [(cert["tree"], ())]
    while stack:
        node, path = stack.pop()
        if "conflict" in node:
            target = node["conflict"]
            images = set()
            for n, atom in path:
                if target == n:
                    images.add(atom)
                elif target in bundle.poset.below[n]:
                    images.add(bundle.restrict(target, n, atom))
            if len(images) < 2:
                return False
        elif "node" in node:
            n = node["node"]
            spec = bundle.spectrum(n)
            if sorted(node["choices"]) != sorted(str(a) for a in spec):
                return False
            for a in spec:
                stack.append((node["choices"][str(a)], path + ((n, a),)))
        else:
            return False
    return True


# state presheaf --------------------------------------------------------------------


@dataclass
class StateSection:
    bundle: SpectralPresheafBundle
    weights: list[dict[Atom, float]]
    edge_residuals: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.edge_residuals.values(), default=0.0)


def state_presheaf_section(rho: Operator, bundle: SpectralPresheafBundle) -> StateSection:
    """Per node, the measure atom ↦ tr(ρ·atom); the remainder carries the leftover mass."""
    if rho.dim != bundle.config.dim:
        raise DimensionMismatch(f"density has dimension {rho.dim}, configuration {bundle.config.dim}")
    r = rho.to_numpy()
    weights = []
    for c in bundle.nodes:
        w: dict[Atom, float] = {}
        for a, p in zip(c.spectrum(), c.all_atoms()):
            w[a] = float(np.real(np.trace(r @ p.operator.to_numpy())))
        weights.append(w)
    residuals = {}
    for m, n in bundle.poset.order_pairs():
        pushed: dict[Atom, float] = {a: 0.0 for a in bundle.spectrum(m)}
        for a, x in weights[n].items():
            pushed[bundle.restrict(m, n, a)] += x
        residuals[(m, n)] = max(abs(pushed[a] - weights[m][a]) for a in pushed)
    return StateSection(bundle, weights, residuals)


@dataclass
class PointMeasureVerdict:
    per_node: list[Atom | None]  # the atom carrying weight 1, else None
    all_point: bool
    spectral_choice: dict[int, Atom] | None

    @property
    def global_verdict(self) -> str:
        return "ALL-POINT" if self.all_point else "NOT-ALL-POINT"


def point_measure_classify(section: StateSection, tol: float = POINT_TOL) -> PointMeasureVerdict:
    per_node: list[Atom | None] = []
    for w in section.weights:
        hit = [a for a, x in w.items() if abs(x - 1) <= tol]
        per_node.append(hit[0] if hit else None)
    nodes = section.bundle.nodes
    all_point = all(per_node[k] is not None for k, c in enumerate(nodes) if c.complete)
    choice = None
    if all_point:
        choice = {k: per_node[k] for k, c in enumerate(nodes) if c.complete}
    return PointMeasureVerdict(per_node, all_point, choice)
