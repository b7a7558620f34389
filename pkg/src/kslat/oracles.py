"""Independent brute-force censuses used to cross-check the main algorithms.

Nothing here reuses the clique enumeration, the propagation solver or the
presheaf builder: orthogonality is recomputed from complex coordinates,
contexts come from exhaustive subset enumeration and colourings from plain
enumeration or a naive backtracker.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .projlattice import RayConfiguration

ORACLE_TOL = 1e-9


def _vectors(config: RayConfiguration) -> np.ndarray:
    return np.array([[complex(x) for x in r.vector] for r in config.rays])


def orthogonality_matrix(config: RayConfiguration) -> np.ndarray:
    v = _vectors(config)
    return np.abs(v.conj() @ v.T) <= ORACLE_TOL


def brute_force_contexts(config: RayConfiguration) -> tuple[list[tuple[int, ...]], list[tuple[int, ...]]]:
    """(complete, incomplete) maximal orthogonal sets by exhaustive search."""
    orth = orthogonality_matrix(config)
    n, d = len(config), config.dim
    cliques = []
    for size in range(1, d + 1):
        for sub in itertools.combinations(range(n), size):
            if all(orth[a, b] for a, b in itertools.combinations(sub, 2)):
                cliques.append(sub)
    as_sets = [set(c) for c in cliques]
    maximal = [c for c, s in zip(cliques, as_sets) if not any(s < t for t in as_sets)]
    return sorted(c for c in maximal if len(c) == d), sorted(c for c in maximal if len(c) < d)


def count_colourings(config: RayConfiguration, limit: int = 22) -> int:
    """Number of {0,1} ray assignments obeying the exactly-one/at-most-one rules (2^n scan)."""
    n = len(config)
    if n > limit:
        raise ValueError(f"{n} rays is too many for exhaustive enumeration")
    complete, incomplete = brute_force_contexts(config)
    count = 0
    for bits in itertools.product((0, 1), repeat=n):
        if all(sum(bits[i] for i in c) == 1 for c in complete) and all(
            sum(bits[i] for i in c) <= 1 for c in incomplete
        ):
            count += 1
    return count


def naive_colourable(config: RayConfiguration) -> bool:
    """Pick the true ray of each complete context in turn; no propagation."""
    complete, incomplete = brute_force_contexts(config)
    orth = orthogonality_matrix(config)
    value: dict[int, int] = {}

    def consistent() -> bool:
        for c in complete:
            vals = [value.get(i) for i in c]
            if vals.count(1) > 1 or (None not in vals and vals.count(1) != 1):
                return False
        for c in incomplete:
            if [value.get(i) for i in c].count(1) > 1:
                return False
        return True

    def place(k: int) -> bool:
        if k == len(complete):
            return True
        ctx = complete[k]
        if any(value.get(i) == 1 for i in ctx):
            return place(k + 1)
        for pick in ctx:
            if value.get(pick) == 0:
                continue
            saved = dict(value)
            value[pick] = 1
            for i in ctx:
                value.setdefault(i, 0)
            for j in np.flatnonzero(orth[pick]):
                value.setdefault(int(j), 0)
            if consistent() and place(k + 1):
                return True
            value.clear()
            value.update(saved)
        return False

    return place(0)


@dataclass
class PosetCensus:
    nodes: int
    order_pairs: int  # strict inclusions M ⊊ N


def _atoms(config: RayConfiguration, ids: tuple[int, ...]) -> list[np.ndarray]:
    v = _vectors(config)
    out = []
    for i in ids:
        u = v[i] / np.linalg.norm(v[i])
        out.append(np.outer(u, u.conj()))
    rest = np.eye(config.dim) - sum(out)
    if np.abs(rest).max() > ORACLE_TOL:
        out.append(rest)
    return out


def _key(atoms: list[np.ndarray]) -> frozenset:
    return frozenset(tuple(np.round(a, 6).ravel().tolist()) for a in atoms)


def presheaf_census(config: RayConfiguration) -> PosetCensus:
    """Distinct algebras of maximal contexts and of their shared intersections, with inclusions."""
    complete, incomplete = brute_force_contexts(config)
    sets = {frozenset(c) for c in complete + incomplete}
    while True:
        grown = sets | {a & b for a in sets for b in sets if a != b and a & b}
        if grown == sets:
            break
        sets = grown
    algebras: dict[frozenset, list[np.ndarray]] = {}
    for sub in sets:
        atoms = _atoms(config, tuple(sorted(sub)))
        algebras.setdefault(_key(atoms), atoms)
    nodes = list(algebras.values())

    def below(m: list[np.ndarray], big: list[np.ndarray]) -> bool:
        # every atom of N sits under or orthogonal to every atom of M
        for a in m:
            for b in big:
                ab = a @ b
                if not (np.abs(ab).max() <= ORACLE_TOL or np.abs(ab - b).max() <= ORACLE_TOL):
                    return False
        return True

    pairs = sum(1 for i, m in enumerate(nodes) for j, big in enumerate(nodes) if i != j and below(m, big))
    return PosetCensus(len(nodes), pairs)


def cnf_clause_count(config: RayConfiguration) -> int:
    complete, incomplete = brute_force_contexts(config)
    pairs = sum(len(c) * (len(c) - 1) // 2 for c in complete + incomplete)
    return len(complete) + pairs


def census(config: RayConfiguration, enumerate_colourings: bool = True) -> dict:
    complete, incomplete = brute_force_contexts(config)
    orth = orthogonality_matrix(config)
    poset = presheaf_census(config)
    colourable = naive_colourable(config)
    out = {
        "dimension": config.dim,
        "rays": len(config),
        "orthogonal_pairs": int(np.triu(orth, 1).sum()),
        "complete_contexts": len(complete),
        "maximal_contexts": len(complete) + len(incomplete),
        "poset_nodes": poset.nodes,
        "poset_order_pairs": poset.order_pairs,
        "cnf_variables": len(config),
        "cnf_clauses": cnf_clause_count(config),
        "expected_verdict": "SAT" if colourable else "UNSAT",
    }
    if enumerate_colourings and len(config) <= 22:
        out["two_valued_measures"] = count_colourings(config)
    return out
