"""Exact search for two-valued measures (Kochen-Specker colourings).

The constraint model has one boolean per ray.  A complete context (d mutually
orthogonal rays) must contain exactly one true ray; a maximal incomplete
orthogonal set at most one.  Search is a deterministic DPLL-style
backtracking with two propagation rules:

* a ray set to 1 forces every orthogonal ray to 0;
* a complete context with all rays but one at 0 forces the last one to 1.

Branching picks the unsatisfied complete context with the fewest open rays
(ties: lowest context index) and decides its lowest open ray, 1 before 0.
UNSAT outcomes carry the full decision tree; every leaf names a context
that is violated after propagation, which :func:`verify_certificate` replays
with its own closure-based propagation.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

from .errors import CorruptCertificate, HashMismatch
from .measures import check_probability_measure, measure_from_ray_assignment
from .projlattice import RayConfiguration, maximal_orthogonal_sets, projection_family

SAT, UNSAT, INDETERMINATE = "SAT", "UNSAT", "INDETERMINATE"
DEFAULT_BUDGET = 10**8
CERTIFICATE_FORMAT = "kslat-certificate"
CERTIFICATE_VERSION = 1


@dataclass(frozen=True)
class ColoringConstraintModel:
    num_vars: int
    labels: tuple[str, ...]
    exactly_one: tuple[tuple[int, ...], ...]
    at_most_one: tuple[tuple[int, ...], ...]
    # Shared sub-contexts of rank-1 atoms are shared rays, i.e. shared
    # variables, so no separate equality clauses arise for ray configurations.
    equalities: tuple[tuple[int, int], ...] = ()
    orthogonal: tuple[frozenset[int], ...] = ()
    config_hash: str = ""

    @property
    def contexts(self) -> tuple[tuple[int, ...], ...]:
        """Complete contexts first, then incomplete ones; indices used in certificates."""
        return self.exactly_one + self.at_most_one


def build_constraint_model(config: RayConfiguration) -> ColoringConstraintModel:
    # same sets and order as enumerate_contexts, without building the atoms
    cliques = maximal_orthogonal_sets(config)
    return ColoringConstraintModel(
        num_vars=len(config),
        labels=config.labels,
        exactly_one=tuple(c for c in cliques if len(c) == config.dim),
        at_most_one=tuple(c for c in cliques if len(c) != config.dim),
        orthogonal=config.adjacency,
        config_hash=config.hash,
    )


@dataclass
class SearchStats:
    nodes: int = 0
    backtracks: int = 0
    wall_time: float = 0.0

    def merge(self, other: "SearchStats") -> None:
        self.nodes += other.nodes
        self.backtracks += other.backtracks


@dataclass
class SearchOutcome:
    verdict: str
    config_hash: str
    witness: tuple[int, ...] | None = None
    tree: Any = None
    stats: SearchStats = field(default_factory=SearchStats)

    @property
    def sat(self) -> bool:
        return self.verdict == SAT

    def describe(self) -> str:
        if self.verdict == SAT:
            return "configuration is colorable (a two-valued measure exists on this finite family)"
        if self.verdict == UNSAT:
            return "no two-valued measure exists within this configuration family"
        return "search budget exhausted before a verdict"

    def to_certificate(self) -> dict:
        return {
            "format": CERTIFICATE_FORMAT,
            "version": CERTIFICATE_VERSION,
            "kind": "ks-search",
            "config_hash": self.config_hash,
            "verdict": self.verdict,
            "witness": list(self.witness) if self.witness is not None else None,
            "tree": self.tree,
            "statistics": {"nodes": self.stats.nodes, "backtracks": self.stats.backtracks},
        }


class _Budget(Exception):
    pass


class _Solver:
    def __init__(self, model: ColoringConstraintModel, budget: int):
        self.m = model
        self.budget = budget
        self.stats = SearchStats()
        n = model.num_vars
        self.val = [-1] * n
        self.trail: list[int] = []
        self.complete_of: list[list[int]] = [[] for _ in range(n)]
        for k, ctx in enumerate(model.exactly_one):
            for i in ctx:
                self.complete_of[i].append(k)
        self.pair_ctx: dict[tuple[int, int], int] = {}
        for k, ctx in enumerate(model.contexts):
            for a, b in itertools.combinations(ctx, 2):
                self.pair_ctx.setdefault((a, b), k)

    def _conflict_pair(self, a: int, b: int) -> int:
        return self.pair_ctx[(min(a, b), max(a, b))]

    def assign(self, var: int, value: int) -> int | None:
        """Assign and propagate; returns a violated context index or None."""
        queue = [(var, value)]
        while queue:
            x, v = queue.pop()
            cur = self.val[x]
            if cur == v:
                continue
            if cur != -1:
                return self._clash_context(x)
            self.val[x] = v
            self.trail.append(x)
            if v == 1:
                for y in self.m.orthogonal[x]:
                    if self.val[y] == 1:
                        return self._conflict_pair(x, y)
                    if self.val[y] == -1:
                        queue.append((y, 0))
            else:
                for k in self.complete_of[x]:
                    ctx = self.m.exactly_one[k]
                    open_, ones = [], 0
                    for y in ctx:
                        if self.val[y] == 1:
                            ones += 1
                        elif self.val[y] == -1:
                            open_.append(y)
                    if ones == 0 and not open_:
                        return k
                    if ones == 0 and len(open_) == 1:
                        queue.append((open_[0], 1))
        return None

    def _clash_context(self, x: int) -> int:
        if self.val[x] == 1:
            # x is true and was forced false by a true orthogonal ray
            for y in self.m.orthogonal[x]:
                if self.val[y] == 1:
                    return self._conflict_pair(x, y)
        # x is false and was forced true by a complete context with no other open ray
        for k in self.complete_of[x]:
            if all(self.val[y] == 0 for y in self.m.exactly_one[k]):
                return k
        return self.complete_of[x][0]

    def undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            self.val[self.trail.pop()] = -1

    def choose(self) -> int | None:
        best = None
        for k, ctx in enumerate(self.m.exactly_one):
            open_ = [y for y in ctx if self.val[y] == -1]
            if any(self.val[y] == 1 for y in ctx):
                continue
            if best is None or len(open_) < best[0]:
                best = (len(open_), k, min(open_))
        return None if best is None else best[2]

    def solve(self, enumerate_all: bool = False, sink: list | None = None):
        """Returns (verdict, tree); ``sink`` collects witnesses when enumerating."""
        self.stats.nodes += 1
        if self.stats.nodes > self.budget:
            raise _Budget
        var = self.choose()
        if var is None and enumerate_all:
            var = next((i for i, v in enumerate(self.val) if v == -1), None)
        if var is None:
            witness = tuple(max(v, 0) for v in self.val)
            if sink is not None:
                sink.append(witness)
            return SAT, {"sat": True}
        children = {}
        verdict = UNSAT
        for value in (1, 0):
            mark = len(self.trail)
            conflict = self.assign(var, value)
            if conflict is not None:
                sub = (UNSAT, {"conflict": conflict})
            else:
                sub = self.solve(enumerate_all, sink)
            self.undo(mark)
            children["one" if value else "zero"] = sub[1]
            if sub[0] == SAT:
                verdict = SAT
                if not enumerate_all:
                    return SAT, None
            else:
                self.stats.backtracks += 1
        return verdict, {"decide": var, **children}


def _replay_path(solver: _Solver, path: Sequence[tuple[int, int]]) -> int | None:
    for var, value in path:
        conflict = solver.assign(var, value)
        if conflict is not None:
            return conflict
    return None


def _solve_subtree(model: ColoringConstraintModel, path: tuple[tuple[int, int], ...], budget: int):
    solver = _Solver(model, budget)
    conflict = _replay_path(solver, path)
    if conflict is not None:
        return UNSAT, {"conflict": conflict}, None, solver.stats
    sink: list = []
    try:
        verdict, tree = solver.solve(False, sink)
    except _Budget:
        return INDETERMINATE, None, None, solver.stats
    return verdict, tree, (sink[0] if sink else None), solver.stats


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("KSLAT_THREADS", "1")))
    except ValueError:
        return 1


def search_two_valued_measure(config: RayConfiguration | ColoringConstraintModel,
                              budget: int = DEFAULT_BUDGET, workers: int | None = None) -> SearchOutcome:
    """Decide whether the configuration admits a two-valued measure.

    With ``workers > 1`` (default from ``KSLAT_THREADS``) the top levels of
    the decision tree are split into independent subtrees solved in worker
    processes; verdict, witness and certificate are assembled in subtree
    order and are identical to the sequential ones.
    """
    model = config if isinstance(config, ColoringConstraintModel) else build_constraint_model(config)
    workers = _workers() if workers is None else workers
    start = time.perf_counter()
    if workers <= 1:
        verdict, tree, witness, stats = _solve_subtree(model, (), budget)
    else:
        verdict, tree, witness, stats = _split_solve(model, budget, workers)
    stats.wall_time = time.perf_counter() - start
    if verdict != UNSAT:
        tree = None
    return SearchOutcome(verdict, model.config_hash, witness, tree, stats)


def _split_solve(model: ColoringConstraintModel, budget: int, workers: int):
    depth = max(1, math.ceil(math.log2(workers)))
    frontier: list[tuple[tuple[int, int], ...]] = []
    stats = SearchStats()

    def expand(path: tuple, level: int):
        solver = _Solver(model, budget)
        conflict = _replay_path(solver, path)
        stats.nodes += 1
        if conflict is not None:
            return {"conflict": conflict}
        if level == depth:
            frontier.append(path)
            return {"frontier": len(frontier) - 1}
        var = solver.choose()
        if var is None:
            frontier.append(path)
            return {"frontier": len(frontier) - 1}
        return {"decide": var, "one": expand(path + ((var, 1),), level + 1),
                "zero": expand(path + ((var, 0),), level + 1)}

    skeleton = expand((), 0)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_solve_subtree, [model] * len(frontier), frontier, [budget] * len(frontier)))
    for r in results:
        stats.merge(r[3])
    for verdict, _, witness, _ in results:
        if verdict == SAT:
            return SAT, None, witness, stats
    if any(r[0] == INDETERMINATE for r in results):
        return INDETERMINATE, None, None, stats

    def fill(node):
        if "frontier" in node:
            return results[node["frontier"]][1]
        if "decide" in node:
            return {"decide": node["decide"], "one": fill(node["one"]), "zero": fill(node["zero"])}
        return node

    return UNSAT, fill(skeleton), None, stats


def enumerate_two_valued_measures(config: RayConfiguration | ColoringConstraintModel,
                                  budget: int = DEFAULT_BUDGET) -> list[tuple[int, ...]]:
    """Every 0/1 ray assignment satisfying the model (free rays included)."""
    model = config if isinstance(config, ColoringConstraintModel) else build_constraint_model(config)
    solver = _Solver(model, budget)
    sink: list = []
    solver.solve(True, sink)
    return sorted(sink)


# verification ----------------------------------------------------------------------


@dataclass
class CertificateCheck:
    ok: bool
    reason: str = ""
    context: tuple[str, ...] | None = None

    def __bool__(self) -> bool:
        return self.ok


def _closure(model: ColoringConstraintModel, path: Sequence[tuple[int, int]]):
    """Monotone closure of forced zeros/ones under the two propagation rules."""
    zeros = {x for x, v in path if v == 0}
    ones = {x for x, v in path if v == 1}
    changed = True
    while changed:
        changed = False
        for x in list(ones):
            new = model.orthogonal[x] - zeros
            if new:
                zeros |= new
                changed = True
        for ctx in model.exactly_one:
            for y in ctx:
                if y not in ones and all(z in zeros for z in ctx if z != y):
                    ones.add(y)
                    changed = True
    return zeros, ones


def _violated(model: ColoringConstraintModel, k: int, zeros: set, ones: set) -> bool:
    ctx = model.contexts[k]
    if k < len(model.exactly_one) and all(y in zeros for y in ctx):
        return True
    if sum(1 for y in ctx if y in ones) >= 2:
        return True
    return any(y in zeros and y in ones for y in ctx)


def _check_witness(model: ColoringConstraintModel, config: RayConfiguration, witness) -> CertificateCheck:
    if len(witness) != model.num_vars or any(w not in (0, 1) for w in witness):
        raise CorruptCertificate("witness has the wrong shape")
    for k, ctx in enumerate(model.contexts):
        total = sum(witness[i] for i in ctx)
        if total > 1 or (k < len(model.exactly_one) and total != 1):
            names = tuple(model.labels[i] for i in ctx)
            return CertificateCheck(False, f"context {{{', '.join(names)}}} has {total} true rays", names)
    family = projection_family(config)
    report = check_probability_measure(measure_from_ray_assignment(config, family, witness).values, family)
    if not report.passed:
        v = report.violations[0]
        return CertificateCheck(False, f"{v.kind} violation on {v.labels}", v.labels)
    return CertificateCheck(True, "witness is a two-valued measure")


def _replay_tree(model: ColoringConstraintModel, tree: Any) -> CertificateCheck:
    stack: list[tuple[Any, tuple]] = [(tree, ())]
    leaves = 0
    while stack:
        node, path = stack.pop()
        if not isinstance(node, dict):
            raise CorruptCertificate("tree node is not an object")
        if "conflict" in node:
            k = node["conflict"]
            if not isinstance(k, int) or not 0 <= k < len(model.contexts):
                raise CorruptCertificate(f"bad context index {k!r}")
            zeros, ones = _closure(model, path)
            if not _violated(model, k, zeros, ones):
                names = tuple(model.labels[i] for i in model.contexts[k])
                return CertificateCheck(False, f"leaf at depth {len(path)} does not refute context {names}", names)
            leaves += 1
        elif "decide" in node:
            var = node["decide"]
            if not isinstance(var, int) or not 0 <= var < model.num_vars:
                raise CorruptCertificate(f"bad decision variable {var!r}")
            if "one" not in node or "zero" not in node:
                return CertificateCheck(False, f"branch on {model.labels[var]} is not binary-complete")
            stack.append((node["one"], path + ((var, 1),)))
            stack.append((node["zero"], path + ((var, 0),)))
        else:
            raise CorruptCertificate(f"unknown tree node keys {sorted(node)}")
    return CertificateCheck(True, f"decision tree replayed: {leaves} refuted leaves")


def verify_certificate(outcome: SearchOutcome | dict, config: RayConfiguration) -> CertificateCheck:
    """Independently re-check a search outcome against the configuration."""
    cert = outcome.to_certificate() if isinstance(outcome, SearchOutcome) else outcome
    if not isinstance(cert, dict) or cert.get("format") != CERTIFICATE_FORMAT or cert.get("kind") != "ks-search":
        raise CorruptCertificate("not a ks-search certificate")
    if cert.get("version") != CERTIFICATE_VERSION:
        raise CorruptCertificate(f"unsupported certificate version {cert.get('version')!r}")
    if cert.get("config_hash") != config.hash:
        raise HashMismatch(f"certificate is for {cert.get('config_hash')}, configuration is {config.hash}")
    model = build_constraint_model(config)
    verdict = cert.get("verdict")
    if verdict == SAT:
        if cert.get("witness") is None:
            raise CorruptCertificate("SAT certificate without witness")
        return _check_witness(model, config, cert["witness"])
    if verdict == UNSAT:
        if cert.get("tree") is None:
            raise CorruptCertificate("UNSAT certificate without decision tree")
        return _replay_tree(model, cert["tree"])
    if verdict == INDETERMINATE:
        return CertificateCheck(False, "indeterminate outcomes certify nothing")
    raise CorruptCertificate(f"unknown verdict {verdict!r}")


def load_certificate(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptCertificate(f"certificate is not valid JSON: {exc}") from None


# CNF export ------------------------------------------------------------------------


@dataclass(frozen=True)
class CnfDocument:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    varmap: dict

    @property
    def text(self) -> str:
        lines = [f"p cnf {self.num_vars} {len(self.clauses)}"]
        lines += [" ".join(map(str, c)) + " 0" for c in self.clauses]
        return "\n".join(lines) + "\n"

    def sidecar(self) -> str:
        return json.dumps(self.varmap, indent=2, sort_keys=True) + "\n"


def export_cnf(model: ColoringConstraintModel) -> CnfDocument:
    """DIMACS CNF: exactly-one = one positive clause + pairwise negatives;
    at-most-one = pairwise negatives.  Variable k+1 is ray k."""
    clauses: list[tuple[int, ...]] = []
    for ctx in model.exactly_one:
        clauses.append(tuple(i + 1 for i in ctx))
        clauses += [(-(a + 1), -(b + 1)) for a, b in itertools.combinations(ctx, 2)]
    for ctx in model.at_most_one:
        clauses += [(-(a + 1), -(b + 1)) for a, b in itertools.combinations(ctx, 2)]
    varmap = {
        "config_hash": model.config_hash,
        "variables": {str(i + 1): {"ray": i, "label": label} for i, label in enumerate(model.labels)},
    }
    return CnfDocument(model.num_vars, tuple(clauses), varmap)


def iter_tree_leaves(tree: Any) -> Iterator[dict]:
    stack = [tree]
    while stack:
        node = stack.pop()
        if "decide" in node:
            stack += [node["zero"], node["one"]]
        else:
            yield node
