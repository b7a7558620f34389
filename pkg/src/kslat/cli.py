"""Command-line entry point: ``kslat ks|algebra|gleason|verify``.

Exit codes: 0 SAT / success, 1 UNSAT / rejected certificate,
2 INDETERMINATE, 3 and above for errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .algebra import (
    DensityOperator,
    FiniteAlgebra,
    decompose_center,
    fractional_witness,
    gleason_measure,
    gns_construct,
    multiplicative_no_go_witness,
    verify_no_go_certificate,
)
from .datasets import resolve_path
from .errors import BadDensitySpec, CorruptCertificate, HashMismatch, KslatError, ParseError
from .exact import Surd
from .linalg import Operator
from .measures import check_probability_measure
from .presheaf import (
    build_spectral_presheaf,
    enumerate_global_sections,
    global_section_search,
    point_measure_classify,
    section_to_assignment,
    state_presheaf_section,
    verify_section_certificate,
)
from .projlattice import RayConfiguration, load_ray_configuration, projection_family
from .search import (
    INDETERMINATE,
    SAT,
    UNSAT,
    DEFAULT_BUDGET,
    build_constraint_model,
    enumerate_two_valued_measures,
    export_cnf,
    load_certificate,
    search_two_valued_measure,
    verify_certificate,
)

REPORT_SCHEMA = "kslat-run-report"
REPORT_VERSION = 1
EXIT_SAT, EXIT_UNSAT, EXIT_INDETERMINATE, EXIT_ERROR = 0, 1, 2, 3
VERDICT_EXIT = {SAT: EXIT_SAT, UNSAT: EXIT_UNSAT, INDETERMINATE: EXIT_INDETERMINATE}


class _Parser(argparse.ArgumentParser):
    # argparse's default exit status 2 would collide with INDETERMINATE
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR + 1, f"{self.prog}: error: {message}\n")


# output helpers ------------------------------------------------------------------


def _jsonable(x: Any) -> Any:
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else x.numerator
    if isinstance(x, Surd):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return x.real if x.imag == 0 else [x.real, x.imag]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def dumps(data: Any) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _report(command: str, arguments: dict, config_hash: str | None, verdicts: list[dict],
            statistics: dict, certificate_path: str | None = None, seed: int | None = None,
            **extra) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "command": command,
        "arguments": arguments,
        "config_hash": config_hash,
        "verdicts": verdicts,
        "statistics": statistics,
        "certificate_path": certificate_path,
        "tool_version": __version__,
        "seed": seed,
        **extra,
    }


def _verdict(operation: str, module: str, verdict: str, **detail) -> dict:
    return {"operation": operation, "module": module, "verdict": verdict, **detail}


def _load_config(path: str, mode: str | None) -> RayConfiguration:
    config = load_ray_configuration(resolve_path(path))
    if mode == "exact" and not config.exact:
        raise ParseError(f"{path} declares float entries; --exact needs an exact document")
    if mode == "float" and config.exact:
        vectors = [[complex(x) for x in r.vector] for r in config.rays]
        config = RayConfiguration.from_vectors(config.dim, vectors, config.labels, mode="approximate")
    return config


def _emit(report: dict, out: Path | None, name: str) -> None:
    text = dumps(report)
    if out is not None:
        write_atomic(out / name, text)
    sys.stdout.write(text)


# ks ------------------------------------------------------------------------------


def cmd_ks(args) -> int:
    config = _load_config(args.path, args.mode)
    stem = Path(args.path).stem
    out = Path(args.out)
    outcome = search_two_valued_measure(config, budget=args.budget)
    cert = outcome.to_certificate()
    cert_path = out / f"{stem}.certificate.json"
    write_atomic(cert_path, dumps(cert))
    check = verify_certificate(load_certificate(cert_path.read_text()), config)
    labels = config.labels
    verdicts = [
        _verdict("search_two_valued_measure", "ks-search", outcome.verdict,
                 summary=outcome.describe(),
                 witness_true_rays=None if outcome.witness is None
                 else [labels[i] for i, v in enumerate(outcome.witness) if v]),
        _verdict("verify_certificate", "ks-search", "ACCEPTED" if check.ok else "REJECTED", reason=check.reason),
    ]
    stats: dict = {"rays": len(config), "dimension": config.dim,
                   "search_nodes": outcome.stats.nodes, "search_backtracks": outcome.stats.backtracks}
    extra: dict = {}
    if not args.no_presheaf:
        bundle = build_spectral_presheaf(config)
        section = global_section_search(bundle, budget=args.budget)
        sec_cert = section.to_certificate()
        sec_path = out / f"{stem}.presheaf-certificate.json"
        write_atomic(sec_path, dumps(sec_cert))
        agree = section.verdict == outcome.verdict
        if section.verdict == SAT and outcome.verdict == SAT:
            agree = verify_section_certificate(sec_cert, bundle)
        verdicts.append(_verdict("global_section_search", "presheaf", section.verdict,
                                 agrees_with_search=agree, certificate_path=str(sec_path)))
        stats.update(presheaf_nodes=len(bundle.nodes),
                     presheaf_order_pairs=sum(1 for _ in bundle.poset.order_pairs()),
                     presheaf_nodes_explored=section.nodes_explored)
    if args.enumerate_all and outcome.verdict != INDETERMINATE:
        witnesses = enumerate_two_valued_measures(config, budget=args.budget)
        extra["all_witnesses"] = [[labels[i] for i, v in enumerate(w) if v] for w in witnesses]
        stats["two_valued_measures"] = len(witnesses)
        if not args.no_presheaf:
            sections = enumerate_global_sections(bundle, budget=args.budget)
            lifted = sorted(section_to_assignment(bundle, s) for s in sections)
            verdicts.append(_verdict("enumerate_global_sections", "presheaf",
                                     "BIJECTION" if lifted == witnesses else "MISMATCH",
                                     sections=len(sections)))
    if args.export_cnf:
        cnf = export_cnf(build_constraint_model(config))
        cnf_path = Path(args.export_cnf)
        write_atomic(cnf_path, cnf.text)
        write_atomic(cnf_path.with_name(cnf_path.name + ".map.json"), cnf.sidecar())
        extra["cnf"] = {"path": str(cnf_path), "variables": cnf.num_vars, "clauses": len(cnf.clauses)}
    report = _report("ks", {"path": args.path, "mode": args.mode or config.mode, "budget": args.budget,
                            "enumerate_all": args.enumerate_all},
                     config.hash, verdicts, stats, str(cert_path), **extra)
    _emit(report, out, f"{stem}.report.json")
    return VERDICT_EXIT[outcome.verdict]


# algebra -------------------------------------------------------------------------


def cmd_algebra(args) -> int:
    algebra = FiniteAlgebra.parse(args.blocks)
    census = decompose_center(algebra)
    out = Path(args.out)
    verdicts = [_verdict("decompose_center", "gleason-gns", census.verdict)]
    certificates = []
    for b, n in enumerate(algebra.blocks):
        if n < 2:
            continue
        cert = multiplicative_no_go_witness(n)
        path = out / f"nogo-block{b + 1}-n{n}.json"
        write_atomic(path, dumps(cert.to_json()))
        ok = verify_no_go_certificate(load_certificate(path.read_text()))
        certificates.append(str(path))
        verdicts.append(_verdict("multiplicative_no_go_witness", "gleason-gns",
                                 "ACCEPTED" if ok else "REJECTED", block=b + 1, n=n, certificate_path=str(path)))
    rho = DensityOperator(Operator.diagonal([Fraction(1, algebra.dim)] * algebra.dim))
    w = fractional_witness(rho, algebra, seed=args.seed)
    verdicts.append(_verdict("fractional_witness", "gleason-gns", "FOUND" if w else "NONE",
                             state="maximally mixed", value=None if w is None else w.value,
                             block=None if w is None else w.block + 1))
    extra: dict = {"census": {**census.summary(),
                              "abelian_blocks": [b + 1 for b in census.abelian_blocks],
                              "i2_blocks": [b + 1 for b in census.i2_blocks],
                              "type_i_blocks_n_ge_3": [b + 1 for b in census.large_blocks]}}
    if census.valuation is not None:
        v = census.valuation
        gens = algebra.self_adjoint_generators()
        extra["valuation"] = {
            "rule": f"v(A) = A[{v.coordinate + 1},{v.coordinate + 1}]",
            "block": v.block + 1,
            "values_on_generators": {name: v(op) for name, op in gens.items()},
        }
    report = _report("algebra", {"blocks": list(algebra.blocks)}, None, verdicts,
                     {"dimension": algebra.dim, "no_go_certificates": len(certificates)},
                     certificates[0] if certificates else None, seed=args.seed, **extra)
    _emit(report, out, "algebra-" + "-".join(map(str, algebra.blocks)) + ".report.json")
    return EXIT_SAT


# gleason -------------------------------------------------------------------------


def _entries(text: str) -> list:
    vals = [s for s in text.replace(" ", "").split(",") if s]
    try:
        return [Surd.parse(s) for s in vals]
    except KslatError:
        try:
            return [complex(s.replace("i", "j")) for s in vals]
        except ValueError:
            raise BadDensitySpec(f"cannot parse entries {text!r}") from None


def parse_density(spec: str, config: RayConfiguration) -> DensityOperator:
    """``I`` or ``I/d``, ``e<k>``, ``diag:a,b,..``, ``vec:a,b,..`` or ``ray:<label>``."""
    d = config.dim
    try:
        if spec == "I" or spec.startswith("I/"):
            if spec != "I" and int(spec[2:]) != d:
                raise BadDensitySpec(f"{spec} does not match dimension {d}")
            return DensityOperator.maximally_mixed(d)
        if spec.startswith("e") and spec[1:].isdigit():
            k = int(spec[1:])
            if not 1 <= k <= d:
                raise BadDensitySpec(f"basis vector {spec} out of range for dimension {d}")
            return DensityOperator.pure([1 if j == k - 1 else 0 for j in range(d)])
        kind, _, body = spec.partition(":")
        if kind == "ray":
            return DensityOperator.pure(list(config.rays[config.labels.index(body)].vector))
        if kind in ("diag", "vec"):
            vals = _entries(body)
            if len(vals) != d:
                raise BadDensitySpec(f"{spec} has {len(vals)} entries, dimension is {d}")
            return DensityOperator.diagonal(vals) if kind == "diag" else DensityOperator.pure(vals)
    except (ValueError, ZeroDivisionError) as exc:
        raise BadDensitySpec(f"bad density spec {spec!r}: {exc}") from None
    except KslatError as exc:
        if isinstance(exc, BadDensitySpec):
            raise
        raise BadDensitySpec(f"bad density spec {spec!r}: {exc}") from None
    raise BadDensitySpec(f"unrecognised density spec {spec!r}")


def _analyse(rho: DensityOperator, config: RayConfiguration, family, bundle, seed: int) -> dict:
    measure = gleason_measure(rho, family)
    report = check_probability_measure(measure.values, family)
    algebra = FiniteAlgebra((config.dim,))
    w = fractional_witness(rho, algebra, seed=seed)
    section = state_presheaf_section(rho.operator, bundle)
    point = point_measure_classify(section)
    gns = gns_construct(rho.functional(), algebra)
    return {
        "measure_violations": len(report.violations),
        "measure_max_residual": report.max_residual,
        "witness_value": None if w is None else w.value,
        "edge_max_residual": section.max_residual,
        "point_measure": point.global_verdict,
        "gns_dimension": gns.dimension,
        "gns_residual": gns.residual,
    }


def cmd_gleason(args) -> int:
    config = _load_config(args.path, None)
    family = projection_family(config)
    bundle = build_spectral_presheaf(config)
    stats: dict = {"family_size": len(family), "presheaf_nodes": len(bundle.nodes)}
    if args.rho is not None:
        rho = parse_density(args.rho, config)
        r = _analyse(rho, config, family, bundle, args.seed)
        stats.update(r)
        ok = r["measure_violations"] == 0 and r["edge_max_residual"] <= 1e-12
        verdicts = [
            _verdict("gleason_measure", "gleason-gns", "PASS" if r["measure_violations"] == 0 else "FAIL"),
            _verdict("fractional_witness", "gleason-gns", "FOUND" if r["witness_value"] is not None else "NONE",
                     value=r["witness_value"]),
            _verdict("state_presheaf_section", "presheaf", "COMPATIBLE" if ok else "INCOMPATIBLE"),
            _verdict("point_measure_classify", "presheaf", r["point_measure"]),
            _verdict("gns_construct", "gleason-gns", "OK", dimension=r["gns_dimension"]),
        ]
    else:
        rng = np.random.default_rng(args.seed)
        runs = [_analyse(DensityOperator.random(config.dim, rng), config, family, bundle, args.seed)
                for _ in range(args.random)]
        values = [float(r["witness_value"]) for r in runs if r["witness_value"] is not None]
        dims: dict = {}
        for r in runs:
            dims[r["gns_dimension"]] = dims.get(r["gns_dimension"], 0) + 1
        stats.update(
            densities=len(runs),
            measure_violations=sum(r["measure_violations"] for r in runs),
            measure_max_residual=max((r["measure_max_residual"] for r in runs), default=0.0),
            edge_max_residual=max((r["edge_max_residual"] for r in runs), default=0.0),
            witnesses_found=len(values),
            witness_value_range=[min(values), max(values)] if values else None,
            gns_dimensions=dict(sorted(dims.items())),
            all_point_sections=sum(r["point_measure"] == "ALL-POINT" for r in runs),
        )
        verdicts = [
            _verdict("gleason_measure", "gleason-gns", "PASS" if stats["measure_violations"] == 0 else "FAIL",
                     densities=len(runs)),
            _verdict("fractional_witness", "gleason-gns",
                     "FOUND" if len(values) == len(runs) else "PARTIAL"),
            _verdict("state_presheaf_section", "presheaf",
                     "COMPATIBLE" if stats["edge_max_residual"] <= 1e-12 else "INCOMPATIBLE"),
        ]
    report = _report("gleason", {"path": args.path, "rho": args.rho, "random": args.random},
                     config.hash, verdicts, stats, None, seed=args.seed)
    name = f"{Path(args.path).stem}.gleason.report.json"
    _emit(report, Path(args.out) if args.out else None, name)
    return EXIT_SAT if all(v["verdict"] not in ("FAIL", "INCOMPATIBLE") for v in verdicts) else EXIT_UNSAT


# verify --------------------------------------------------------------------------


def cmd_verify(args) -> int:
    cert = load_certificate(Path(args.certificate).read_text())
    kind = cert.get("kind") if isinstance(cert, dict) else None
    try:
        if kind == "no-go-multiplicative":
            res = verify_no_go_certificate(cert)
            ok, reason = res.ok, res.reason
        else:
            if args.config is None:
                raise ParseError(f"--config is required for {kind} certificates")
            config = _load_config(args.config, None)
            if kind == "ks-search":
                res = verify_certificate(cert, config)
                ok, reason = res.ok, res.reason
            elif kind == "presheaf-section":
                ok = verify_section_certificate(cert, build_spectral_presheaf(config))
                reason = "section certificate replayed" if ok else "section certificate rejected"
            else:
                raise CorruptCertificate(f"unknown certificate kind {kind!r}")
    except (HashMismatch, CorruptCertificate) as exc:
        ok, reason = False, str(exc)
    sys.stdout.write(dumps({"certificate": args.certificate, "kind": kind,
                            "verdict": "ACCEPTED" if ok else "REJECTED", "reason": reason}))
    return EXIT_SAT if ok else EXIT_UNSAT


# entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kslat", description="Two-valued measures, valuations and contexts on finite ray sets.")
    p.add_argument("--version", action="version", version=f"kslat {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ks = sub.add_parser("ks", help="decide whether a ray set admits a two-valued measure")
    ks.add_argument("path")
    mode = ks.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
    mode.add_argument("--float", dest="mode", action="store_const", const="float")
    ks.add_argument("--export-cnf", metavar="OUT")
    ks.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    ks.add_argument("--enumerate-all", action="store_true")
    ks.add_argument("--no-presheaf", action="store_true", help="skip the presheaf cross-check")
    ks.add_argument("--out", default=".", help="directory for report and certificates")
    ks.set_defaults(func=cmd_ks)

    alg = sub.add_parser("algebra", help="central census and valuation verdict for ⊕ M_n blocks")
    alg.add_argument("blocks", help='comma-separated block sizes, e.g. "1,3"')
    alg.add_argument("--seed", type=int, default=0)
    alg.add_argument("--out", default=".")
    alg.set_defaults(func=cmd_algebra)

    gl = sub.add_parser("gleason", help="density-operator measures, witnesses and state sections")
    gl.add_argument("path")
    src = gl.add_mutually_exclusive_group(required=True)
    src.add_argument("--rho")
    src.add_argument("--random", type=int, metavar="N")
    gl.add_argument("--seed", type=int, default=0)
    gl.add_argument("--out", default=None)
    gl.set_defaults(func=cmd_gleason)

    ver = sub.add_parser("verify", help="re-check a certificate file")
    ver.add_argument("certificate")
    ver.add_argument("--config")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KslatError, OSError, ValueError) as exc:
        print(f"kslat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
