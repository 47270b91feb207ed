"""Command-line entry point: ``qmetric <verb> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from qmetric import __version__
from qmetric import analysis, hyperbolic, io, modulus as mod, suites, transforms
from qmetric.generators import KINDS, GeneratorSpec, generate
from qmetric.graphs import WeightedGraph
from qmetric.space import default_radii, structure_report


def _parse_value(text: str):
    try:
        return io._point_id(json.loads(text))
    except json.JSONDecodeError:
        return text


def _parse_id(container, text: str):
    """Resolve a CLI point id: JSON first (ints, arrays), then the raw string."""
    value = _parse_value(text)
    if value in container:
        return value
    if text in container:
        return text
    raise SystemExit(f"unknown point id {text!r}")


def _parse_ids(container, text: str) -> tuple:
    value = _parse_value(text)
    if isinstance(value, tuple) and value not in container:
        return tuple(value)
    return tuple(_parse_id(container, t) for t in text.split(","))


def _emit(args, payload: dict, passed: bool = True) -> int:
    report = {"command": sys.argv[1:] if args.argv is None else args.argv,
              "version": __version__, "seed": args.seed} | payload
    if "passed" not in report:
        report["passed"] = passed
    text = io.dumps(report)
    if args.out and not getattr(args, "out_is_data", False):
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0 if report["passed"] else 1


def _inputs(*paths) -> dict:
    return {str(p): io.file_hash(p) for p in paths}


# ---------------------------------------------------------------------------
# verbs


def cmd_generate(args):
    params = {}
    for item in args.param or []:
        key, _, val = item.partition("=")
        params[key] = _parse_value(val)
        if isinstance(params[key], tuple):
            params[key] = list(params[key])
    obj = generate(GeneratorSpec(args.kind, params), args.seed)
    if not args.out:
        raise SystemExit("generate needs --out")
    if isinstance(obj, WeightedGraph):
        io.write_graph(obj, args.out)
    else:
        io.write_space(obj, args.out)
    return 0


def cmd_report(args):
    ms = io.read_measured(args.space)
    rep = structure_report(ms, resolved_only=args.resolved_only)
    return _emit(args, {"inputs": _inputs(args.space), "structure": rep.to_dict()})


def _deform(args, func):
    if not args.out:
        raise SystemExit(f"{args.verb} needs --out for the deformed space")
    ms = io.read_measured(args.space)
    out, record = func(ms)
    io.write_space(out, args.out)
    rec_path = Path(str(args.out) + ".record.json")
    payload = {"inputs": _inputs(args.space), "output": str(args.out),
               "record": record.to_dict()}
    rec_path.write_text(io.dumps(payload) + "\n")
    print(io.dumps(payload))
    ok = record.within_bound
    return 0 if ok in (None, True) else 1


def cmd_sphericalize(args):
    return _deform(args, lambda ms: transforms.sphericalize_record(
        ms, _parse_id(ms.space, args.base)))


def cmd_flatten(args):
    return _deform(args, lambda ms: transforms.flatten_record(
        ms, _parse_id(ms.space, args.base)))


def cmd_chain_metrize(args):
    def run(ms):
        out, rec = transforms.chain_metrize(ms.space)
        return io.space_from_dict(io.space_to_dict(out) | {"mass": ms.mass}), rec
    return _deform(args, run)


def cmd_david_semmes(args):
    return _deform(args, lambda ms: transforms.david_semmes(ms, args.epsilon))


def cmd_roundtrip(args):
    ms = io.read_measured(args.space)
    rep = transforms.roundtrip(ms, _parse_id(ms.space, args.base))
    ok = rep.max_rel_error <= args.tol and rep.bilipschitz <= rep.bound * (1 + 1e-9)
    return _emit(args, {"inputs": _inputs(args.space), "roundtrip": rep.to_dict()}, ok)


def cmd_cross_ratio(args):
    s = io.read_measured(args.space).space
    ids = [_parse_id(s, t) for t in args.points]
    r = analysis.cross_ratio(s, *ids)
    payload = {"inputs": _inputs(args.space), "cross_ratio": r}
    if len(set(ids)) == 4:
        chk = analysis.cross_ratio_triple_check(s, ids)
        payload["triple"] = {"ratio": chk.ratio, "bound": chk.bound, "ok": chk.ok}
    return _emit(args, payload)


def cmd_profile(args):
    fmap = io.read_map(args.map)
    fn = analysis.qs_profile if args.kind == "qs" else analysis.qm_profile
    prof = fn(fmap, args.budget, args.seed)
    payload = {"inputs": _inputs(args.map), "profile": prof.to_dict(args.threshold)}
    payload["profile"]["jump"] = prof.has_jump(args.jump_slope)
    if args.csv:
        io.write_csv(args.csv, ["t", "envelope"], zip(prof.env_t.tolist(),
                                                     prof.env_v.tolist()))
    return _emit(args, payload)


def cmd_weak_qm(args):
    fmap = io.read_map(args.map)
    res = analysis.weak_qm_check(fmap, args.h, args.H, args.budget, args.seed)
    return _emit(args, {"inputs": _inputs(args.map), "ok": res.ok,
                        "worst_image": res.value, "witness": res.witness}, res.ok)


def cmd_three_point(args):
    fmap = io.read_map(args.map)
    res = analysis.three_point_condition(fmap, args.lam)
    return _emit(args, {"inputs": _inputs(args.map), "ok": res.ok,
                        "best_lambda": res.value, "witness": res.witness}, res.ok)


def cmd_decay(args):
    ms = io.read_measured(args.space)
    cert = analysis.decay_exponent(ms, resolved_only=not args.all_scales)
    return _emit(args, {"inputs": _inputs(args.space), "decay": cert.to_dict()},
                 cert.ok is not False)


def cmd_delta(args):
    g = io.read_graph(args.graph)
    rep = hyperbolic.delta_hyperbolicity(g, alternatives=args.alternatives, seed=args.seed)
    return _emit(args, {"inputs": _inputs(args.graph), "delta": rep.delta,
                        "base": rep.base, "witness": rep.witness,
                        "alternative_max": rep.alternative_max})


def _boundary_out(args, bq):
    if args.space_out:
        io.write_space(bq.table, args.space_out)
    return _emit(args, {"inputs": _inputs(args.graph), "boundary": bq.to_dict()},
                 bq.sandwich.ok or not bq.sandwich.asserted)


def cmd_bourdon(args):
    g = io.read_graph(args.graph)
    return _boundary_out(args, hyperbolic.bourdon(g, args.boundary, args.eps))


def cmd_hamenstadt(args):
    g = io.read_graph(args.graph)
    omega = _parse_id(g, args.omega)
    return _boundary_out(args, hyperbolic.hamenstadt(g, omega, args.boundary, args.eps))


def cmd_duality(args):
    g = io.read_graph(args.graph)
    omega = _parse_id(g, args.omega)
    rep = hyperbolic.regularity_duality_check(g, args.boundary, omega, args.eps,
                                              tolerance=args.agree_tol)
    return _emit(args, {"inputs": _inputs(args.graph), "duality": rep.to_dict()},
                 rep.agree and rep.identity_error <= args.tol)


def cmd_modulus(args):
    g = io.read_graph(args.graph)
    prob = mod.ModulusProblem(g, _parse_ids(g, args.E), _parse_ids(g, args.F), args.Q)
    sol = mod.modulus(prob, args.feas_tol, args.max_iter, args.gap_tol)
    return _emit(args, {"inputs": _inputs(args.graph), "modulus": sol.to_dict()},
                 sol.converged)


def _suite_graph(name: str):
    kind, _, n = name.partition(":")
    if kind != "grid" or not n.isdigit():
        raise SystemExit(f"unsupported scan suite {name!r}; use grid:<n>")
    return int(n)


def cmd_loewner_scan(args):
    n = _suite_graph(args.suite)
    from qmetric.generators import grid
    g = grid(n)
    scan = mod.loewner_scan(g, mod.concentric_pairs(n), args.Q, feas_tol=args.feas_tol)
    header = ["pair_id", "delta", "modulus", "iterations", "converged"]
    if args.out:
        io.write_csv(args.out, header, scan.rows())
    payload = {"points": len(scan.points), "envelope": scan.envelope,
               "flagged": [p.pair_id for p in scan.points if p.disconnected]}
    args.out_is_data = True
    return _emit(args, payload, all(p.converged for p in scan.points))


def cmd_conformal_check(args):
    if args.graph:
        g = io.read_graph(args.graph)
        E, F = _parse_ids(g, args.E), _parse_ids(g, args.F)
        base = _parse_id(g, args.base)
    else:
        from qmetric.generators import grid
        n = _suite_graph(args.suite)
        g = grid(n, length=1.0 / (n - 1))
        base = _parse_id(g, args.base) if args.base else (0, 0)
        E = tuple(v for v in g.boundary["left"] if v != base)
        F = tuple(v for v in g.boundary["right"] if v != base)
    rep = mod.conformal_invariance_check(g, base, E, F, args.Q, args.mode, args.budget,
                                         args.feas_tol)
    return _emit(args, {"conformal": rep.to_dict()}, rep.ok)


def cmd_suite(args):
    rep = suites.run_suite(args.name, args.seed, args.tol)
    payload = rep.to_dict()
    payload.pop("seed", None)
    payload.pop("version", None)
    return _emit(args, payload)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, suppress):
        def default(value):
            return argparse.SUPPRESS if suppress else value
        parser.add_argument("--out", default=default(None),
                            help="output path (report, space file, or CSV)")
        parser.add_argument("--seed", type=int, default=default(0),
                            help="seed for all sampling")
        parser.add_argument("--tol", type=float, default=default(1e-12),
                            help="relative tolerance for exact identities")

    # global flags may appear before or after the verb
    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, suppress=True)
    p = argparse.ArgumentParser(prog="qmetric", description=__doc__.splitlines()[0])
    global_flags(p, suppress=False)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = verb("generate", cmd_generate, "write a generated space or graph")
    sp.add_argument("--kind", choices=KINDS, required=True)
    sp.add_argument("--param", action="append", metavar="KEY=VALUE",
                    help="generator parameter, value parsed as JSON when possible")

    sp = verb("report", cmd_report, "structural constants of a space")
    sp.add_argument("space")
    sp.add_argument("--resolved-only", action="store_true")

    for name, func in (("sphericalize", cmd_sphericalize), ("flatten", cmd_flatten),
                       ("roundtrip", cmd_roundtrip)):
        sp = verb(name, func, f"{name} at a base point")
        sp.add_argument("space")
        sp.add_argument("--base", required=True)
    sp = verb("chain-metrize", cmd_chain_metrize, "shortest-chain metric")
    sp.add_argument("space")
    sp = verb("david-semmes", cmd_david_semmes, "ball-measure deformation")
    sp.add_argument("space")
    sp.add_argument("--epsilon", type=float, default=0.5)

    sp = verb("cross-ratio", cmd_cross_ratio, "cross ratio of four points")
    sp.add_argument("space")
    sp.add_argument("points", nargs=4)
    sp = verb("profile", cmd_profile, "distortion envelope of a map")
    sp.add_argument("map")
    sp.add_argument("--kind", choices=("qs", "qm"), default="qm")
    sp.add_argument("--budget", type=int, default=analysis.EXHAUSTIVE_LIMIT)
    sp.add_argument("--threshold", type=float, default=analysis.EVIDENCE_THRESHOLD,
                    help="evidence threshold on the envelope at the 10%% quantile")
    sp.add_argument("--jump-slope", type=float, default=analysis.JUMP_SLOPE)
    sp.add_argument("--csv", help="write the envelope steps to this CSV")
    sp = verb("weak-qm", cmd_weak_qm, "(h, H) weak quasimobius check")
    sp.add_argument("map")
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--H", type=float, required=True)
    sp.add_argument("--budget", type=int, default=analysis.EXHAUSTIVE_LIMIT)
    sp = verb("three-point", cmd_three_point, "lambda three-point condition")
    sp.add_argument("map")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp = verb("decay", cmd_decay, "measure decay certificate")
    sp.add_argument("space")
    sp.add_argument("--all-scales", action="store_true",
                    help="include balls below the nearest-neighbour distance")

    sp = verb("delta", cmd_delta, "four-point hyperbolicity constant")
    sp.add_argument("graph")
    sp.add_argument("--alternatives", type=int, default=0)
    for name, func in (("bourdon", cmd_bourdon), ("hamenstadt", cmd_hamenstadt),
                       ("duality", cmd_duality)):
        sp = verb(name, func, "regularity on both boundary sides" if name == "duality"
                  else f"{name} boundary quasimetric")
        sp.add_argument("graph")
        sp.add_argument("--eps", type=float, required=True)
        sp.add_argument("--boundary", default="leaves")
        if name != "bourdon":
            sp.add_argument("--omega", required=True)
        if name == "duality":
            sp.add_argument("--agree-tol", type=float, default=0.15)
        else:
            sp.add_argument("--space-out", help="write the boundary quasimetric here")

    def solver_flags(sp):
        sp.add_argument("--Q", type=float, default=2.0)
        sp.add_argument("--feas-tol", type=float, default=mod.FEAS_TOL)
        sp.add_argument("--gap-tol", type=float, default=mod.GAP_TOL)
        sp.add_argument("--max-iter", type=int, default=mod.MAX_ITER)

    sp = verb("modulus", cmd_modulus, "discrete Q-modulus of E-F paths")
    sp.add_argument("graph")
    sp.add_argument("--E", required=True, help="comma-separated ids or a JSON array")
    sp.add_argument("--F", required=True)
    solver_flags(sp)
    sp = verb("loewner-scan", cmd_loewner_scan, "modulus against relative separation")
    sp.add_argument("--suite", default="grid:9")
    solver_flags(sp)
    sp = verb("conformal-check", cmd_conformal_check, "modulus under spherical reweighting")
    sp.add_argument("--base")
    sp.add_argument("--graph")
    sp.add_argument("--E")
    sp.add_argument("--F")
    sp.add_argument("--suite", default="grid:9")
    sp.add_argument("--mode", choices=("pointwise", "consistent"), default="pointwise")
    sp.add_argument("--budget", type=float, default=0.05)
    solver_flags(sp)

    sp = verb("suite", cmd_suite, "run a named acceptance suite")
    sp.add_argument("name", choices=suites.SUITES)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else None
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
