"""Command-line entry points: ``zonal``, ``bmo``, ``comm``, ``explab`` and the umbrella ``multicomm``.

Every command prints a JSON document (or CSV/markdown where asked) and
exits with 0 on success, 1 on errors.  ``explab`` runs exit with 2 when
every sample was flagged; ``zonal verify-product`` exits with 2 when the
estimate misses the product by more than three standard errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1, keeping 2 for flagged experiment runs."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(obj, out: str | None = None):
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (set, frozenset, tuple)):
        return list(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


# ----------------------------------------------------------------- zonal


def _random_unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def cmd_verify_product(args) -> int:
    from .zonal import mc_conditional_expectation, zonal_eval

    rng = np.random.default_rng(args.seed)
    xi1, xi2, eta1, eta2 = (_random_unit(rng, args.d) for _ in range(4))
    est, se = mc_conditional_expectation(args.n, args.d, xi1, xi2, eta1, eta2, int(args.samples), seed=args.seed)
    expected = float(zonal_eval(args.n, args.d, float(np.clip(xi1 @ eta1, -1, 1)))
                     * zonal_eval(args.n, args.d, float(np.clip(xi2 @ eta2, -1, 1))))
    err = abs(est - expected)
    ok = err <= 3 * se if se > 0 else err <= 1e-12
    _emit({
        "n": args.n, "d": args.d, "samples": int(args.samples), "seed": args.seed,
        "estimate": est, "standard_error": se, "expected": expected,
        "z": err / se if se > 0 else None, "pass": bool(ok),
        "vectors": {"xi1": xi1, "xi2": xi2, "eta1": eta1, "eta2": eta2},
    }, args.out)
    return 0 if ok else 2


def cmd_build_journe(args) -> int:
    from .lattice import GridSpec
    from .zonal import JourneConeSpec, PhiProfile, journe_multiplier

    raw = json.loads(Path(args.dirs).read_text())
    if isinstance(raw, dict):
        params, dirs = raw["params"], raw["dirs"]
    else:
        dirs = raw
        params = list(range(1, len(dirs) + 1))
    profile = PhiProfile.parse(args.profile) if args.profile else PhiProfile()
    spec = JourneConeSpec(tuple(params), tuple(tuple(x) for x in dirs), profile, args.N)
    co = spec.coefficients()
    desc = spec.to_json()
    desc["delta"] = co.delta
    desc["coefficients"] = list(co.values)
    if args.grid:
        m = journe_multiplier(spec, GridSpec.parse(args.grid))
        desc["grid"] = args.grid
        desc["certificate"] = m.meta["certificate"]
        desc["sup"] = m.sup()
    _emit(desc, args.out)
    return 0


def zonal_parser(prog="zonal") -> argparse.ArgumentParser:
    p = _Parser(prog=prog, description="Zonal harmonics and Journé cone multipliers.")
    sub = p.add_subparsers(dest="cmd", required=True)
    v = sub.add_parser("verify-product", help="Monte-Carlo check of the zonal product formula")
    v.add_argument("--n", type=int, required=True, help="degree")
    v.add_argument("--d", type=int, required=True, help="ambient dimension of the sphere")
    v.add_argument("--samples", type=float, default=1e6)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify_product)
    b = sub.add_parser("build-journe", help="emit a Journé cone multiplier descriptor")
    b.add_argument("--dirs", required=True, help="JSON file: list of directions, or {params, dirs}")
    b.add_argument("--N", type=int, default=41, help="degree cap")
    b.add_argument("--profile", help="profile parameters, e.g. a=0.75,b=0.25")
    b.add_argument("--grid", help="also sample on this grid, e.g. 2x16,2x16")
    b.add_argument("--out")
    b.set_defaults(func=cmd_build_journe)
    return p


# ------------------------------------------------------------------- bmo


def cmd_bmo(args) -> int:
    from .dyadic.bmo import PartitionSpec, little_bmo_norm, little_product_bmo_norm, product_bmo_norm
    from .lattice import load_field

    b = load_field(args.input)
    if args.norm == "product":
        res = product_bmo_norm(b, _int_list(args.group) if args.group else None, args.budget)
    elif args.norm == "little":
        res = little_bmo_norm(b, args.method)
    else:
        if not args.partition:
            raise ValueError("--norm little-product needs --partition")
        res = little_product_bmo_norm(b, PartitionSpec.parse(args.partition), args.budget)
    out = res.to_json()
    out["grid"] = str(b.spec)
    _emit(out, args.out)
    return 0


def bmo_parser(prog="bmo") -> argparse.ArgumentParser:
    p = _Parser(prog=prog, description="Dyadic BMO norms of a stored field.")
    p.add_argument("--input", required=True, help="field file (binary container or .json)")
    p.add_argument("--norm", choices=["product", "little", "little-product"], default="product")
    p.add_argument("--group", help="parameters grouped for the product norm, e.g. 1,2")
    p.add_argument("--partition", help='partition for little-product, e.g. "(13)(2)"')
    p.add_argument("--budget", type=int, default=8, help="rectangles per greedy union")
    p.add_argument("--method", choices=["rectangles", "sliced"], default="rectangles",
                   help="little bmo variant")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bmo)
    return p


# ------------------------------------------------------------------ comm


def cmd_norm(args) -> int:
    from .commutator import iterated_commutator, operator_norm
    from .grammar import build, parse_ops
    from .lattice import load_field

    b = load_field(args.symbol)
    descs = parse_ops(args.ops)
    ops = [build(d, b.spec) for d in descs]
    C = iterated_commutator(ops, b)
    est = operator_norm(C, args.method, args.tol, args.max_iter, seed=args.seed)
    _emit({
        "grid": str(b.spec),
        "ops": args.ops,
        "descriptor": C.descriptor,
        "estimate": est.value,
        "method": est.method,
        "iterations": est.iterations,
        "residual": est.residual,
        "converged": est.converged,
        "seed": args.seed,
    }, args.out)
    return 0


def comm_parser(prog="comm") -> argparse.ArgumentParser:
    p = _Parser(prog=prog, description="Iterated commutator norms.")
    sub = p.add_subparsers(dest="cmd", required=True)
    n = sub.add_parser("norm", help="estimate ||[T_1,[...,[T_l,b]]]||")
    n.add_argument("--ops", required=True, help='operators separated by "|", outermost first')
    n.add_argument("--symbol", required=True, help="field file holding b")
    n.add_argument("--method", choices=["power", "dense", "lanczos"], default="power")
    n.add_argument("--tol", type=float, default=1e-6)
    n.add_argument("--max-iter", type=int, default=500)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out")
    n.set_defaults(func=cmd_norm)
    return p


# ---------------------------------------------------------------- explab


def _load_config(args, experiment=None):
    from .explab import ExperimentConfig

    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if experiment:
        changes["experiment"] = experiment
    for key in ("samples", "seed", "workers", "method"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    return cfg.replace(**changes) if changes else cfg


def _run_experiment(args, experiment) -> int:
    from .explab import exit_code, run

    cfg = _load_config(args, experiment)
    report = run(cfg)
    out = args.out or cfg.output
    if out:
        report.save(out)
    else:
        _emit(report.dumps())
    s = report.summary
    print(f"{experiment}: {s['rows']} rows, {s['flagged']} flagged, band {s.get('band')}", file=sys.stderr)
    return exit_code(report)


def cmd_two_sided(args) -> int:
    return _run_experiment(args, "two-sided")


def cmd_shift_bound(args) -> int:
    return _run_experiment(args, "shift-bound")


def cmd_report(args) -> int:
    from .explab import RatioReport

    report = RatioReport.load(args.input)
    text = {"csv": report.to_csv, "md": report.to_markdown, "json": report.dumps}[args.format]()
    _emit(text, args.out)
    return 0


def cmd_gen_symbol(args) -> int:
    from .explab import gen_symbol
    from .lattice import save_field

    cfg = _load_config(args)
    b = gen_symbol(cfg, args.sample)
    save_field(b, args.out)
    print(json.dumps({"grid": cfg.grid, "kind": cfg.symbol_kind, "sample": args.sample, "out": args.out}))
    return 0


def explab_parser(prog="explab") -> argparse.ArgumentParser:
    p = _Parser(prog=prog, description="Seeded commutator experiments with reproducible reports.")
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, func, text in [
        ("two-sided", cmd_two_sided, "little product BMO norm against commutator norms"),
        ("shift-bound", cmd_shift_bound, "commutators with dyadic shifts against the complexity weight"),
    ]:
        e = sub.add_parser(name, help=text)
        e.add_argument("--config", required=True, help="flat TOML config")
        e.add_argument("--out", help="report path; .csv and .md select those formats")
        e.add_argument("--samples", type=int)
        e.add_argument("--seed", type=int)
        e.add_argument("--workers", type=int)
        e.add_argument("--method", choices=["power", "dense", "lanczos"])
        e.set_defaults(func=func)
    r = sub.add_parser("report", help="convert a JSON report")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--format", choices=["csv", "md", "json"], default="md")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    g = sub.add_parser("gen-symbol", help="write one generated symbol to a field file")
    g.add_argument("--config", required=True)
    g.add_argument("--sample", type=int, default=0)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_symbol)
    return p


# ------------------------------------------------------------------ main


def _dispatch(parser, argv) -> int:
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1


def zonal_main(argv=None) -> int:
    return _dispatch(zonal_parser(), argv)


def bmo_main(argv=None) -> int:
    return _dispatch(bmo_parser(), argv)


def comm_main(argv=None) -> int:
    return _dispatch(comm_parser(), argv)


def explab_main(argv=None) -> int:
    return _dispatch(explab_parser(), argv)


TOOLS = {"zonal": zonal_main, "bmo": bmo_main, "comm": comm_main, "explab": explab_main}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("--version", "-V"):
        print(__version__)
        return 0
    if not argv or argv[0] not in TOOLS:
        print(f"usage: multicomm {{{','.join(TOOLS)}}} ...", file=sys.stderr)
        return 0 if argv and argv[0] in ("-h", "--help") else 1
    return TOOLS[argv[0]](argv[1:])


def _entry(fn):
    def run():
        sys.exit(fn())
    return run


main_entry = _entry(main)
zonal_entry = _entry(zonal_main)
bmo_entry = _entry(bmo_main)
comm_entry = _entry(comm_main)
explab_entry = _entry(explab_main)

if __name__ == "__main__":
    sys.exit(main())
