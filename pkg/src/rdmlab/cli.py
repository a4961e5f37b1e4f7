"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 violated precondition or bad
argument, 3 numerical failure (also a failed ``verify-all``), 4 resource cap.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import acceptance, bdm, floquet, ids, model
from .errors import RdmError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def read_config(path: str) -> dict[str, str]:
    """Plain ``key=value`` lines; '#' starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line without '=': {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_grid(text: str | None, lam: float) -> np.ndarray:
    """``lo:hi:n`` for a uniform grid, ``sym:half:n`` for 2n+1 points mirrored about lam/2."""
    if text is None:
        half = floquet.band_edges_closed_form(lam)[3] - lam / 2 + 0.5
        return ids.symmetric_grid(lam, half, 200)
    parts = text.split(":")
    if len(parts) == 3 and parts[0] == "sym":
        return ids.symmetric_grid(lam, float(parts[1]), int(parts[2]))
    if len(parts) == 3:
        return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    return np.array(sorted(_floats(text)))


def _common(p: argparse.ArgumentParser, *names: str):
    if "lambda" in names:
        p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="coupling lambda")
    if "p" in names:
        p.add_argument("--p", type=float, default=0.5, help="probability of displacement 0")
    if "L" in names:
        p.add_argument("--L", type=int, default=100, help="number of cells")
    if "samples" in names:
        p.add_argument("--samples", type=int, default=1000)
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0)
    if "bc" in names:
        p.add_argument("--bc", default="dirichlet", choices=["dirichlet", "neumann", "periodic"])
    if "grid" in names:
        p.add_argument("--grid", default=None, help="lo:hi:n, sym:half:n or comma list")
    p.add_argument("--out", default=None, help="output file (default: standard output)")
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--config", default=None, help="key=value file; command-line flags win")
    p.add_argument("--threads", type=int, default=1, help="worker ceiling")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = _Parser(prog="rdmlab", description="Random displacement model laboratory")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    subs = {}

    p = sub.add_parser("bands", help="band structure of the Bernoulli displacement model")
    _common(p, "lambda")
    p.add_argument("--mode", default="auto", choices=["auto", "proved", "conjecture"])
    subs["bands"] = p

    p = sub.add_parser("gap", help="check the central gap on random periodic windows")
    _common(p, "lambda", "L", "samples", "seed")
    subs["gap"] = p

    p = sub.add_parser("bubbles", help="E0 table and monotonicity toward the corners")
    _common(p)
    p.add_argument("--M", default="8")
    p.add_argument("--b", default="3")
    p.add_argument("--q", default="1,2,1", help="single-site values, last axis fastest")
    p.add_argument("--sign", type=int, default=1, choices=[1, -1])
    subs["bubbles"] = p

    p = sub.add_parser("minimizers", help="enumerate periodic minimizers in one dimension")
    _common(p, "lambda", "L")
    p.set_defaults(L=4)
    p.add_argument("--M", default="2")
    p.add_argument("--b", default="1")
    p.add_argument("--q", default="1")
    subs["minimizers"] = p

    p = sub.add_parser("ids", help="Monte Carlo integrated density of states")
    _common(p, "lambda", "p", "L", "samples", "seed", "bc", "grid")
    subs["ids"] = p

    p = sub.add_parser("dos", help="density of states histogram")
    _common(p, "lambda", "p", "L", "samples", "seed", "bc")
    p.add_argument("--bins", type=int, default=200)
    subs["dos"] = p

    p = sub.add_parser("symmetry", help="IDS symmetry deviation")
    _common(p, "lambda", "p", "L", "samples", "seed", "bc", "grid")
    subs["symmetry"] = p

    p = sub.add_parser("edgefit", help="1/log^2 behaviour of the IDS at a band edge")
    _common(p, "lambda", "p", "L", "samples", "seed", "bc")
    p.add_argument("--edge", default="E-", choices=["E-", "G-", "G+", "E+"])
    p.add_argument("--eps-lo", type=float, default=1e-3)
    p.add_argument("--eps-hi", type=float, default=1e-1)
    p.add_argument("--points", type=int, default=12)
    p.set_defaults(format="json")
    subs["edgefit"] = p

    p = sub.add_parser("walk", help="reflection-principle statistics of a simple random walk")
    _common(p, "L", "seed")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--exhaustive", action="store_true")
    p.set_defaults(format="json")
    subs["walk"] = p

    p = sub.add_parser("verify-all", help="run every acceptance check")
    _common(p)
    p.add_argument("--quick", action="store_true", help="reduced sample sizes")
    subs["verify-all"] = p
    return parser, subs


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    def conv(x):
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, (np.floating, np.integer)):
            return x.item()
        if isinstance(x, tuple):
            return list(x)
        return x

    return json.dumps({k: conv(v) for k, v in obj.items()}, sort_keys=True, indent=1) + "\n"


def _rows_csv(header: list[str], rows) -> str:
    def fmt(v):
        return f"{v:.17g}" if isinstance(v, float) else str(v)

    return ",".join(header) + "\n" + "".join(",".join(fmt(v) for v in r) + "\n" for r in rows)


def cmd_bands(args) -> str:
    mode = args.mode
    if mode == "auto":
        mode = "proved" if abs(args.lam) <= 2 else "conjecture"
    bs = floquet.sigma_lambda(args.lam, mode)
    if args.format == "json":
        _emit(args, _json({"lambda": args.lam, "mode": mode, "bands": bs.intervals(), "flags": [b.flag for b in bs.bands]}))
    else:
        _emit(args, bs.to_csv())
    return f"bands lambda={args.lam:g} mode={mode}: " + " ".join(f"[{b.lower:.6f},{b.upper:.6f}]" for b in bs.bands)


def cmd_gap(args) -> str:
    rows = []
    for i in range(args.samples):
        w = np.random.default_rng([args.seed, i]).integers(0, 2, args.L)
        r = bdm.verify_gap(w, args.lam)
        rows.append((i, int(r.gap_clean), float(r.min_sq_eig), r.in_gap))
    clean = sum(r[1] for r in rows)
    if args.format == "json":
        _emit(args, _json({"lambda": args.lam, "L": args.L, "samples": args.samples, "clean": clean}))
    else:
        _emit(args, _rows_csv(["sample", "gap_clean", "min_sq_eig", "in_gap"], rows))
    return f"gap lambda={args.lam:g} L={args.L}: {clean}/{args.samples} samples clean"


def _single_site(args) -> model.SingleSite:
    g = model.Geometry(tuple(_ints(args.M)), tuple(_ints(args.b)))
    return model.SingleSite(g, np.array(_floats(args.q)))


def cmd_bubbles(args) -> str:
    q = _single_site(args)
    rep = model.verify_bubbles(q, args.sign)
    if args.format == "json":
        _emit(args, _json({"monotone": rep.monotone, "margin": rep.margin, "table": rep.energy_map.table}))
    else:
        _emit(args, rep.energy_map.to_csv())
    return f"bubbles M={args.M} b={args.b}: monotone={rep.monotone} margin={rep.margin:.6g}"


def cmd_minimizers(args) -> str:
    q = _single_site(args)
    rep = model.classify_minimizers_1d(q.geometry, q, args.L, scale=args.lam)
    rows = [("".join(map(str, w)), 1, int(w in rep.predicted)) for w in rep.minimizing]
    if args.format == "json":
        _emit(args, _json({"L": args.L, "e_min": rep.e_min, "minimum": rep.minimum,
                           "minimizing": [list(w) for w in rep.minimizing], "predicate_holds": rep.predicate_holds}))
    else:
        _emit(args, _rows_csv(["omega", "minimizing", "predicted"], rows))
    return f"minimizers L={args.L}: {len(rep.minimizing)} found, predicate_holds={rep.predicate_holds}"


def _ids_curve(args) -> ids.IdsCurve:
    grid = parse_grid(args.grid, args.lam)
    return ids.estimate_ids(args.lam, args.p, args.L, args.samples, grid, args.seed, args.bc, workers=args.threads)


def cmd_ids(args) -> str:
    curve = _ids_curve(args)
    if args.format == "json":
        _emit(args, _json({"energy": curve.grid, "ids": curve.values, "stderr": curve.stderr}))
    else:
        _emit(args, curve.to_csv())
    mid = curve.values[np.argmin(np.abs(curve.grid - args.lam / 2))]
    return f"ids lambda={args.lam:g} L={args.L} samples={args.samples}: N(lambda/2)~{mid:.6f}"


def cmd_dos(args) -> str:
    h = ids.dos_histogram(args.lam, args.p, args.L, args.samples, args.bins, args.seed, args.bc)
    if args.format == "json":
        _emit(args, _json({"edges": h.edges, "density": h.density}))
    else:
        _emit(args, h.to_csv())
    return f"dos lambda={args.lam:g}: {len(h.support_intervals())} support intervals, area={h.area():.12f}"


def cmd_symmetry(args) -> str:
    curve = _ids_curve(args)
    dev = ids.check_symmetry(curve)
    _emit(args, _json({"lambda": args.lam, "L": args.L, "samples": args.samples, "max_deviation": dev}))
    return f"symmetry lambda={args.lam:g}: max deviation {dev:.6f}"


def cmd_edgefit(args) -> str:
    em, gm, gp, ep = floquet.band_edges_closed_form(args.lam)
    E0, side = {"E-": (em, "above"), "G+": (gp, "above"), "G-": (gm, "below"), "E+": (ep, "below")}[args.edge]
    grid = ids.edge_grid(E0, side, args.eps_lo, args.eps_hi, args.points)
    curve = ids.estimate_ids(args.lam, args.p, args.L, args.samples, grid, args.seed, args.bc, workers=args.threads)
    fit = ids.edge_singularity_fit(curve, E0, side, (args.eps_lo, args.eps_hi))
    _emit(args, fit.to_json() + "\n")
    return f"edgefit {args.edge}={E0:.6f} {side}: C={fit.C:.6g} pass={fit.passed}"


def cmd_walk(args) -> str:
    rep = ids.walk_statistics(args.L, args.trials, args.seed, exhaustive=args.exhaustive)
    d = dict(rep.__dict__)
    d["inv_sqrt_pi_prefactor_ref"] = math.sqrt(2.0) * rep.gaussian_ref
    _emit(args, _json(d))
    return f"walk L={args.L}: joint={rep.p_joint:.5f} tail={rep.p_tail:.5f} conditional={rep.p_cond:.5f}"


def cmd_verify_all(args) -> str:
    results = acceptance.run_all(quick=args.quick, stream=sys.stdout)
    failed = [r.number for r in results if r.blocking and not r.passed]
    args._failed = failed
    return f"verify-all: {sum(r.passed for r in results)}/{len(results)} passed" + (f", failed {failed}" if failed else "")


COMMANDS = {
    "bands": cmd_bands,
    "gap": cmd_gap,
    "bubbles": cmd_bubbles,
    "minimizers": cmd_minimizers,
    "ids": cmd_ids,
    "dos": cmd_dos,
    "symmetry": cmd_symmetry,
    "edgefit": cmd_edgefit,
    "walk": cmd_walk,
    "verify-all": cmd_verify_all,
}


def parse_args(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage() + "rdmlab: error: a subcommand is required")
    if args.config:
        cfg = read_config(args.config)
        cfg.pop("config", None)
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def run(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"rdmlab: {exc}", file=sys.stderr)
        return 1
    try:
        summary = COMMANDS[args.command](args)
    except RdmError as exc:
        print(f"rdmlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(summary)
    if getattr(args, "_failed", None):
        return 3
    return 0


def main() -> None:
    sys.exit(run())
