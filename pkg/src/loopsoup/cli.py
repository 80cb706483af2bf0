"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 verification
failure.  Every output embeds the parameter set, seed, package version,
and truncation diagnostics; identical invocations produce identical bytes
apart from wall-time fields (CSV output carries no wall-time at all).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import experiments, greens
from .lattice import Box
from .loopmeasure import LengthTable, loop_range_stats
from .soup import SoupParams, sample_soup


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _point(text: str):
    return tuple(int(c) for c in text.split(","))


def _point_list(text: str):
    return [_point(part) for part in text.split(";") if part]


def _int_list(text: str):
    return [int(c) for c in text.split(",") if c]


def _build_parser() -> _Parser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--dim", type=int, default=3, help="lattice dimension d")
    shared.add_argument("--alpha", type=float, default=0.2, help="soup activity")
    shared.add_argument("--lmax", type=int, default=None,
                        help="length truncation (default depends on the run)")
    shared.add_argument("--seed", type=int, default=0, help="master seed")
    shared.add_argument("--samples", type=int, default=10000)
    shared.add_argument("--threads", type=int, default=1)
    shared.add_argument("--out", type=str, default=None,
                        help="output path (default stdout)")
    shared.add_argument("--format", choices=("csv", "json"), default="csv")

    p = _Parser(prog="loopsoup",
                description="loop-soup percolation simulator and verifier")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("green", parents=[shared], help="Green function values")
    sp.add_argument("--x", type=_point, default=None)

    sp = sub.add_parser("capacity", parents=[shared],
                        help="capacity and equilibrium measure of a point set")
    sp.add_argument("--points", type=_point_list, required=True,
                    help='e.g. "0,0,0;1,0,0"')

    sp = sub.add_parser("table", parents=[shared],
                        help="build and dump a length table")
    sp.add_argument("--tolerance", type=float, default=1e-6)

    sp = sub.add_parser("soup", parents=[shared],
                        help="sample a windowed soup as JSON lines")
    sp.add_argument("--radius", type=int, default=3, help="window radius")

    sp = sub.add_parser("one-arm", parents=[shared])
    sp.add_argument("--n-list", type=_int_list, default=[4, 6, 8])

    sp = sub.add_parser("two-point", parents=[shared])
    sp.add_argument("--x-list", type=_point_list, required=True)

    sub.add_parser("cluster-capacity", parents=[shared])

    sp = sub.add_parser("lemma", parents=[shared])
    sp.add_argument("--kind", required=True,
                    choices=("single_loop", "two_sets", "far_connect",
                             "short_loops", "range_stats"))
    sp.add_argument("--n-list", type=_int_list, default=[10, 20, 40])
    sp.add_argument("--x-list", type=_point_list, default=None)
    sp.add_argument("--m-list", type=_int_list, default=[4, 8, 16])
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--x", type=_point, default=None)

    sp = sub.add_parser("verify", parents=[shared],
                        help="run the Mecke and FKG suites")
    sp.add_argument("--suite", type=str, default="mecke,fkg")
    return p


def _open_out(args):
    return open(args.out, "w") if args.out else sys.stdout


def _emit_kv(args, payload: dict):
    payload = dict(payload)
    payload["version"] = experiments.version_string()
    fh = _open_out(args)
    try:
        if args.format == "json":
            json.dump(experiments._json_safe(payload), fh, indent=1, sort_keys=True)
            fh.write("\n")
        else:
            for k in payload:
                fh.write(f"{k},{payload[k]}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


def _emit_scan(args, scan):
    # provenance without the output path, so runs that differ only in
    # --out stay byte-identical
    argv = sys.argv[1:]
    kept = []
    skip = False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        kept.append(tok)
    scan.meta["argv"] = " ".join(kept)
    fh = _open_out(args)
    try:
        if args.format == "json":
            experiments.scan_to_json(scan, fh)
        else:
            experiments.scan_to_csv(scan, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (greens.NumericalError, MemoryError, RuntimeError, ValueError) as exc:
        print(f"loopsoup: numerical failure: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    d = args.dim
    if args.command == "green":
        tab = greens.default_table(d)
        out = {"command": "green", "dim": d,
               "C_d": greens.green_constant(d), "G0": tab.green((0,) * d)}
        if args.x is not None:
            out["x"] = ",".join(map(str, args.x))
            out["Gx"] = tab.green(args.x)
        _emit_kv(args, out)
        return 0

    if args.command == "capacity":
        res = greens.capacity(args.points, d)
        out = {"command": "capacity", "dim": d, "cap": res.cap,
               "residual": res.residual,
               "equilibrium": {str(p): v for p, v in res.equilibrium.items()}}
        _emit_kv(args, out)
        return 0

    if args.command == "table":
        table = LengthTable(d, args.lmax or 10000, tolerance=args.tolerance)
        fh = _open_out(args)
        try:
            json.dump(table.to_json(), fh)
            fh.write("\n")
        finally:
            if fh is not sys.stdout:
                fh.close()
        return 0

    if args.command == "soup":
        table = LengthTable(d, args.lmax or 8, validate=False, tolerance=math.inf)
        params = SoupParams(alpha=args.alpha, d=d,
                            window=Box((0,) * d, args.radius),
                            table=table, seed=args.seed)
        soup = sample_soup(params, threads=args.threads)
        fh = _open_out(args)
        try:
            soup.dump_jsonl(fh)
        finally:
            if fh is not sys.stdout:
                fh.close()
        return 0

    if args.command == "one-arm":
        scan = experiments.one_arm_scan(
            args.alpha, d, args.n_list, samples=args.samples,
            seed=args.seed, L_max=args.lmax, threads=args.threads)
        _emit_scan(args, scan)
        return 0

    if args.command == "two-point":
        scan = experiments.two_point_scan(
            args.alpha, d, args.x_list, samples=args.samples,
            seed=args.seed, L_max=args.lmax, threads=args.threads)
        _emit_scan(args, scan)
        return 0

    if args.command == "cluster-capacity":
        est = experiments.expected_cluster_capacity(
            args.alpha, d, samples=args.samples, seed=args.seed,
            L_max=args.lmax or 1000, threads=args.threads)
        _emit_kv(args, {"command": "cluster-capacity", "dim": d,
                        "alpha": args.alpha, "samples": args.samples,
                        "seed": args.seed, "value": est.value,
                        "std_error": est.std_error,
                        "diagnostics": experiments._json_safe(est.diagnostics)})
        return 0

    if args.command == "lemma":
        if args.kind == "range_stats":
            est = loop_range_stats(d, args.m, args.samples, seed=args.seed,
                                   L_max=args.lmax)
            _emit_kv(args, {"command": "lemma", "kind": "range_stats",
                            "dim": d, "m": args.m, "value": est.value,
                            "std_error": est.std_error,
                            "diagnostics": experiments._json_safe(est.diagnostics)})
            return 0
        params: dict = {"samples": args.samples, "alpha": args.alpha, "m": args.m,
                        "n_list": args.n_list, "m_list": args.m_list}
        if args.x_list:
            params["x_list"] = args.x_list
        if args.x:
            params["x"] = args.x
        if args.lmax:
            params["L_max"] = args.lmax
        scan = experiments.lemma_scan(args.kind, d=d, params=params,
                                      seed=args.seed, threads=args.threads)
        _emit_scan(args, scan)
        return 0

    if args.command == "verify":
        suites = [s.strip() for s in args.suite.split(",") if s.strip()]
        reports = {}
        ok = True
        if "mecke" in suites:
            rep = experiments.verify_mecke(args.alpha, d,
                                           samples=args.samples, seed=args.seed)
            reports["mecke"] = rep
            ok = ok and rep["passed"]
        if "fkg" in suites:
            rep = experiments.verify_fkg(args.alpha, d,
                                         samples=args.samples, seed=args.seed)
            reports["fkg"] = rep
            ok = ok and rep["passed"]
        fh = _open_out(args)
        try:
            json.dump(experiments._json_safe(
                {"version": experiments.version_string(), "passed": ok,
                 "suites": reports}), fh, indent=1, sort_keys=True)
            fh.write("\n")
        finally:
            if fh is not sys.stdout:
                fh.close()
        return 0 if ok else 3

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
