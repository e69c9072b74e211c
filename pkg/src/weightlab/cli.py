"""Command-line front end.

Subcommands: constants, transform, majorant, verify, derive.  Output is
a flat JSON object (constants, verify), CSV samples (transform), or a
numbered trace (derive; --json for structured output).  All randomness
derives from --seed, and output is byte-identical for identical
(arguments, seed).  WEIGHTLAB_THREADS caps compiled-kernel parallelism.
Exit status: 0 all checks pass, 1 a check failed, 2 parse/config error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import calculus, majorants, operators, weights
from .errors import RuleError, WeightLabError
from .grid import make_grid


def _apply_thread_cap():
    cap = os.environ.get("WEIGHTLAB_THREADS")
    if cap:
        try:
            import warnings

            import numba

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))
        except (ValueError, ImportError):
            pass


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and math.isinf(x):
        return None
    raise TypeError(f"not serializable: {x!r}")


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, default=_json_default) + "\n")


def _grid_of(args):
    return make_grid(args.half_width, args.res)


def _cmd_constants(args) -> int:
    grid = _grid_of(args)
    w = weights.weight_from_dsl(args.weight, grid)
    report = weights.constants_report(
        w, ps=args.p or [2.0], rh_rs=[args.rh_r], rh_cap=args.rh_cap
    )
    _emit_json(report.to_flat_dict(rh_key_r=args.rh_r))
    return 0


def _cmd_transform(args) -> int:
    grid = _grid_of(args)
    w = weights.weight_from_dsl(args.weight, grid)
    f = w.fiber(0)
    op = operators.DiscreteOperator(args.op, grid)
    out = op.apply(f)
    sys.stdout.write("x,f,Tf\n")
    for x, a, b in zip(grid.midpoints(), f, out):
        sys.stdout.write(f"{float(x)!r},{float(a)!r},{float(b)!r}\n")
    return 0


def _cmd_majorant(args) -> int:
    grid = _grid_of(args)
    w = weights.weight_from_dsl(args.f, grid)
    res = majorants.rdf_majorant(w.fiber(0), grid, p=args.p, depth=args.depth)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("x,f,w\n")
            for x, a, b in zip(grid.midpoints(), res.input_f, res.majorant):
                fh.write(f"{float(x)!r},{float(a)!r},{float(b)!r}\n")
    _emit_json(
        {
            "p": args.p,
            "depth": args.depth,
            "norm_ratio": res.norm_ratio,
            "class": res.class_tag,
            "class_constant": res.class_constant,
            "bound_norm_ratio": 2.0,
            "bound_class_constant": 2.0 * operators.maximal_norm_lp(args.p, grid),
            "csv": args.csv,
        }
    )
    ok = res.norm_ratio <= 2.0 and res.class_constant <= 2.0 * operators.maximal_norm_lp(
        args.p, grid
    ) * (1.0 + 5e-2)
    return 0 if ok else 1


def _chain_report_dict(rep) -> dict:
    return {
        "pass": rep.passed,
        "final_constant": rep.final_constant,
        "steps": [
            {"label": s.label, "lhs": s.lhs, "rhs": s.rhs, "pass": s.passed}
            for s in rep.steps
        ],
    }


def _piecewise_profile(rng, n, positive=True):
    levels = rng.uniform(0.1, 10.0, rng.integers(2, 6))
    breaks = np.sort(rng.integers(1, n, levels.size - 1))
    out = np.empty(n)
    prev = 0
    for j, b in enumerate(np.append(breaks, n)):
        out[prev:b] = levels[j]
        prev = b
    if not positive:
        out *= rng.choice([-1.0, 1.0], n)
    return out


def _cmd_verify(args) -> int:
    grid = _grid_of(args)
    if args.what == "shift-ap2":
        w = weights.weight_from_dsl(args.weight, grid)
        T = operators.DiscreteOperator.hilbert_op(grid)
        rep = operators.verify_shift_ap2(T, w, shift=args.shift)
        _emit_json(
            {
                "c": rep.c,
                "m": rep.m,
                "worst_ratio": rep.worst_ratio,
                "pass": rep.passed,
                "ap2": rep.ap2,
                "a2_over_cwm2": rep.a2_over_cwm2,
            }
        )
        return 0 if rep.passed else 1

    rng = np.random.default_rng(args.seed)
    n = grid.n_cells
    if args.what == "a1apt":
        f = _piecewise_profile(rng, n, positive=False)
        wmaj = majorants.rdf_majorant(np.abs(f), grid, p=2.0).as_weight()
        delta = 0.5
        umaj = majorants.rdf_majorant(wmaj.fiber(0) ** delta, grid, p=2.0).as_weight()
        rep = majorants.chain_a1apt(f, wmaj, umaj, p=2.0, delta=delta, grid=grid)
    elif args.what == "a2rdiv":
        g = _piecewise_profile(rng, n)
        h = rng.standard_normal(n)
        h /= operators.lp_norm(h, 2.0, grid.cell_width)
        rep = majorants.chain_a2rdiv(g, h, grid, p_z=2.0)
    elif args.what == "btsbge":
        f = _piecewise_profile(rng, n)
        T = operators.DiscreteOperator.hilbert_op(grid)
        res = majorants.restricted_majorant(f, grid, T, q=2.0, alpha=2.0)
        out = {
            "pass": bool(res.converged),
            "iterations": res.iterations,
            "converged": res.converged,
            "norm_ratio": res.norm_ratio,
            "equivalence_constant": res.equivalence_constant,
            "ap2": res.class_constant,
            "t_norm_lq": res.reference_norm,
            "a2_over_m2": res.class_constant / res.reference_norm**2,
        }
        _emit_json(out)
        return 0 if res.converged else 1
    else:  # pragma: no cover - argparse restricts choices
        raise WeightLabError(f"unknown verify target {args.what}")
    _emit_json(_chain_report_dict(rep))
    return 0 if rep.passed else 1


def _cmd_derive(args) -> int:
    from fractions import Fraction

    p = Fraction(args.p) if args.p else Fraction(2)
    kwargs = {"p": p} if args.script == "main-chain" else {}
    trace = calculus.replay(args.script, **kwargs)
    if args.json:
        _emit_json(trace.to_json_dict())
    else:
        sys.stdout.write(trace.render() + "\n")
    return 0 if trace.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="weightlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--res", type=int, default=10, help="resolution exponent k, N = 2^k")
        p.add_argument("--half-width", type=float, default=1.0, help="domain half width L")
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness")

    pc = sub.add_parser("constants", help="weight constants as flat JSON")
    common(pc)
    pc.add_argument("--weight", required=True, help="weight DSL string")
    pc.add_argument("--p", type=float, action="append", help="Muckenhoupt exponent(s)")
    pc.add_argument("--rh-r", type=float, default=2.0, help="reverse Hoelder exponent to report")
    pc.add_argument("--rh-cap", type=float, default=4.0, help="cap for the exponent search")
    pc.set_defaults(func=_cmd_constants)

    pt = sub.add_parser("transform", help="apply an operator, emit CSV samples")
    common(pt)
    pt.add_argument("--op", choices=["hilbert", "maximal"], required=True)
    pt.add_argument("--weight", required=True, help="weight DSL string (input samples)")
    pt.set_defaults(func=_cmd_transform)

    pm = sub.add_parser("majorant", help="series majorant with JSON result block")
    common(pm)
    pm.add_argument("--f", required=True, help="input profile as weight DSL")
    pm.add_argument("--p", type=float, default=2.0)
    pm.add_argument("--depth", type=int, default=24)
    pm.add_argument("--csv", help="write x,f,w samples to this path")
    pm.set_defaults(func=_cmd_majorant)

    pv = sub.add_parser("verify", help="run a verification suite, emit JSON report")
    common(pv)
    pv.add_argument("what", choices=["shift-ap2", "a1apt", "a2rdiv", "btsbge"])
    pv.add_argument("--weight", default="const:c=1", help="weight DSL (shift-ap2)")
    pv.add_argument("--shift", type=float, default=3.0)
    pv.set_defaults(func=_cmd_verify)

    pd = sub.add_parser("derive", help="replay a derivation script")
    pd.add_argument(
        "--script",
        required=True,
        choices=["themcr2", "frdiv-from-duality", "main-chain"],
    )
    pd.add_argument("--p", help="base exponent for main-chain (rational, e.g. 2 or 7/4)")
    pd.add_argument("--json", action="store_true")
    pd.set_defaults(func=_cmd_derive)
    return ap


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RuleError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except WeightLabError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
