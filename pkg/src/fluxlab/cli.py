"""Command-line interface.

Subcommands::

    fluxlab solve <cfg>              run the minimizer from a config file
    fluxlab analyze <field> --mode scan|monotonicity|blowup|boxcount ...
    fluxlab decompose <field>        dump the path/cycle decomposition
    fluxlab verify <suite>           run a verification suite

Exit codes: 0 success, 1 usage/data error, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fieldio
from .analysis import (
    blowup,
    box_count,
    energy_density,
    epsilon_p,
    monotonicity_profile,
    regularity_scan,
    rescaled_energy,
)
from .decompose import decompose, dump_decomposition
from .errors import FluxlabError
from .lattice import build_domain, check_integer_fluxes, energy
from .presets import bundled_config, make_boundary, parse_charges, parse_config
from .solver import MinimizeResult, SolveConfig, minimize
from .verify import SUITES, run_suite


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_solve(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        try:
            cfg_path = bundled_config(args.config)
        except FileNotFoundError:
            print(f"error: no config file {args.config!r}", file=sys.stderr)
            return 1
    try:
        cfg = parse_config(cfg_path)
        dom = build_domain(cfg["N"], cfg["R"])
        B = make_boundary(dom, cfg["boundary"])
        solve_cfg = SolveConfig(p=cfg["p"], convex_tol=cfg["convex_tol"],
                                max_outer_iters=cfg["max_outer_iters"],
                                seed=cfg["seed"], shell_eps=cfg["shell_eps"])
        charges_init = None
        if cfg["charges_init"]:
            from .lattice import ChargeSet

            charges_init = ChargeSet(parse_charges(cfg["charges_init"]))
        result = minimize(dom, B, solve_cfg, charges_init=charges_init)
    except FluxlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    fieldio.save_field_text(result.field, out / "field.txt")
    fieldio.save_charges(result.charges, out / "charges.txt")
    with open(out / "history.csv", "w") as fh:
        fh.write("iter,move,energy\n")
        for it, move, e in result.history:
            fh.write(f"{it},{move.replace(',', ';')},{_fmt(e)}\n")
    print(f"energy {_fmt(result.energy)} charges {len(result.charges)} "
          f"converged {result.converged} -> {out}")
    return 0 if result.converged else 2


def _load_field(path):
    try:
        if Path(path).suffix == ".bin":
            return fieldio.load_field_binary(path)
        return fieldio.load_field_text(path)
    except FluxlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def cmd_analyze(args) -> int:
    X = _load_field(args.field)
    if X is None:
        return 1
    p = args.p
    dom = X.domain
    center = tuple(float(v) for v in args.center.split(",")) if args.center else (0.0, 0.0, 0.0)
    radii = [float(r) for r in args.radii.split(",")] if args.radii else None
    out_lines = []

    try:
        if args.mode == "scan":
            rep = regularity_scan(X, p, radii)
            payload = {
                "p": p,
                "eps_p": rep.eps_p,
                "radii": rep.radii,
                "flagged": [list(c) for c in rep.flagged_cells],
                "n_flagged": len(rep.flagged_cells),
                "energy": energy(X, p),
            }
            text = json.dumps(payload, indent=2, sort_keys=True)
            out_lines = [text]
        elif args.mode == "monotonicity":
            if radii is None:
                top = (dom.ball_radius or dom.R) * 0.9
                radii = [round(r, 6) for r in np.linspace(0.2 * dom.R, top, 8)]
            prof = monotonicity_profile(X, center, p, radii)
            out_lines = ["r,theta,rhs,dtheta"]
            for r, t, rhs, dt in zip(prof.radii, prof.theta, prof.rhs, prof.dtheta):
                out_lines.append(f"{_fmt(r)},{_fmt(t)},{_fmt(rhs)},{_fmt(dt)}")
        elif args.mode == "blowup":
            lam = args.lam
            Xb = blowup(X, center, lam)
            eb = energy(Xb, p)
            re = rescaled_energy(X, center, lam, p)
            out_lines = ["lam,energy_blowup,rescaled_energy",
                         f"{_fmt(lam)},{_fmt(eb)},{_fmt(re)}"]
            if args.out_field:
                fieldio.save_field_text(Xb, args.out_field)
        elif args.mode == "boxcount":
            rep = regularity_scan(X, p, radii)
            s = args.s if args.s is not None else 3 - 2 * p
            scales = [dom.R / 2 ** k for k in range(1, 5)]
            rows = box_count(dom, rep.flagged_cells, s, scales)
            out_lines = ["delta,count,premeasure"]
            for d, c, v in rows:
                out_lines.append(f"{_fmt(d)},{c},{_fmt(v)}")
        else:
            print(f"error: unknown mode {args.mode!r}", file=sys.stderr)
            return 1
    except FluxlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    text = "\n".join(out_lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_decompose(args) -> int:
    X = _load_field(args.field)
    if X is None:
        return 1
    try:
        C = check_integer_fluxes(X, tol=args.tol)
        D = decompose(X, C)
    except FluxlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = dump_decomposition(D)
    if args.out:
        Path(args.out).write_text(text)
        print(f"{len(D.paths)} paths, {len(D.cycles)} cycles -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r} "
              f"(choose from {', '.join(sorted(SUITES))}, all)", file=sys.stderr)
        return 1
    ok = run_suite(args.suite, seed=args.seed)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fluxlab",
        description="minimize and analyze integer-flux vector fields on a lattice ball")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run the minimizer from a config file")
    ps.add_argument("config", help="config path or bundled preset name")
    ps.set_defaults(func=cmd_solve)

    pa = sub.add_parser("analyze", help="reports on a stored field")
    pa.add_argument("field")
    pa.add_argument("--mode", required=True)
    pa.add_argument("--p", type=float, default=1.2)
    pa.add_argument("--center", default=None, help="x,y,z")
    pa.add_argument("--radii", default=None, help="comma-separated")
    pa.add_argument("--lam", type=float, default=0.5)
    pa.add_argument("--s", type=float, default=None)
    pa.add_argument("--out", default=None)
    pa.add_argument("--out-field", default=None)
    pa.set_defaults(func=cmd_analyze)

    pd = sub.add_parser("decompose", help="dump the path/cycle decomposition")
    pd.add_argument("field")
    pd.add_argument("--tol", type=float, default=1e-6)
    pd.add_argument("--out", default=None)
    pd.set_defaults(func=cmd_decompose)

    pv = sub.add_parser("verify", help="run a verification suite")
    pv.add_argument("suite")
    pv.add_argument("--seed", type=int, default=0)
    pv.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FluxlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
