"""Command line interface: ``qrough <subcommand> [options]``."""
from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, law
from .errors import DomainError
from .fock import build_fock
from .pairings import CovarianceSpec, pairing_table, q_moment, q_moment_batch


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory (default: stdout or the configured one)")
    p.add_argument("--seed", type=int, help="seed for random property tests")
    p.add_argument("--check", metavar="NAME", action="append", help="run only this named check (repeatable)")
    return p


def _load_config(args) -> harness.RunConfig:
    cfg = harness.RunConfig.from_file(args.config) if args.config else harness.RunConfig()
    changes = {}
    for key in ("q", "d", "N", "n_max", "gamma", "K", "tol_picard", "max_iter"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["output_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _emit(text: str, out_dir, name: str):
    if out_dir:
        path = Path(out_dir) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(path)
    else:
        sys.stdout.write(text)


def _parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    return np.array([[float(v) for v in r.split(",")] for r in rows])


def cmd_moments(args) -> int:
    labels = [s.strip() for s in args.labels.split(",")]
    if args.cov_file:
        matrix = np.loadtxt(args.cov_file, delimiter=",", ndmin=2)
    else:
        matrix = _parse_matrix(args.cov)
    spec = CovarianceSpec(labels, matrix)
    word = [s.strip() for s in args.word.split(",")] if args.word else []
    value = q_moment(word, spec, args.q)
    print(harness._fmt(value))
    if args.verbose:
        rows = [(str(p), cr, w) for p, cr, w in pairing_table(word, spec, args.q)]
        sys.stdout.write(harness.csv_text(("pairing", "crossings", "weight"), rows))
    return 0


def cmd_density(args) -> int:
    cfg = _load_config(args)
    q = cfg.q if args.q is None else args.q
    lo, hi = law.support(q)
    xs = np.linspace(lo, hi, args.points)
    dens = law.density_at(xs, q, cfg.K)
    one = CovarianceSpec(("x",), [[1.0]])
    moments = [(r, law.moment_quadrature(r, q, cfg.K), q_moment(("x",) * r, one, q)) for r in range(cfg.r_max + 1)]
    _emit(harness.csv_text(("x", "density"), zip(xs, dens)), args.out, "density.csv")
    _emit(harness.csv_text(("r", "quadrature", "oracle"), moments), args.out, "density_moments.csv")
    return 0


def cmd_fock_check(args) -> int:
    space = build_fock(args.d, args.N, args.q, backend="lazy")
    scale = np.sqrt(space.grid.increments)
    words = np.array(list(itertools.product(range(args.d), repeat=args.r)), dtype=np.intp)
    matrix = space.word_moments(args.r) * np.prod(scale[words], axis=1)
    oracle = q_moment_batch(words, np.diag(space.grid.increments), args.q)
    rows = [("".join(map(str, w)), m, o, abs(m - o)) for w, m, o in zip(words, matrix, oracle)]
    _emit(harness.csv_text(("word", "matrix", "oracle", "abs_error"), rows), args.out, "fock_check.csv")
    return 0 if max(r[3] for r in rows) <= 1e-10 else 1


def cmd_levy_area(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    rec = harness.run_check("levy_decay", cfg, out)
    for p in harness.emit_plotdata("levy-decay", cfg, out):
        print(p)
    print(json.dumps(rec.to_dict(), indent=2))
    return 0 if rec.passed else 1


def cmd_ito_compare(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    rows = []
    for q, name, rep in harness.correction_rows(cfg, qs=(cfg.q,)):
        for n, e, ss, it in zip(rep.levels, rep.eps, rep.strat_state, rep.ito_state):
            rows.append((name, n, ss.real, it.real, rep.correction_l2, e))
    print(harness.write_csv(out / "ito_compare.csv",
                            ("family", "level", "strat_state", "ito_state", "correction_l2", "eps"), rows))
    names = args.check or ["second_quantization", "ito_isometry", "correction_identity", "quadratic_limit"]
    summary = harness.run_suite(cfg, names, out)
    print(json.dumps({r["check_id"]: r["passed"] for r in summary["checks"]}, indent=2))
    return 0 if summary["failures"] == 0 else 1


def cmd_rde(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    sol = harness.desk_rde(cfg)
    snaps = [(t, float(np.real(v.state())), v.op_norm(), v.adjoint_defect()) for t, v in zip(sol.times, sol.values)]
    files = [
        harness.write_csv(out / "rde_snapshots.csv", ("t", "state", "op_norm", "adjoint_defect"), snaps),
        harness.write_csv(out / "rde_picard.csv", ("iteration", "residual"), enumerate(sol.info["residuals"], 1)),
    ]
    files += harness.emit_plotdata("wong-zakai", cfg, out)
    for p in files:
        print(p)
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    summary = harness.run_suite(cfg, args.check, Path(cfg.output_dir))
    for rec in summary["checks"]:
        status = "PASS" if rec["passed"] else "FAIL"
        print(f"{status}  {rec['check_id']:<22} {rec['runtime']:7.1f}s  {json.dumps(rec['measured'])}")
    print(f"failures: {summary['failures']}")
    return 0 if summary["failures"] == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="qrough", description="q-Gaussian rough-path toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moments", parents=[common], help="joint moment from the pairing expansion")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--labels", required=True, help="comma-separated labels, e.g. a,b")
    p.add_argument("--cov", default=None, help="inline matrix, rows separated by ';'")
    p.add_argument("--cov-file", default=None, help="CSV file holding the covariance matrix")
    p.add_argument("--word", default="", help="comma-separated labels")
    p.add_argument("-v", "--verbose", action="store_true", help="also print the per-pairing table")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("density", parents=[common], help="density grid and moment comparison")
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--points", type=int, default=401)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("fock-check", parents=[common], help="Fock moments against the pairing oracle")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--q", type=float, default=0.3)
    p.add_argument("--r", type=int, default=4)
    p.set_defaults(func=cmd_fock_check)

    for name, func, help_ in (("levy-area", cmd_levy_area, "per-level Levy-area defects"),
                              ("ito-compare", cmd_ito_compare, "Ito/Stratonovich comparison"),
                              ("rde", cmd_rde, "RDE snapshots, Picard residuals, Wong-Zakai table")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--q", type=float, default=None)
        p.add_argument("--d", type=int, default=None)
        p.add_argument("--N", type=int, default=None)
        p.add_argument("--n-max", dest="n_max", type=int, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="run the acceptance checks")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "moments" and not (args.cov or args.cov_file):
        parser.error("moments needs --cov or --cov-file")
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
