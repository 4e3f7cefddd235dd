"""Command line interface: ``deepiv {fit,split,spectest,theory,simulate,replay}``.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical or
statistical failure (singular moment matrix, non-positive Hausman inner
matrix, lasso non-convergence).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

from . import __version__
from .data import read_csv
from .errors import (BasisTooLarge, DeepIVError, DomainError, MissingExogenous, NonConvergence,
                     NonPositiveInner, ShapeMismatch, SingularMatrix)
from .first_stage import SplineSpec, default_truncation, fit_first_stage
from .inference import deep_iv, estimate_with_exogenous
from .mlp import TrainConfig
from .plots import figure_tables, render_svg
from .simlab import builtin_f0, config_from_dict, config_to_dict, run_monte_carlo
from .split_sample import fit_split_estimator
from .spec_test import HAUSMAN_TRAIN, hausman_test
from .theory import CompositionalSpec, intrinsic_summary

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
FAMILIES = ("dnn", "linear", "additive_spline", "tensor_spline", "oracle")


class UsageError(Exception):
    pass


def _train_args(p):
    p.add_argument("--depth", "-L", type=int, default=3, help="hidden layers L")
    p.add_argument("--width", "-W", type=int, default=10, help="hidden width W")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--train-fraction", type=float,
                   help="share of rows used for training (default 0.8; 1.0 for spectest)")


def _common(p):
    p.add_argument("csv", help="dataset CSV with columns y, x1.., z1.., optional r1..")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.add_argument("--manifest", help="manifest path (default <out>.manifest.json, "
                   "or deepiv-<command>.manifest.json when printing to stdout)")
    _train_args(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepiv", description="Deep IV estimation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="two-stage estimate with confidence intervals")
    _common(p)
    p.add_argument("--first-stage", choices=FAMILIES, default="dnn")
    p.add_argument("--f0", help="built-in conditional mean for --first-stage oracle (dgp1, dgp2)")
    p.add_argument("--knots", type=int, help="interior knots for spline first stages")
    p.add_argument("--exogenous", action="store_true",
                   help="treat r1.. columns as exogenous regressors (required when present)")

    p = sub.add_parser("split", help="split-sample (cross-fitted) estimate")
    _common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--c", type=float, default=3.0, help="truncation constant: C_n = c log(n)")
    g.add_argument("--cn", type=float, help="explicit truncation level C_n")

    p = sub.add_parser("spectest", help="Hausman-type instrument validity test")
    _common(p)
    p.add_argument("--baseline", type=int, required=True, help="number d_b of maintained-valid instruments")

    p = sub.add_parser("theory", help="intrinsic smoothness, rates and minimal network size")
    p.add_argument("spec", help="JSON file ('-' for stdin) with l_star, dims, t, p")
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--manifest")

    p = sub.add_parser("simulate", help="Monte Carlo campaign")
    p.add_argument("config", help="JSON configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default DEEPIV_THREADS or 1)")
    p.add_argument("--svg", action="store_true", help="also render figN.svg line charts")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def _cfg(args, train_fraction=0.8) -> TrainConfig:
    if args.train_fraction is not None:
        train_fraction = args.train_fraction
    return TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                       patience=args.patience, optimizer=args.optimizer, seed=args.seed,
                       train_fraction=train_fraction)


def manifest_path(args) -> str:
    if args.manifest:
        return args.manifest
    return f"{args.out}.manifest.json" if args.out else f"deepiv-{args.command}.manifest.json"


def _emit(args, payload: dict, argv, started, resolved=None):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    outputs = []
    if args.out:
        Path(args.out).write_text(text)
        outputs.append(str(args.out))
    else:
        sys.stdout.write(text)
    write_manifest(manifest_path(args), argv, args, started, outputs, resolved)


def write_manifest(path, argv, args, started, outputs, resolved=None):
    snapshot = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": args.command,
        "argv": list(argv),
        "config": snapshot,
        "seed": snapshot.get("seed"),
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": sorted(outputs),
        "resolved": resolved or {},
    }
    if args.command == "simulate":
        doc["config_document"] = json.loads(Path(args.config).read_text())
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def cmd_fit(args, argv, started):
    data = read_csv(args.csv)
    if args.first_stage == "oracle" and not args.f0:
        raise UsageError("--first-stage oracle requires --f0 naming the true conditional mean")
    kw = {"L": args.depth, "W": args.width, "cfg": _cfg(args), "seed": args.seed}
    if args.first_stage == "oracle":
        kw["f0"] = builtin_f0(args.f0)
    if args.knots is not None:
        interaction = "tensor" if args.first_stage == "tensor_spline" else "additive"
        kw["spec"] = SplineSpec.equally_spaced(args.knots, interaction=interaction)
    if data.r is not None and not args.exogenous:
        raise UsageError("dataset has r columns; pass --exogenous to include them")
    if args.exogenous:
        est, model = estimate_with_exogenous(data, args.first_stage, **kw)
    else:
        model = fit_first_stage(args.first_stage, data, **kw)
        est = deep_iv(data, model)
    payload = est.to_dict(args.alpha)
    payload["first_stage"] = args.first_stage
    _emit(args, payload, argv, started)


def cmd_split(args, argv, started):
    data = read_csv(args.csv)
    c_n = args.cn if args.cn is not None else default_truncation(data.n, args.c)
    est = fit_split_estimator(data, args.depth, args.width, c_n, _cfg(args), seed=args.seed)
    _emit(args, est.to_dict(args.alpha), argv, started, {"c_n": c_n})


def cmd_spectest(args, argv, started):
    data = read_csv(args.csv)
    if not 1 <= args.baseline < data.d:
        raise UsageError(f"--baseline must satisfy 1 <= d_b < d = {data.d}")
    res = hausman_test(data, args.baseline, args.depth, args.width,
                       _cfg(args, HAUSMAN_TRAIN.train_fraction), args.alpha)
    _emit(args, res.to_dict(), argv, started)


def cmd_theory(args, argv, started):
    text = sys.stdin.read() if args.spec == "-" else Path(args.spec).read_text()
    spec = CompositionalSpec.from_dict(json.loads(text))
    summary = intrinsic_summary(spec, args.q)
    payload = {"spec": spec.to_dict(), "q": args.q, "summary": summary.to_dict()}
    _emit(args, payload, argv, started)


def load_simulation_config(path):
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise DomainError("configuration must be a JSON object")
    doc = dict(doc)
    dgps = doc.pop("dgps", None)
    if dgps is None:
        dgps = [doc.pop("dgp", "dgp2")]
    if not dgps:
        raise DomainError("no DGPs requested")
    return [config_from_dict({**doc, "dgp": g}) for g in dgps]


def cmd_simulate(args, argv, started):
    configs = load_simulation_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for cfg in configs:
        progress = None
        if not args.quiet:
            def progress(k, total, _g=cfg.dgp.kind):
                if k == total or k % max(1, total // 20) == 0:
                    print(f"[{_g}] {k}/{total} replications", file=sys.stderr)
        results.append(run_monte_carlo(cfg, workers=args.workers, progress=progress))
    outputs = []
    header, *_ = results[0].to_csv().splitlines(keepends=True)
    body = "".join("".join(r.to_csv().splitlines(keepends=True)[1:]) for r in results)
    (out / "results.csv").write_text(header + body)
    outputs.append(str(out / "results.csv"))
    for name, table in figure_tables(results).items():
        (out / f"{name}.csv").write_text(table)
        outputs.append(str(out / f"{name}.csv"))
        if args.svg:
            (out / f"{name}.svg").write_text(render_svg(table, title=name))
            outputs.append(str(out / f"{name}.svg"))
    (out / "config.json").write_text(json.dumps([config_to_dict(c) for c in configs], indent=2) + "\n")
    outputs.append(str(out / "config.json"))
    write_manifest(out / "manifest.json", argv, args, started, outputs)


def cmd_replay(args, argv, started):
    doc = json.loads(Path(args.manifest).read_text())
    recorded = doc.get("argv")
    if not recorded:
        raise DomainError("manifest has no recorded argv")
    return main(recorded)


COMMANDS = {
    "fit": cmd_fit,
    "split": cmd_split,
    "spectest": cmd_spectest,
    "theory": cmd_theory,
    "simulate": cmd_simulate,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = _now()
    try:
        rc = COMMANDS[args.command](args, argv, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"deepiv {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SingularMatrix, NonPositiveInner, NonConvergence) as exc:
        hint = ""
        if isinstance(exc, SingularMatrix):
            hint = " (moment matrix singular: instruments are weak or irrelevant for the regressors)"
        print(f"deepiv {args.command}: numerical failure: {exc}{hint}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ShapeMismatch, BasisTooLarge, MissingExogenous, DeepIVError,
            OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"deepiv {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if rc is None else int(rc)


if __name__ == "__main__":
    sys.exit(main())
