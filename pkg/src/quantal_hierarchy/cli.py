"""Command-line entry point (``qh``).

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 data error.
Files are written under ``--output-dir`` (default: ``$QH_OUTPUT_DIR`` or
``./qh-output``); nothing is written anywhere else.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import backward_induction
from .data import DataError, load_many, observed_vector
from .density import RULES, normalise_rule
from .evaluation import rank_models, rank_range_summary, report_csv, report_text
from .fitting import CVPlan, InsufficientData, cross_validate, fit_model, make_splits
from .game_tree import TreeError
from .games import GAME_CLASS, MarketSpec, UnknownGame, canonical_key, get_experiment, list_experiment_keys, list_game_keys
from .models import (
    DEFAULT_FAMILIES,
    FAMILIES,
    ModelEvaluationFailure,
    ModelSpecError,
    model_label,
    parse_model,
    predict,
    predict_game,
)
from .qh_core import DEFAULT_EPSILON, InvalidParams, NonFiniteBackup, UnboundedDepth, heatmap_grid

log = logging.getLogger("quantal_hierarchy")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DATA = 0, 2, 3, 4
OUTPUT_ENV = "QH_OUTPUT_DIR"
SWEEP_RANGE = (1e-9, 1e-7)


class ConfigError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


def _epilog() -> str:
    fams = "\n".join(
        f"  {name:<7} {'(' + ', '.join(f.params) + ')' if f.params else '(no parameters)'}  {f.label}"
        for name, f in FAMILIES.items()
    )
    keys = "\n".join(f"  {k}" for k in list_experiment_keys())
    caps = ",".join(f"c{c}" for c in MarketSpec().capacities)
    return (
        "game keys (any ultimatum:V1-V2 and twostage:D<d> are accepted):\n"
        f"{keys}\n"
        f"  market:block<1-5>:<capacity> with capacity one of {caps}\n\nmodel families (family:key=value,...):\n{fams}\n\n"
        f"exit codes: 0 ok, 2 config, 3 solver, 4 data. Output dir: --output-dir, ${OUTPUT_ENV} or ./qh-output."
    )


# -- helpers ------------------------------------------------------------------------


def _output_dir(args) -> Path:
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or "qh-output")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _experiment(key: str):
    try:
        exp_key, cap = canonical_key(key)
        return get_experiment(exp_key), cap
    except UnknownGame as exc:
        raise ConfigError(f"unknown game key {key!r}: {exc.args[0] if exc.args else ''}") from None


def _model(text: str, free: bool = False):
    try:
        return parse_model(text, free=free)
    except ModelSpecError as exc:
        raise ConfigError(str(exc)) from None


def _bandwidth(rule: str) -> str | None:
    if rule.lower() == "none":
        return None
    try:
        return normalise_rule(rule)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _with_epsilon(spec, eps):
    if eps is None:
        return spec
    if spec.family != "qh":
        raise ConfigError("--epsilon only applies to qh models")
    try:
        return spec.with_params(epsilon=eps)
    except ModelSpecError as exc:
        raise ConfigError(str(exc)) from None


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _prediction_table(key: str, spec) -> tuple[list, list[float]]:
    exp, cap = _experiment(key)
    if cap is not None:
        game = exp.games[exp.labels.index(cap)]
        out = predict_game(game, spec)
        if out is None:  # equilibrium of the simultaneous game
            from .games import market_nash

            out = market_nash(exp.spec, cap)
        return list(game.actions), [float(v) for v in np.asarray(out)]
    vec = predict(exp, spec)
    return list(exp.labels), [float(v) for v in vec]


# -- commands ----------------------------------------------------------------------


def cmd_predict(args) -> int:
    spec = _with_epsilon(_model(args.model), args.epsilon)
    labels, values = _prediction_table(args.game, spec)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    exp, cap = _experiment(args.game)
    w.writerow(("action", "entrants" if exp.kind == "entry" and cap is None else "probability"))
    for a, v in zip(labels, values):
        w.writerow((a, _fmt(v)))
    sys.stdout.write(buf.getvalue())
    if args.save:
        (_output_dir(args) / "prediction.csv").write_text(buf.getvalue())
    best = labels[int(np.argmax(values))]
    log.info("mode: %s", best)
    return EXIT_OK


def _load(args):
    data = load_many(args.data)
    if not data:
        raise DataError("no observations in the data files")
    return data


def cmd_fit(args) -> int:
    exp, _ = _experiment(args.game)
    spec = _model(args.model, free=True)
    bw = _bandwidth(args.bandwidth)
    data = _load(args)
    if exp.key not in data:
        raise DataError(f"no observations for {exp.key} in the data files")
    obs = data[exp.key]
    result: dict = {"game": exp.key, "family": spec.family, "seed": args.seed, "bandwidth": args.bandwidth}
    if args.cv:
        cv = cross_validate(spec.family, exp, obs, CVPlan(seed=args.seed), args.budget, bw)
        result["cv"] = {
            "rmse_mean": cv.rmse_mean,
            "rmse_std": cv.rmse_std,
            "mean_params": cv.mean_params,
            "folds": [
                {
                    "repeat": f.repeat,
                    "fold": f.fold,
                    "params": f.fit.spec.params,
                    "train_mse": f.fit.train_mse,
                    "test_rmse": f.test_rmse,
                    "evaluations": f.fit.evaluations,
                }
                for f in cv.folds
            ],
        }
    fit = fit_model(spec.family, exp, obs, args.budget, args.seed, bw)
    result.update(model=str(fit.spec), params=fit.spec.params, train_mse=fit.train_mse, evaluations=fit.evaluations)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    (_output_dir(args) / "fit.json").write_text(text)
    print(f"{fit.spec}  train_mse={fit.train_mse:.6g}  evaluations={fit.evaluations}")
    if args.cv:
        print(f"5x2 CV test RMSE {result['cv']['rmse_mean']:.6g} +- {result['cv']['rmse_std']:.6g}")
    return EXIT_OK


def run_evaluation(data, families, seed: int, budget, bandwidth, repeats: int = 5, decimals=None):
    """Cross-validate every family on every experiment in ``data``.

    Returns ``(table, stds, fold_rows)`` ready for the report writers."""
    rows, stds, fold_rows = [], {}, []
    plan = CVPlan(repeats=repeats, seed=seed)
    for key in sorted(data, key=lambda k: (list(GAME_CLASS).index(k.split(":")[0]), k)):
        exp, obs = get_experiment(key), data[key]
        splits = make_splits(obs, plan, bandwidth)
        errs = {}
        for fam in families:
            log.info("cross-validating %s on %s", fam, key)
            cv = cross_validate(fam, exp, obs, plan, budget, bandwidth, splits=splits)
            errs[fam] = cv.rmse_mean
            stds[(key, fam)] = cv.rmse_std
            for f in cv.folds:
                fold_rows.append(
                    (exp.game_class, key, fam, f.repeat, f.fold, str(f.fit.spec), f"{f.fit.train_mse:.6e}", f"{f.test_rmse:.6e}", f.fit.evaluations)
                )
        rows.append((exp.game_class, key, errs))
    table = rank_models(rows, families, decimals=decimals)
    return table, stds, fold_rows


def cmd_evaluate(args) -> int:
    families = tuple(args.models.split(",")) if args.models else DEFAULT_FAMILIES
    for fam in families:
        if fam not in FAMILIES:
            raise ConfigError(f"unknown model family {fam!r}")
    bw = _bandwidth(args.bandwidth)
    keep = {_experiment(k)[0].key for k in args.games.split(",")} if args.games else None
    data = _load(args)
    if keep is not None:
        data = {k: v for k, v in data.items() if k in keep}
        if not data:
            raise DataError("none of the requested games has observations")
    decimals = None if args.tie_decimals < 0 else args.tie_decimals
    table, stds, fold_rows = run_evaluation(data, families, args.seed, args.budget, bw, args.repeats, decimals)
    out = _output_dir(args)
    (out / "report.csv").write_text(report_csv(table, stds))
    labels = {m: model_label(m) for m in families}
    text = report_text(table, labels)
    summary = rank_range_summary(table)
    text += "\nrank range (best, median, worst):\n"
    text += "".join(f"  {labels[m]:<20} {b:g}, {md:g}, {wst:g}\n" for m, (b, md, wst) in summary.items())
    if args.verbose:
        header = ("game_class", "experiment", "model", "repeat", "fold", "fitted", "train_mse", "test_rmse", "evaluations")
        _write_csv(out / "folds.csv", header, fold_rows)
        text += "\nfolds:\n" + "".join("  " + "  ".join(str(c) for c in r) + "\n" for r in fold_rows)
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def epsilon_sweep(key: str, spec, samples: int, seed: int):
    """Predictions under ``samples`` seeded uniform draws of epsilon in
    [1e-9, 1e-7] and their max elementwise deviation from epsilon = 1e-8."""
    exp, cap = _experiment(key)
    if exp.family not in ("beauty", "market"):
        raise ConfigError(f"{key}: the sweep needs a game without a defined end point (beauty or market)")
    if spec.family != "qh":
        raise ConfigError("the epsilon sweep applies to qh models")
    rng = np.random.default_rng(seed)
    eps = rng.uniform(*SWEEP_RANGE, size=samples)

    def vec(e):
        return np.asarray(_prediction_table(key, spec.with_params(epsilon=float(e)))[1])

    base = vec(DEFAULT_EPSILON)
    preds = np.array([vec(e) for e in eps])
    dev = np.max(np.abs(preds - base), axis=1)
    labels = _prediction_table(key, spec.with_params(epsilon=DEFAULT_EPSILON))[0]
    return labels, eps, base, preds, dev


def cmd_sensitivity(args) -> int:
    spec = _model(args.model)
    labels, eps, base, preds, dev = epsilon_sweep(args.game, spec, args.samples, args.seed)
    out = _output_dir(args)
    _write_csv(out / "sensitivity.csv", ("sample", "epsilon", "max_deviation"), [(i, f"{e:.6e}", f"{d:.6e}") for i, (e, d) in enumerate(zip(eps, dev))])
    print(f"{args.game} {spec}: {len(eps)} samples of epsilon in [{SWEEP_RANGE[0]:g}, {SWEEP_RANGE[1]:g}]")
    print(f"max elementwise deviation from epsilon=1e-8: {dev.max():.3e}")
    return EXIT_OK


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(",")
        n = int(n)
        if n < 1:
            raise ValueError
        return np.linspace(float(lo), float(hi), n)
    except ValueError:
        raise ConfigError(f"grid must look like lo,hi,n; got {text!r}") from None


def cmd_export_plot_data(args) -> int:
    out = _output_dir(args)
    if args.figure == "heatmap":
        exp, cap = _experiment(args.game)
        if cap is not None or exp.kind == "entry" or exp.family == "beauty":
            raise ConfigError("the payoff heatmap needs a sequential game (centipede, ultimatum, twostage)")
        betas, gammas = _grid(args.betas), _grid(args.gammas)
        grid = heatmap_grid(exp.game, betas, gammas)
        rows = [(_fmt(b), _fmt(g), _fmt(grid[i, j])) for i, b in enumerate(betas) for j, g in enumerate(gammas)]
        _write_csv(out / "heatmap.csv", ("beta", "gamma", "expected_payoff"), rows)
        print(f"wrote {len(rows)} grid points to {out / 'heatmap.csv'}")
        return EXIT_OK

    if args.figure == "predictions":
        models = [_model(m) for m in (args.model or [f"{f}" for f in ("nash",)])]
        data = load_many(args.data) if args.data else {}
        bw = _bandwidth(args.bandwidth)
        rows, meta = [], {}
        for key in args.games.split(","):
            exp, cap = _experiment(key)
            if cap is not None:
                raise ConfigError("export whole experiments (e.g. market:block1), not single capacities")
            for spec in models:
                vec = predict(exp, spec)
                rows += [(exp.key, str(spec), lab, _fmt(v)) for lab, v in zip(exp.labels, vec)]
            if exp.key in data:
                vec = observed_vector(data[exp.key], bw)
                rows += [(exp.key, "observed", lab, _fmt(v)) for lab, v in zip(exp.labels, vec)]
            info = {"game_class": exp.game_class, "kind": exp.kind, "points": len(exp.labels)}
            if exp.kind == "choice" and exp.family != "beauty":
                nash = backward_induction(exp.game).node(0)
                info["nash_mode"] = exp.labels[int(np.argmax(nash))]
            meta[exp.key] = info
        _write_csv(out / "predictions.csv", ("experiment", "series", "label", "value"), rows)
        (out / "predictions_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        print(f"wrote {len(rows)} rows to {out / 'predictions.csv'}")
        return EXIT_OK

    # sensitivity overlay
    spec = _model(args.model[0] if args.model else "")
    key = args.games.split(",")[0]
    labels, eps, base, preds, dev = epsilon_sweep(key, spec, args.samples, args.seed)
    rows = [("baseline", _fmt(1e-8), lab, _fmt(v)) for lab, v in zip(labels, base)]
    for i, e in enumerate(eps):
        rows += [(str(i), f"{e:.6e}", lab, _fmt(v)) for lab, v in zip(labels, preds[i])]
    _write_csv(out / "sensitivity_overlay.csv", ("sample", "epsilon", "label", "value"), rows)
    print(f"wrote {len(eps)} overlay series to {out / 'sensitivity_overlay.csv'}")
    return EXIT_OK


def cmd_list_games(args) -> int:
    for key in list_game_keys() if args.all else list_experiment_keys():
        print(key)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qh",
        description="Quantal Hierarchy and baseline models of bounded rationality on extensive-form games.",
        epilog=_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress; evaluate also writes per-fold detail")
    p.add_argument("--output-dir", help=f"where files go (default ${OUTPUT_ENV} or ./qh-output)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text, epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        sp.add_argument("--output-dir", default=argparse.SUPPRESS)
        return sp

    sp = add("predict", "print a model's prediction for one game")
    sp.add_argument("--game", required=True)
    sp.add_argument("--model", required=True, help="e.g. qh:beta=0.08,gamma=0.76")
    sp.add_argument("--epsilon", type=float, help="override the qh termination threshold")
    sp.add_argument("--save", action="store_true", help="also write prediction.csv to the output dir")
    sp.set_defaults(func=cmd_predict)

    sp = add("fit", "fit one model family to observations of one game")
    sp.add_argument("--game", required=True)
    sp.add_argument("--model", required=True, help="family (qh, qre, levelk, ch, nash) or full spec")
    sp.add_argument("--data", required=True, nargs="+")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int, help="evaluations for continuous families (default 1000)")
    sp.add_argument("--bandwidth", default="scott", help=f"{', '.join(RULES)} or none")
    sp.add_argument("--cv", action="store_true", help="also run 5x2 cross-validation")
    sp.set_defaults(func=cmd_fit)

    sp = add("evaluate", "5x2 cross-validated comparison and rank table")
    sp.add_argument("--data", required=True, nargs="+")
    sp.add_argument("--models", help=f"comma-separated families (default {','.join(DEFAULT_FAMILIES)})")
    sp.add_argument("--games", help="restrict to these experiments (comma-separated)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int, help="evaluations for continuous families (default 1000)")
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--bandwidth", default="scott", help=f"{', '.join(RULES)} or none")
    sp.add_argument("--tie-decimals", type=int, default=3, help="errors equal at this many decimals tie (default 3, as printed); -1 ranks raw errors")
    sp.set_defaults(func=cmd_evaluate)

    sp = add("sensitivity", "sweep the qh termination threshold epsilon over [1e-9, 1e-7]")
    sp.add_argument("--game", required=True, help="a beauty or market game")
    sp.add_argument("--model", required=True, help="qh:beta=...,gamma=...")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_sensitivity)

    sp = add("export-plot-data", "write the data behind the payoff heatmap, prediction plots or sensitivity overlay")
    sp.add_argument("--figure", choices=("heatmap", "predictions", "sensitivity"), required=True)
    sp.add_argument("--game", default="centipede:4", help="heatmap game")
    sp.add_argument("--betas", default="-2,2,41", help="heatmap beta grid lo,hi,n")
    sp.add_argument("--gammas", default="0,1,21", help="heatmap gamma grid lo,hi,n")
    sp.add_argument("--games", default="ultimatum:10-10", help="experiments for predictions/sensitivity")
    sp.add_argument("--model", action="append", help="model spec (repeatable)")
    sp.add_argument("--data", nargs="+", help="observations to overlay")
    sp.add_argument("--bandwidth", default="scott")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_export_plot_data)

    sp = add("list-games", "list game keys")
    sp.add_argument("--all", action="store_true", help="list every market capacity key too")
    sp.set_defaults(func=cmd_list_games)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if getattr(args, "budget", None) is not None and args.budget < 1:
            raise ConfigError("--budget must be >= 1")
        if getattr(args, "samples", 1) < 1:
            raise ConfigError("--samples must be >= 1")
        if getattr(args, "repeats", 1) < 1:
            raise ConfigError("--repeats must be >= 1")
        return args.func(args)
    except (ConfigError, ModelSpecError, UnknownGame) as exc:
        print(f"qh: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InsufficientData) as exc:
        print(f"qh: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelEvaluationFailure, NonFiniteBackup, UnboundedDepth, InvalidParams, TreeError, ArithmeticError, SolverError) as exc:
        print(f"qh: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
