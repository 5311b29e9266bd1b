"""Command-line experiment harness.

Subcommands: gen, train, eval, correlate, pareto, bounds.  Every command
takes --seed / --config / --out; flag values override config-file values
override defaults, and the effective configuration is echoed into the
output directory.  CSV outputs have a fixed column order with floats at 9
significant digits; identical inputs and seed give byte-identical files.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .conformal import BoundInputs, empirical_gap_bound
from .datagen import (
    SyntheticTask,
    default_task,
    f1_style_task,
    gen_synthetic,
    load_bundle,
    save_bundle,
)
from .experiments import (
    DEFAULT_ALPHAS,
    METHODS,
    alpha_d_sweep,
    bound_sweep,
    correlation_study,
    evaluate_bundle,
    pareto_sweep,
    summarize_rows,
)
from .mlp import load_checkpoint, save_checkpoint
from .svgplot import Series, render_svg
from .training import TrainConfig, TrainingDivergedError, train

__all__ = ["main"]


class ValidationError(ValueError):
    """Bad arguments or inputs; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9g}"
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_value(v) for v in row) + "\n")


def _echo_config(out_dir: Path, values: dict) -> None:
    lines = [f"{k}={_fmt_value(v)}" for k, v in sorted(values.items())]
    with open(out_dir / "effective_config.txt", "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults; returns the effective value map."""
    config = _load_config_file(args.config) if args.config else {}
    effective = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            effective[key] = flag_value
        elif key in config:
            raw = config[key]
            caster = type(default) if default is not None else str
            if caster is bool:
                effective[key] = raw.lower() in ("1", "true", "yes")
            elif caster in (int, float, str):
                effective[key] = caster(raw)
            else:
                effective[key] = raw
        else:
            effective[key] = default
    return effective


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ValidationError(f"bad numeric list {text!r}: {exc}") from None


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _eval_rows_to_csv(rows):
    return [(r.trial, r.test_set, r.method, r.alpha, r.coverage, r.gap,
             r.avg_size, r.tau) for r in rows]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args) -> int:
    cfg = _resolve(args, dict(
        seed=0, k=3, d=2, n_per_source=300, n_cal=300, n_test_sets=30,
        m_per_test=300, cov_radius=1.5, concept_span=1.0, noise=0.1,
        family="default", out=None))
    if cfg["out"] is None:
        raise ValidationError("gen requires --out")
    if cfg["k"] < 2:
        raise ValidationError("mixture studies need k >= 2 sources")
    if cfg["family"] == "default":
        task = default_task(
            k=cfg["k"], d=cfg["d"], cov_radius=cfg["cov_radius"],
            concept_strengths=np.linspace(-cfg["concept_span"],
                                          cfg["concept_span"], cfg["k"]),
            noise_scale=cfg["noise"], seed=cfg["seed"])
    elif cfg["family"] == "f1":
        task = f1_style_task(seed=cfg["seed"], k=cfg["k"], d=cfg["d"],
                             cov_radius=cfg["cov_radius"],
                             noise_scale=cfg["noise"])
    else:
        raise ValidationError(f"unknown family {cfg['family']!r}")
    bundle = gen_synthetic(task, cfg["n_per_source"], cfg["n_cal"],
                           cfg["n_test_sets"], cfg["m_per_test"])
    out = _out_dir(cfg["out"])
    save_bundle(bundle, out)
    _echo_config(out, cfg)
    print(f"bundle written to {out}")
    print(f"  k={bundle.k} d={bundle.dim} n_per_source={cfg['n_per_source']} "
          f"n_cal={cfg['n_cal']} test_sets={len(bundle.tests)}")
    print(f"  cov_radius={_fmt_value(cfg['cov_radius'])} "
          f"concept_span={_fmt_value(cfg['concept_span'])} "
          f"noise={_fmt_value(cfg['noise'])} family={cfg['family']}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, dict(
        bundle=None, out=None, variant="wrcp", beta=1.0, epochs=200,
        lr=1e-3, seed=0))
    if cfg["bundle"] is None or cfg["out"] is None:
        raise ValidationError("train requires --bundle and --out")
    bundle = load_bundle(cfg["bundle"])
    train_cfg = TrainConfig(beta=cfg["beta"], epochs=cfg["epochs"],
                            learning_rate=cfg["lr"], seed=cfg["seed"],
                            variant=cfg["variant"])
    out = _out_dir(cfg["out"])
    try:
        model, metrics = train(bundle, train_cfg)
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc} (last finite epoch {exc.epoch - 1})",
              file=sys.stderr)
        return 2
    save_checkpoint(model, out / "checkpoint.bin")
    header = ["epoch", "total_loss", "mse_sum", "wass_sum"] \
        + [f"w_src_{i}" for i in range(bundle.k)]
    _write_csv(out / "train_metrics.csv", header,
               [(m.epoch, m.total_loss, m.mse_sum, m.wass_sum,
                 *m.per_source_w) for m in metrics])
    _echo_config(out, cfg)
    print(f"checkpoint and metrics written to {out}")
    print(f"  final total_loss={_fmt_value(metrics[-1].total_loss)} "
          f"mse_sum={_fmt_value(metrics[-1].mse_sum)} "
          f"wass_sum={_fmt_value(metrics[-1].wass_sum)}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args, dict(
        bundle=None, checkpoint=None, out=None, methods="cp,iwcp",
        alphas=",".join(str(a) for a in DEFAULT_ALPHAS), seed=0, trial=0,
        weight_mode="kde", conservative=False))
    if None in (cfg["bundle"], cfg["checkpoint"], cfg["out"]):
        raise ValidationError("eval requires --bundle, --checkpoint and --out")
    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}; choose from {METHODS}")
    alphas = _parse_floats(cfg["alphas"])
    bundle = load_bundle(cfg["bundle"])
    model = load_checkpoint(cfg["checkpoint"])
    if model.input_dim != bundle.dim:
        raise ValidationError(
            f"checkpoint dimension {model.input_dim} does not match bundle "
            f"dimension {bundle.dim}")
    rows = evaluate_bundle(bundle, {m: model for m in methods}, methods,
                           alphas=alphas, trial=cfg["trial"], seed=cfg["seed"],
                           weight_mode=cfg["weight_mode"],
                           conservative=cfg["conservative"])
    out = _out_dir(cfg["out"])
    _write_csv(out / "eval.csv",
               ["trial", "test_set", "method", "alpha", "coverage", "gap",
                "avg_size", "tau"], _eval_rows_to_csv(rows))
    _write_csv(out / "eval_summary.csv", ["method", "mean_gap", "mean_size"],
               summarize_rows(rows))
    _echo_config(out, cfg)
    for method, gap, size in summarize_rows(rows):
        print(f"{method}: mean_gap={_fmt_value(gap)} mean_size={_fmt_value(size)}")
    return 0


def cmd_correlate(args) -> int:
    cfg = _resolve(args, dict(
        bundle=None, checkpoint=None, out=None,
        alphas=",".join(str(a) for a in DEFAULT_ALPHAS), seed=0))
    if None in (cfg["bundle"], cfg["checkpoint"], cfg["out"]):
        raise ValidationError("correlate requires --bundle, --checkpoint, --out")
    bundle = load_bundle(cfg["bundle"])
    if len(bundle.tests) < 3:
        raise ValidationError("correlation study refused: fewer than 3 test sets")
    if len(bundle.tests) < 20:
        print(f"warning: only {len(bundle.tests)} test sets (recommended >= 20)",
              file=sys.stderr)
    model = load_checkpoint(cfg["checkpoint"])
    rows, coeffs = correlation_study(bundle, model,
                                     alphas=_parse_floats(cfg["alphas"]))
    out = _out_dir(cfg["out"])
    _write_csv(out / "correlate.csv",
               ["test_set", "avg_gap", "w", "tv", "kl", "de"],
               [(r["test_set"], r["avg_gap"], r["w"], r["tv"], r["kl"],
                 r["de"]) for r in rows])
    _write_csv(out / "spearman.csv", ["measure", "spearman"],
               [(m, "undefined" if c is None else c)
                for m, c in sorted(coeffs.items())])
    _echo_config(out, cfg)
    for m, c in sorted(coeffs.items()):
        print(f"spearman[{m}] = {'undefined' if c is None else _fmt_value(c)}")
    return 0


def cmd_pareto(args) -> int:
    cfg = _resolve(args, dict(
        bundle=None, out=None, betas="0,1,4,16", epochs=200, lr=1e-3,
        seed=0, alphas=",".join(str(a) for a in DEFAULT_ALPHAS)))
    if cfg["bundle"] is None or cfg["out"] is None:
        raise ValidationError("pareto requires --bundle and --out")
    betas = _parse_floats(cfg["betas"])
    if not betas:
        raise ValidationError("beta list must be nonempty")
    bundle = load_bundle(cfg["bundle"])
    results = pareto_sweep(bundle, betas, epochs=cfg["epochs"],
                           learning_rate=cfg["lr"], seed=cfg["seed"],
                           alphas=_parse_floats(cfg["alphas"]))
    out = _out_dir(cfg["out"])
    _write_csv(out / "pareto.csv", ["beta", "mean_gap", "mean_size"],
               [(r["beta"], r["mean_gap"], r["mean_size"]) for r in results])
    series = [Series("regularized front",
                     [r["mean_size"] for r in results],
                     [r["mean_gap"] for r in results])]
    zero = [r for r in results if r["beta"] == 0.0]
    if zero:
        series.append(Series("IW-CP (beta=0)",
                             [zero[0]["mean_size"]], [zero[0]["mean_gap"]]))
    render_svg(series, out / "pareto.svg", title="Coverage gap vs set size",
               xlabel="mean set size", ylabel="mean coverage gap")
    _echo_config(out, cfg)
    for r in results:
        tag = " (IW-CP)" if r["beta"] == 0.0 else ""
        print(f"beta={_fmt_value(r['beta'])}{tag}: "
              f"gap={_fmt_value(r['mean_gap'])} size={_fmt_value(r['mean_size'])}")
    return 0


def cmd_bounds(args) -> int:
    cfg = _resolve(args, dict(
        bundle=None, checkpoint=None, out=None,
        alphas=",".join(str(a) for a in DEFAULT_ALPHAS), seed=0,
        density_bound=None, w_hat=None, n=None, m=None, lambda_p=0.0,
        lambda_q=0.0, sigma_p=3.0, sigma_q=3.0, t_p=0.0, t_q=0.0))
    if cfg["out"] is None:
        raise ValidationError("bounds requires --out")
    out = _out_dir(cfg["out"])
    wrote_any = False
    if cfg["density_bound"] is not None:
        for key in ("w_hat", "n", "m"):
            if cfg[key] is None:
                raise ValidationError(f"finite-sample bound needs --{key.replace('_', '-')}")
        try:
            inputs = BoundInputs(
                density_bound=float(cfg["density_bound"]),
                w_hat=float(cfg["w_hat"]), n=int(cfg["n"]), m=int(cfg["m"]),
                lambda_p=float(cfg["lambda_p"]), lambda_q=float(cfg["lambda_q"]),
                sigma_p=float(cfg["sigma_p"]), sigma_q=float(cfg["sigma_q"]),
                t_p=float(cfg["t_p"]), t_q=float(cfg["t_q"]))
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        bound, confidence = empirical_gap_bound(inputs)
        _write_csv(out / "finite_sample_bound.csv",
                   ["bound", "confidence"], [(bound, confidence)])
        print(f"finite-sample bound={_fmt_value(bound)} "
              f"confidence={_fmt_value(confidence)}")
        wrote_any = True
    if cfg["bundle"] is not None and cfg["checkpoint"] is not None:
        bundle = load_bundle(cfg["bundle"])
        model = load_checkpoint(cfg["checkpoint"])
        alphas = _parse_floats(cfg["alphas"])
        rows = bound_sweep(bundle, model, alphas=alphas, seed=cfg["seed"])
        _write_csv(out / "bound_sweep.csv",
                   ["test_set", "alpha", "gap", "w_hat", "bound", "holds"],
                   [(r["test_set"], r["alpha"], r["gap"], r["w_hat"],
                     r["bound"], r["holds"]) for r in rows])
        frac = float(np.mean([r["holds"] for r in rows]))
        print(f"score-space bound holds on {_fmt_value(frac)} of cells")
        if bundle.task is not None:
            ad_rows = alpha_d_sweep(bundle, model, alphas=alphas,
                                    seed=cfg["seed"])
            _write_csv(out / "alpha_d.csv",
                       ["test_set", "alpha", "gap", "alpha_d", "tau"],
                       [(r["test_set"], r["alpha"], r["gap"], r["alpha_d"],
                         r["tau"]) for r in ad_rows])
            worst = max(r["gap"] - r["alpha_d"] for r in ad_rows)
            print(f"worst (gap - alpha_d) = {_fmt_value(worst)}")
        wrote_any = True
    if not wrote_any:
        raise ValidationError(
            "bounds needs either --density-bound (+ --w-hat --n --m) or "
            "--bundle with --checkpoint")
    _echo_config(out, cfg)
    return 0


# ---------------------------------------------------------------------------
# Entry point


def _build_parser() -> _Parser:
    parser = _Parser(prog="wrcp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--config")
        p.add_argument("--out")

    p = sub.add_parser("gen", help="generate a synthetic bundle directory")
    add_common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n-per-source", dest="n_per_source", type=int)
    p.add_argument("--n-cal", dest="n_cal", type=int)
    p.add_argument("--n-test-sets", dest="n_test_sets", type=int)
    p.add_argument("--m-per-test", dest="m_per_test", type=int)
    p.add_argument("--cov-radius", dest="cov_radius", type=float)
    p.add_argument("--concept-span", dest="concept_span", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--family", choices=("default", "f1"))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a bundle")
    add_common(p)
    p.add_argument("--bundle")
    p.add_argument("--variant", choices=("wrcp", "wrcp_uw", "erm"))
    p.add_argument("--beta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate methods over test sets")
    add_common(p)
    p.add_argument("--bundle")
    p.add_argument("--checkpoint")
    p.add_argument("--methods")
    p.add_argument("--alphas")
    p.add_argument("--trial", type=int)
    p.add_argument("--weight-mode", dest="weight_mode",
                   choices=("kde", "oracle"))
    p.add_argument("--conservative", action="store_const", const=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correlate",
                       help="distance measures vs average coverage gap")
    add_common(p)
    p.add_argument("--bundle")
    p.add_argument("--checkpoint")
    p.add_argument("--alphas")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("pareto", help="gap/size front over the beta grid")
    add_common(p)
    p.add_argument("--bundle")
    p.add_argument("--betas")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--alphas")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("bounds", help="coverage-gap bound reports")
    add_common(p)
    p.add_argument("--bundle")
    p.add_argument("--checkpoint")
    p.add_argument("--alphas")
    p.add_argument("--density-bound", dest="density_bound", type=float)
    p.add_argument("--w-hat", dest="w_hat", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--lambda-p", dest="lambda_p", type=float)
    p.add_argument("--lambda-q", dest="lambda_q", type=float)
    p.add_argument("--sigma-p", dest="sigma_p", type=float)
    p.add_argument("--sigma-q", dest="sigma_q", type=float)
    p.add_argument("--t-p", dest="t_p", type=float)
    p.add_argument("--t-q", dest="t_q", type=float)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
