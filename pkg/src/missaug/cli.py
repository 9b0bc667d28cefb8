"""Command-line front end: run, compare, sweep-alpha, sweep-rate."""

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError


def _parse_alpha(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"alpha must be a number or 'auto', got {text!r}") from None


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="JSON config file; explicit flags override it")
    parser.add_argument("--dataset", metavar="PATH", help="data CSV")
    parser.add_argument("--schema", metavar="PATH", help="schema JSON")
    parser.add_argument("--model", choices=["dae", "gain"])
    parser.add_argument("--mechanism", choices=["mcar", "mar", "mnar"])
    parser.add_argument("--rate", type=float, help="missing rate in (0, 1)")
    parser.add_argument("--alpha", type=_parse_alpha, metavar="FLOAT|auto",
                        help="augmentation weight; 'auto' probes a grid")
    parser.add_argument("--misa", choices=["on", "off"],
                        help="train with the augmented objective")
    parser.add_argument("--repeats", type=int)
    parser.add_argument("--folds", type=int)
    parser.add_argument("--epochs", type=int,
                        help="override the dataset-size rule")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")


# CLI flag -> ExperimentConfig field; --misa is handled separately.
_FLAG_FIELDS = {"dataset": "dataset_path", "schema": "schema_path",
                "out": "out_dir", "seed": "seed", "model": "model",
                "mechanism": "mechanism", "rate": "rate", "alpha": "alpha",
                "repeats": "repeats", "folds": "folds", "epochs": "epochs"}


def _config_from_args(args) -> harness.ExperimentConfig:
    merged: dict = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(
                f"cannot read config {args.config}: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")
        merged.update(raw)
    for flag, field in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            merged[field] = value
    if args.misa is not None:
        merged["misa"] = args.misa == "on"
    if "dataset_path" not in merged or "schema_path" not in merged:
        raise ConfigError("a dataset and schema are required; pass "
                          "--dataset/--schema or a --config that names them")
    return harness.ExperimentConfig.from_dict(merged)


def _print_report(label: str, result: harness.ExperimentResult) -> None:
    report = result.report
    print(f"{label} {result.run_id}  {report.metric} "
          f"{report.mean:.4f} +/- {report.std:.4f}  "
          f"alpha {report.alpha:g}  {result.wall_seconds:.3f}s")
    print(f"  results: {result.results_path}")


def _cmd_run(args) -> int:
    result = harness.run(_config_from_args(args))
    _print_report("run", result)
    return 0


def _cmd_compare(args) -> int:
    baseline = harness.load_result(args.baseline)
    augmented = harness.load_result(args.augmented)
    pair = harness.compare(baseline, augmented)
    out_path = Path(args.out) / "comparison.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    pair.save_csv(out_path)
    for row in pair.rows():
        gain = ("" if row["improvement_pct"] is None
                else f"  improvement {row['improvement_pct']:.1f}%")
        print(f"{row['model']:<8} {row['mean']:.4f} +/- {row['std']:.4f}"
              f"{gain}")
    print(f"  table: {out_path}")
    return 0


def _parse_float_list(text: str, flag: str) -> list:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, "
                          f"got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} needs at least one value")
    return values


def _cmd_sweep_alpha(args) -> int:
    config = _config_from_args(args)
    alphas = _parse_float_list(args.alphas, "--alphas") if args.alphas else []
    rows = harness.sweep_alpha(config, alphas)
    for row in rows:
        print(f"{row['model']:<8} alpha {row['alpha']:<8g} "
              f"mean {row['mean']:.4f} +/- {row['std']:.4f}")
    print(f"  table: {Path(config.out_dir) / 'alpha_sweep.csv'}")
    return 0


def _cmd_sweep_rate(args) -> int:
    config = _config_from_args(args)
    rates = _parse_float_list(args.rates, "--rates")
    rows = harness.sweep_missing_rate(config, rates)
    for row in rows:
        print(f"rate {row['rate']:<5g} {row['model']:<6} "
              f"{row['baseline_mean']:.4f} -> {row['augmented_mean']:.4f}  "
              f"improvement {row['improvement_pct']:.1f}%")
    print(f"  table: {Path(config.out_dir) / 'rate_sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="missaug",
        description="Missing-data imputation experiments with "
                    "missingness augmentation.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one experiment")
    _add_config_flags(run_p)
    run_p.set_defaults(handler=_cmd_run)

    cmp_p = sub.add_parser("compare",
                           help="tabulate baseline vs augmented results")
    cmp_p.add_argument("baseline", help="baseline results.json")
    cmp_p.add_argument("augmented", help="augmented results.json")
    cmp_p.add_argument("--out", metavar="DIR", default=".",
                       help="where comparison.csv goes")
    cmp_p.set_defaults(handler=_cmd_compare)

    sa_p = sub.add_parser("sweep-alpha",
                          help="baseline plus one run per weight")
    _add_config_flags(sa_p)
    sa_p.add_argument("--alphas", metavar="A,B,...",
                      help="augmentation weights; empty for baseline only")
    sa_p.set_defaults(handler=_cmd_sweep_alpha)

    sr_p = sub.add_parser("sweep-rate",
                          help="baseline and augmented runs per missing rate")
    _add_config_flags(sr_p)
    sr_p.add_argument("--rates", metavar="R,S,...", required=True,
                      help="missing rates in (0, 1)")
    sr_p.set_defaults(handler=_cmd_sweep_rate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
