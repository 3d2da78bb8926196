import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import DivergenceError
from .footprints import DefectType, TrendThresholds
from .pipeline import cmd_analyze, cmd_experiment, cmd_inject, cmd_train, run_experiment_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

logger = logging.getLogger("model_triage")


def _thresholds(text: str) -> TrendThresholds:
    try:
        return TrendThresholds.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _defect_kind(text: str) -> DefectType | None:
    if text.lower() == "none":
        return None
    try:
        return DefectType(text.upper())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"unknown defect {text!r} (ITD, UTD, SD or none)") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="model-triage",
        description="Locate the dominant root cause of a classifier's misclassifications.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug output")
    commands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment configuration")
    common.add_argument("--out", help="Output directory (overrides output_dir)")

    train = commands.add_parser("train", parents=[common], help="Train the base model")
    train.add_argument("--seed", type=int, help="Global seed (overrides the config)")

    inject = commands.add_parser("inject", parents=[common], help="Write the corrupted dataset or spec")
    inject.add_argument("--seed", type=int, help="Global seed (overrides the config)")

    analyze = commands.add_parser("analyze", parents=[common], help="Diagnose a trained model")
    analyze.add_argument("--model", required=True, help="MSC1 model file")
    analyze.add_argument("--seed", type=int, help="Global seed (overrides the config)")
    analyze.add_argument("--thresholds", type=_thresholds, help="Trend thresholds as t_a,t_d")
    analyze.add_argument("--docx", action="store_true", help="Also render report.docx")

    experiment = commands.add_parser("experiment", parents=[common], help="Inject, train and analyze")
    experiment.add_argument(
        "--seed", type=int, action="append", help="Global seed; repeat to run several seeds"
    )
    experiment.add_argument(
        "--inject",
        type=_defect_kind,
        action="append",
        metavar="KIND",
        help="Defect to inject (ITD, UTD, SD, none); repeat for a grid",
    )
    experiment.add_argument("--thresholds", type=_thresholds, help="Trend thresholds as t_a,t_d")
    experiment.add_argument("--docx", action="store_true", help="Also render report.docx")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    if args.out:
        config = config.with_output_dir(Path(args.out))
    seed = args.seed[0] if isinstance(args.seed, list) and len(args.seed) == 1 else args.seed
    if isinstance(seed, int):
        config = config.with_seed(seed)
    return config


def _run(args: argparse.Namespace) -> int:
    config = _load(args)

    if args.command == "train":
        outcome = cmd_train(config)
        print(f"Model written to: {outcome.model_path}")
        print(f"Train accuracy: {outcome.train_accuracy:.4f}")
        print(f"Test accuracy: {outcome.test_accuracy:.4f}")
        return EXIT_OK

    if args.command == "inject":
        manifest = cmd_inject(config)
        changed = len(manifest.removed_case_ids) + len(manifest.relabeled_case_ids)
        print(f"Injected {manifest.kind.value} into {config.output_dir} ({changed} cases changed)")
        return EXIT_OK

    if args.command == "analyze":
        report = cmd_analyze(config, args.model, args.thresholds, args.docx)
        if report.no_faulty_cases:
            print("No faulty cases: every test case is classified correctly.")
        else:
            ratios = " ".join(f"{d.value}={report.ratios[d]:.3f}" for d in DefectType)
            print(f"Faulty cases: {report.faulty_case_count} {ratios} dominant={report.dominant.value}")
        print(f"Report written to: {config.output_dir / 'report.json'}")
        return EXIT_OK

    seeds = args.seed if isinstance(args.seed, list) and len(args.seed) > 1 else None
    kinds = args.inject
    if seeds is None and kinds is None:
        print(cmd_experiment(config, args.thresholds, args.docx).summary_line())
        return EXIT_OK
    if kinds is None:
        kinds = [config.injection.kind if config.injection else None]
    for summary in run_experiment_grid(config, seeds or [config.seed], kinds, args.thresholds, args.docx):
        print(f"{summary.output_dir.name}: {summary.summary_line()}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _run(args)
    except (DivergenceError, FloatingPointError) as exc:
        print(f"Numeric failure{_stage_suffix(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"Error{_stage_suffix(exc)}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _stage_suffix(exc: BaseException) -> str:
    stage = getattr(exc, "stage", None)
    return f" in {stage} stage" if stage else ""


if __name__ == "__main__":
    sys.exit(main())
