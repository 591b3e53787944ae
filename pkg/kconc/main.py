"""Command-line entry point: one subcommand per pipeline stage, plus ``params`` and ``bench``.

Failures print a single JSON line on stderr and map to fixed exit codes.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from kconc.bench import run_bench
from kconc.budget import compare_budgets, render_budget_table, topology_budgets
from kconc.checkpoints import load_checkpoint
from kconc.config import RunConfig, load_run_config, settings
from kconc.datasets import Dataset, dump_dataset, generate_synthetic, load_dataset
from kconc.distillation import (
    TrainResult,
    dump_soft_targets,
    generate_soft_targets,
    load_soft_targets,
    specialist_scores,
    train_generalist_baseline,
    train_student,
    train_teacher,
)
from kconc.errors import ContractError, KConcError, MissingFileError, UsageError
from kconc.evaluation import evaluate, export_loss_curves, parse_loss_curves, render_eval_table
from kconc.models import ScalingMode, Split, Topology
from kconc.storage import atomic_write_text
from kconc.taxonomy import LabelTaxonomy, dump_taxonomy, load_taxonomy

logger = logging.getLogger(__name__)

UNEXPECTED_EXIT = 1
CONFIG_EXIT = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config")
    common.add_argument("--seed", type=int, help="root seed for data generation and training")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--arch", choices=[t.value for t in Topology])
    common.add_argument("--generic-size", type=int)
    common.add_argument("--self-paced", choices=[m.value for m in ScalingMode])
    common.add_argument("--gamma-init", help="sqrt-nv or const:<value>")
    common.add_argument("--gamma-trainable", choices=["true", "false"])
    common.add_argument("--k", type=int, help="soft targets kept per sample")
    common.add_argument("--epochs", type=int)
    common.add_argument("--workers", type=int, help="parallel workers for teachers and bench arms")
    common.add_argument("--label", help="experiment label used to name checkpoints and curves")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kconc", description="Knowledge concentration: teachers, soft targets, one student")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    common = _common_flags()

    sub.add_parser("gen-data", parents=[common], help="write the synthetic taxonomy and dataset")
    teacher = sub.add_parser("train-teacher", parents=[common], help="train one vertical's specialist")
    teacher.add_argument("--vertical", type=int, required=True)
    sub.add_parser("gen-soft-targets", parents=[common], help="top-K soft targets from all teachers")
    sub.add_parser("train-student", parents=[common], help="train the single student on soft targets")
    sub.add_parser("train-baseline", parents=[common], help="train on hard leaf labels")

    ev = sub.add_parser("eval", parents=[common], help="pvap/mpvap on the test split")
    source = ev.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", type=Path)
    source.add_argument("--teachers", action="store_true", help="evaluate the specialist ensemble")
    source.add_argument("--predictions", type=Path, help="JSONL of {sample_id, scores} in class-layout order")
    ev.add_argument("--json", action="store_true")

    params = sub.add_parser("params", parents=[common], help="top-layer parameter counts of the four topologies")
    params.add_argument("--num-classes", type=int)
    params.add_argument("--num-verticals", type=int)
    params.add_argument("--s-b", type=int)
    params.add_argument("--s1", type=int)
    params.add_argument("--s2", type=int)
    params.add_argument("--json", action="store_true")

    curves = sub.add_parser("export-curves", parents=[common], help="merge per-run loss curves into one CSV")
    curves.add_argument("--output", type=Path)
    curves.add_argument("--runs", help="comma-separated run labels to include (default: all)")

    sub.add_parser("bench", parents=[common], help="run the full desk-scale experiment matrix")
    return parser


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested RunConfig updates for every flag that was given."""
    train: Dict[str, Any] = {}
    arch: Dict[str, Any] = {}
    head: Dict[str, Any] = {}
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        train["seed"] = args.seed
        overrides["data"] = {"seed": args.seed}
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.arch is not None:
        arch["topology"] = args.arch
    if args.generic_size is not None and args.command != "params":
        arch["generic_size"] = args.generic_size
    if args.self_paced is not None:
        head["mode"] = args.self_paced
    if args.gamma_init is not None:
        head["gamma_init"] = args.gamma_init
    if args.gamma_trainable is not None:
        head["trainable"] = args.gamma_trainable == "true"
    if args.k is not None:
        train["k"] = args.k
    if args.epochs is not None:
        train["epochs"] = args.epochs
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.label is not None:
        overrides["experiment_label"] = args.label
    if arch:
        train["arch"] = arch
    if head:
        train["head"] = head
    if train:
        overrides["train"] = train
    return overrides


# Inputs
def _require(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise MissingFileError(f"{what} not found: {path}")
    return Path(path)


def _load_inputs(cfg: RunConfig):
    tax = load_taxonomy(_require(cfg.taxonomy_file, "taxonomy file"))
    dataset = load_dataset(_require(cfg.dataset_file, "dataset file"))
    dataset.check_labels(tax)
    return tax, dataset


def _load_teachers(cfg: RunConfig, tax: LabelTaxonomy) -> Dict[int, TrainResult]:
    teachers = {}
    for v in tax.vertical_roots:
        teachers[v] = TrainResult.from_checkpoint(load_checkpoint(cfg.teacher_file(v)))
    return teachers


def _write_curve(cfg: RunConfig, label: str, result: TrainResult) -> Path:
    return atomic_write_text(cfg.curve_file(label), export_loss_curves({label: result.losses}))


# Commands
def cmd_gen_data(cfg: RunConfig, args) -> None:
    tax, dataset = generate_synthetic(cfg.data)
    dump_taxonomy(tax, cfg.taxonomy_file)
    dump_dataset(dataset, cfg.dataset_file)
    print(f"{cfg.taxonomy_file}\n{cfg.dataset_file}")


def cmd_train_teacher(cfg: RunConfig, args) -> None:
    tax, dataset = _load_inputs(cfg)
    if args.vertical not in tax.vertical_roots:
        raise ContractError(f"{args.vertical} is not a vertical root; choose from {tax.vertical_roots}")
    result = train_teacher(tax, args.vertical, dataset, cfg.train)
    path = result.save(cfg.teacher_file(args.vertical))
    _write_curve(cfg, f"teacher-{args.vertical}", result)
    print(path)


def cmd_gen_soft_targets(cfg: RunConfig, args) -> None:
    tax, dataset = _load_inputs(cfg)
    records = generate_soft_targets(
        _load_teachers(cfg, tax),
        tax,
        dataset.split(Split.TRAIN),
        cfg.train.k,
        cfg.train.force_include_groundtruth,
    )
    print(dump_soft_targets(records, cfg.soft_targets_file))


def cmd_train_student(cfg: RunConfig, args) -> None:
    tax, dataset = _load_inputs(cfg)
    soft_targets = load_soft_targets(_require(cfg.soft_targets_file, "soft-target file"))
    result = train_student(tax, dataset, soft_targets, cfg.train)
    path = result.save(cfg.checkpoint_file(cfg.experiment_label))
    _write_curve(cfg, cfg.experiment_label, result)
    print(path)


def cmd_train_baseline(cfg: RunConfig, args) -> None:
    tax, dataset = _load_inputs(cfg)
    label = args.label or "baseline"
    result = train_generalist_baseline(tax, dataset, cfg.train)
    path = result.save(cfg.checkpoint_file(label))
    _write_curve(cfg, label, result)
    print(path)


def _prediction_scores(path: Path, test: Dataset, num_classes: int) -> np.ndarray:
    rows = {}
    for line in _require(path, "predictions file").read_text().splitlines():
        if line.strip():
            record = json.loads(line)
            rows[int(record["sample_id"])] = record["scores"]
    missing = [int(s) for s in test.sample_ids() if int(s) not in rows]
    if missing:
        raise ContractError(f"predictions missing for {len(missing)} test samples, first {missing[:5]}")
    scores = np.array([rows[int(s)] for s in test.sample_ids()], dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != num_classes:
        raise ContractError(f"predictions have shape {scores.shape}, expected (n, {num_classes})")
    return scores


def cmd_eval(cfg: RunConfig, args) -> None:
    tax, dataset = _load_inputs(cfg)
    test = dataset.split(Split.TEST)
    layout = tax.class_layout()
    if args.checkpoint is not None:
        result = TrainResult.from_checkpoint(load_checkpoint(args.checkpoint))
        if tuple(result.class_ids) != layout.order:
            raise ContractError("checkpoint classes do not match the taxonomy's class layout")
        scores, label = result.scores(test.features()), args.checkpoint.stem
    elif args.teachers:
        scores, label = specialist_scores(_load_teachers(cfg, tax), tax, test.features()), "specialists"
    else:
        scores, label = _prediction_scores(args.predictions, test, layout.num_classes), args.predictions.stem
    result = evaluate(scores, test.labels(), tax, test.sample_ids())
    if args.json:
        print(result.model_dump_json())
    else:
        print(render_eval_table([(label, result)], tax), end="")


def _given(value, default):
    return default if value is None else value


def cmd_params(cfg: RunConfig, args) -> None:
    arch, data = cfg.train.arch, cfg.data
    budgets = topology_budgets(
        _given(args.num_classes, data.num_verticals * data.leaves_per_vertical),
        _given(args.num_verticals, data.num_verticals),
        _given(args.s_b, arch.s_b),
        _given(args.s1, arch.s1),
        _given(args.s2, arch.s2),
        _given(args.generic_size, 1),
    )
    report = compare_budgets(budgets)
    if args.json:
        print(report.model_dump_json())
    else:
        print(render_budget_table(report), end="")


def cmd_export_curves(cfg: RunConfig, args) -> None:
    curve_dir = cfg.out_dir / "curves"
    files = sorted(curve_dir.glob("*.csv")) if curve_dir.is_dir() else []
    if not files:
        raise MissingFileError(f"no loss curves under {curve_dir}")
    runs: Dict[str, List[float]] = {}
    for path in files:
        runs.update(parse_loss_curves(path.read_text()))
    if args.runs:
        wanted = [label.strip() for label in args.runs.split(",")]
        unknown = [label for label in wanted if label not in runs]
        if unknown:
            raise MissingFileError(f"no loss curve for runs {unknown} under {curve_dir}")
        runs = {label: runs[label] for label in wanted}
    output = args.output or cfg.out_dir / "curves.csv"
    print(atomic_write_text(output, export_loss_curves(runs)))


def cmd_bench(cfg: RunConfig, args) -> None:
    run_bench(cfg)
    print((cfg.out_dir / "report.md").read_text(), end="")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-teacher": cmd_train_teacher,
    "gen-soft-targets": cmd_gen_soft_targets,
    "train-student": cmd_train_student,
    "train-baseline": cmd_train_baseline,
    "eval": cmd_eval,
    "params": cmd_params,
    "export-curves": cmd_export_curves,
    "bench": cmd_bench,
}


def _emit_error(error_code: str, detail: str) -> None:
    print(json.dumps({"error_code": error_code, "detail": detail}), file=sys.stderr)


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        cfg = load_run_config(args.config, config_overrides(args))
        COMMANDS[args.command](cfg, args)
        return 0
    except KConcError as e:
        logger.error(f"{args.command if 'args' in locals() else 'kconc'} failed: {e.detail}")
        _emit_error(**e.to_dict())
        return e.exit_code
    except ValidationError as e:
        _emit_error("invalid_config", " ".join(str(e).split()))
        return CONFIG_EXIT
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except Exception as e:
        logger.exception("Unexpected failure")
        _emit_error("unexpected", f"{type(e).__name__}: {e}")
        return UNEXPECTED_EXIT


def main() -> None:
    logging.basicConfig(level=settings.log_level)
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
