"""Desk-scale experiment matrix: distillation, SC topologies, generic sweep, self-paced heads, gamma variants."""
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from jinja2 import Template

from kconc.budget import compare_budgets, generic_sweep, topology_budgets
from kconc.config import RunConfig
from kconc.datasets import Dataset, dump_dataset, generate_synthetic
from kconc.distillation import (
    TrainResult,
    dump_soft_targets,
    generate_soft_targets,
    specialist_scores,
    train_generalist_baseline,
    train_student,
    train_teachers,
)
from kconc.evaluation import evaluate, export_loss_curves, render_eval_table
from kconc.models import (
    BenchReport,
    BenchRow,
    EvalResult,
    HeadSpec,
    ScalingMode,
    Split,
    Topology,
    TrainConfig,
)
from kconc.storage import atomic_write_text
from kconc.taxonomy import LabelTaxonomy, dump_taxonomy
from kconc.workers.pool import run_parallel

logger = logging.getLogger(__name__)

GAMMA_PREFIX = "gamma:"


@dataclass
class Arm:
    name: str
    tables: Tuple[str, ...]
    topology: Topology
    distilled: bool
    generic_size: int = 0
    head: HeadSpec = field(default_factory=HeadSpec)

    def key(self) -> Tuple:
        # FC-SC generic with x=0 is exactly FC-SC
        topology = Topology.FC_SC if self.topology == Topology.FC_SC_GENERIC and not self.generic_size else self.topology
        return (topology.value, self.generic_size, self.distilled, self.head.model_dump_json())

    @property
    def slug(self) -> str:
        return re.sub(r"[^A-Za-z0-9]+", "-", self.name).strip("-").lower()


def bench_arms(generic_sizes: List[int]) -> List[Arm]:
    vertical = HeadSpec(mode=ScalingMode.VERTICAL, gamma_init="sqrt-nv", trainable=True)
    klass = HeadSpec(mode=ScalingMode.CLASS, gamma_init="sqrt-nv", trainable=True)
    arms = [
        Arm("fc-fc", ("distillation", "per-vertical"), Topology.FC_FC, False),
        Arm("fc-fc+D", ("distillation", "sc-layers", "per-vertical"), Topology.FC_FC, True),
        Arm("sc-sc", ("distillation",), Topology.SC_SC, False),
        Arm("sc-sc+D", ("distillation", "sc-layers"), Topology.SC_SC, True),
        Arm("fc-sc+D", ("sc-layers", "self-paced", "per-vertical"), Topology.FC_SC, True),
    ]
    arms += [
        Arm(f"fc-sc-generic(x={x})+D", ("generic-sweep",), Topology.FC_SC_GENERIC, True, generic_size=x)
        for x in generic_sizes
    ]
    arms += [
        Arm("fc-sc+D+S(vertical)", ("self-paced", "per-vertical"), Topology.FC_SC, True, head=vertical),
        Arm("fc-sc+D+S(class)", ("self-paced",), Topology.FC_SC, True, head=klass),
    ]
    gamma_variants = [
        ("fixed-sqrt-nv-vertical", HeadSpec(mode=ScalingMode.VERTICAL, gamma_init="sqrt-nv", trainable=False)),
        ("const10-vertical", HeadSpec(mode=ScalingMode.VERTICAL, gamma_init="const:10", trainable=True)),
        ("const10-class", HeadSpec(mode=ScalingMode.CLASS, gamma_init="const:10", trainable=True)),
        ("sqrt-nv-vertical", vertical),
        ("sqrt-nv-class", klass),
    ]
    arms += [
        Arm(GAMMA_PREFIX + name, ("gamma-variants",), Topology.FC_SC, True, head=head)
        for name, head in gamma_variants
    ]
    return arms


def _run_arm(
    arm: Arm,
    tax: LabelTaxonomy,
    dataset: Dataset,
    soft_targets,
    cfg: TrainConfig,
) -> TrainResult:
    arch = cfg.arch.model_copy(update={"topology": arm.topology, "generic_size": arm.generic_size})
    if arm.distilled:
        return train_student(tax, dataset, soft_targets, cfg, arch=arch, head=arm.head)
    return train_generalist_baseline(tax, dataset, cfg, arch=arch, head=arm.head)


REPORT_TEMPLATE = Template(
    """# Bench report (seed {{ report.seed }}, N={{ report.num_classes }}, M={{ report.num_verticals }})

| arm | tables | top params | final loss | mpvap |
|---|---|---:|---:|---:|
{% for row in report.rows -%}
| {{ row.arm }} | {{ row.tables|join(", ") }} | {{ "-" if row.top_params is none else row.top_params }} | {{ "-" if row.final_loss is none else "%.4f"|format(row.final_loss) }} | {{ "%.1f"|format(100 * row.mpvap) }} |
{% endfor %}
## Per-vertical AP

{{ per_vertical }}
"""
)


def run_bench(cfg: RunConfig) -> BenchReport:
    """Run every arm and write report, curves, budgets and checkpoints under ``cfg.out_dir``."""
    out = cfg.out_dir
    seed = cfg.train.seed
    data_spec = cfg.data.model_copy(update={"seed": seed})
    tax, dataset = generate_synthetic(data_spec)
    dump_taxonomy(tax, out / "taxonomy.jsonl")
    dump_dataset(dataset, out / "dataset.jsonl")

    bias = {"use_bias": cfg.bench.use_bias}
    student_cfg = cfg.train.model_copy(
        update={
            "learning_rate": cfg.bench.learning_rate,
            "epochs": cfg.bench.epochs,
            "arch": cfg.train.arch.model_copy(update=bias),
            "teacher_arch": cfg.train.teacher_arch.model_copy(update=bias),
        }
    )
    teacher_cfg = student_cfg.model_copy(update={"epochs": cfg.bench.teacher_epochs})

    teachers = train_teachers(tax, dataset, teacher_cfg, cfg.workers)
    for vertical_id, teacher in teachers.items():
        teacher.save(out / "teachers" / f"vertical-{vertical_id}.ckpt")
    soft_targets = generate_soft_targets(
        teachers, tax, dataset.split(Split.TRAIN), student_cfg.k, student_cfg.force_include_groundtruth
    )
    dump_soft_targets(soft_targets, out / "soft_targets.jsonl")

    test = dataset.split(Split.TEST)
    test_x, test_y, test_ids = test.features(), test.labels(), test.sample_ids()

    arms = bench_arms(cfg.bench.generic_sizes)
    unique: Dict[Tuple, Arm] = {}
    for arm in arms:
        unique.setdefault(arm.key(), arm)
    logger.info(f"Bench: {len(arms)} arms, {len(unique)} distinct trainings")
    jobs = [
        lambda arm=arm: _run_arm(arm, tax, dataset, soft_targets, student_cfg) for arm in unique.values()
    ]
    trained: Dict[Tuple, TrainResult] = dict(zip(unique.keys(), run_parallel(jobs, cfg.workers)))

    evals: Dict[Tuple, EvalResult] = {}
    for key, result in trained.items():
        evals[key] = evaluate(result.scores(test_x), test_y, tax, test_ids)
        result.save(out / "checkpoints" / f"{unique[key].slug}.ckpt")

    rows = []
    for arm in arms:
        result, ev = trained[arm.key()], evals[arm.key()]
        rows.append(
            BenchRow(
                arm=arm.name,
                tables=list(arm.tables),
                topology=arm.topology,
                generic_size=arm.generic_size,
                distilled=arm.distilled,
                self_paced=arm.head.mode,
                gamma_init=None if arm.head.mode == ScalingMode.NONE else arm.head.gamma_init,
                gamma_trainable=None if arm.head.mode == ScalingMode.NONE else arm.head.trainable,
                top_params=result.model.top_layer_weight_count(),
                final_loss=result.final_loss,
                mpvap=ev.mpvap,
                per_vertical=ev.per_vertical,
            )
        )
    specialists = evaluate(specialist_scores(teachers, tax, test_x), test_y, tax, test_ids)
    rows.append(
        BenchRow(
            arm="specialists",
            tables=["per-vertical"],
            mpvap=specialists.mpvap,
            per_vertical=specialists.per_vertical,
        )
    )
    report = BenchReport(
        seed=seed, num_classes=tax.num_classes, num_verticals=len(tax.vertical_roots), rows=rows
    )

    atomic_write_text(out / "report.json", report.model_dump_json(indent=2) + "\n")
    atomic_write_text(out / "report.md", render_bench_report(report, tax))
    curves = {arm.name: trained[arm.key()].losses for arm in arms}
    atomic_write_text(out / "curves.csv", export_loss_curves(curves))
    atomic_write_text(
        out / "gamma_curves.csv",
        export_loss_curves({name[len(GAMMA_PREFIX):]: losses for name, losses in curves.items() if name.startswith(GAMMA_PREFIX)}),
    )
    _write_budgets(cfg, tax, out)
    logger.info(f"Bench finished: report at {out / 'report.json'}")
    return report


def _write_budgets(cfg: RunConfig, tax: LabelTaxonomy, out) -> None:
    a = cfg.train.arch
    N, M = tax.num_classes, len(tax.vertical_roots)
    budgets = topology_budgets(N, M, a.s_b, a.s1, a.s2) + generic_sweep(
        N, M, a.s_b, a.s1, a.s2, cfg.bench.generic_sizes
    )
    atomic_write_text(out / "budgets.json", compare_budgets(budgets).model_dump_json(indent=2) + "\n")


def render_bench_report(report: BenchReport, tax: LabelTaxonomy) -> str:
    rows = [
        (row.arm, EvalResult(per_vertical=row.per_vertical, mpvap=row.mpvap, per_class_ap={}, sample_counts={}))
        for row in report.rows
        if "per-vertical" in row.tables
    ]
    return REPORT_TEMPLATE.render(report=report, per_vertical=render_eval_table(rows, tax))


def find_row(report: BenchReport, arm: str) -> Optional[BenchRow]:
    return next((row for row in report.rows if row.arm == arm), None)
