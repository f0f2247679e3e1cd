"""Repeated train -> infer -> test runs and their aggregated report."""

from __future__ import annotations

import csv
import io
import logging
import math
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .finn import FinnParams
from .inversion import InverseConfig, infer_topography, reconstruction_error
from .scenario import SIGMA_M, generate_dataset
from .swe import SimConfig
from .topography import ARCTAN_AMPLITUDE_M, ARCTAN_STEEPNESS
from .training import TrainConfig, evaluate, load_sequences, train

log = logging.getLogger(__name__)

# (key, label, unit) in table order
METRICS = [
    ("params", "# params", "count"),
    ("train_error", "Train error", "m^2"),
    ("infer_error", "Infer. error", "m^2"),
    ("test_error", "Test error", "m^2"),
    ("full_rec", "Full rec. error", "m"),
    ("inner_rec", "Inner rec. error", "m"),
]


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InverseConfig = field(default_factory=InverseConfig)
    n_train: int = 512
    n_infer: int = 256
    n_test: int = 256
    beta: float | None = None
    topo_seed: int | None = None
    label: str = "FINN"
    sigma_m: float = SIGMA_M
    amplitude_m: float = ARCTAN_AMPLITUDE_M
    steepness: float = ARCTAN_STEEPNESS


@dataclass
class SeedResult:
    seed: int
    metrics: dict[str, float] = field(default_factory=dict)
    error: str | None = None


@dataclass
class RunReport:
    label: str
    seeds: list[int]
    mean: dict[str, float]
    std: dict[str, float]
    per_seed: list[SeedResult] = field(default_factory=list)

    @property
    def repetitions(self) -> int:
        return len(self.seeds)

    @property
    def single_run(self) -> bool:
        return self.repetitions == 1


def aggregate(results: list[SeedResult], label: str) -> RunReport:
    ok = [r for r in results if r.error is None]
    if not ok:
        raise ValueError("no completed repetitions to aggregate")
    mean, std = {}, {}
    for key, _, _ in METRICS:
        vals = [r.metrics[key] for r in ok]
        m = math.fsum(vals) / len(vals)
        mean[key] = m
        # population standard deviation; 0 for a single run
        std[key] = math.sqrt(math.fsum((v - m) ** 2 for v in vals) / len(vals))
    return RunReport(label, [r.seed for r in ok], mean, std, list(results))


def run_seed(
    seed: int,
    cfg: ExperimentConfig,
    workdir,
    init_params: FinnParams | None = None,
    h_init_true: bool = False,
) -> SeedResult:
    """One repetition: generate, train, infer H, test with the inferred H."""
    root = Path(workdir) / f"seed_{seed}"
    out = SeedResult(seed)
    try:
        train_m = generate_dataset(
            root / "train", "train", cfg.n_train, seed, cfg.sim, cfg.sigma_m,
            amplitude_m=cfg.amplitude_m, steepness=cfg.steepness,
        )
        infer_m = generate_dataset(
            root / "infer", "infer", cfg.n_infer, seed, cfg.sim, cfg.sigma_m, cfg.beta, cfg.topo_seed
        )
        test_m = generate_dataset(
            root / "test", "test", cfg.n_test, seed, cfg.sim, cfg.sigma_m, cfg.beta, cfg.topo_seed
        )

        tcfg = replace(cfg.train, seed=seed)
        tres = train(train_m, tcfg, init=init_params, checkpoint_path=root / "model.fnn", log_path=root / "train.log")
        params = tres.params
        if tres.losses:
            train_error = min(tres.losses)
        else:
            train_error = evaluate(train_m, params, window=tcfg.train_window, batch_size=tcfg.batch_size)

        infer_seqs = load_sequences(infer_m)
        H_true = infer_seqs[0].H
        icfg = replace(cfg.infer, seed=seed)
        ires = infer_topography(infer_seqs, params, icfg, H_init=H_true if h_init_true else None, log_path=root / "infer.log")
        test_error = evaluate(test_m, params, H=ires.H, window=icfg.window, batch_size=icfg.batch_size)

        out.metrics = {
            "params": float(params.count),
            "train_error": train_error,
            "infer_error": ires.inference_error,
            "test_error": test_error,
            "full_rec": reconstruction_error(ires.H, H_true, "full"),
            "inner_rec": reconstruction_error(ires.H, H_true, "inner"),
        }
    except Exception as exc:  # recorded per seed, the report covers the rest
        log.error("seed %d failed: %s", seed, exc)
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def run_experiment(
    seeds: list[int],
    cfg: ExperimentConfig,
    workdir=None,
    init_params: FinnParams | None = None,
    h_init_true: bool = False,
    workers: int = 1,
) -> RunReport:
    if not seeds:
        raise ValueError("at least one seed is required")
    with tempfile.TemporaryDirectory() as tmp:
        base = Path(workdir) if workdir is not None else Path(tmp)
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                futures = [pool.submit(run_seed, s, cfg, base, init_params, h_init_true) for s in seeds]
                results = [f.result() for f in futures]
        else:
            results = [run_seed(s, cfg, base, init_params, h_init_true) for s in seeds]
    return aggregate(results, cfg.label)


def report_rows(report: RunReport) -> list[tuple[str, float, float, str]]:
    return [(label, report.mean[key], report.std[key], unit) for key, label, unit in METRICS]


def format_table(report: RunReport) -> str:
    rows = report_rows(report)
    width = max(len(r[0]) for r in rows)
    lines = [f"{'metric':<{width}}  {report.label}  (R={report.repetitions})"]
    for label, m, s, unit in rows:
        lines.append(f"{label:<{width}}  {m:.4g} +- {s:.2g} {unit}")
    if report.single_run:
        lines.append("note: single repetition, std reported as 0")
    failed = [r for r in report.per_seed if r.error is not None]
    for r in failed:
        lines.append(f"failed seed {r.seed}: {r.error}")
    return "\n".join(lines) + "\n"


def format_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "mean", "std", "unit"])
    for label, m, s, unit in report_rows(report):
        w.writerow([label, repr(m), repr(s), unit])
    return buf.getvalue()


def emit_report(report: RunReport, path, fmt: str = "text-table") -> None:
    if report is None or report.repetitions < 1:
        raise ValueError("report has no repetitions; run at least one seed")
    if fmt == "csv":
        text = format_csv(report)
    elif fmt == "text-table":
        text = format_table(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text)


def parse_csv(text: str) -> dict[str, tuple[float, float, str]]:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["metric", "mean", "std", "unit"]:
        raise ValueError("unexpected csv header")
    return {r[0]: (float(r[1]), float(r[2]), r[3]) for r in rows[1:]}
