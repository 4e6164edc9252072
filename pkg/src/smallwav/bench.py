"""Experiment drivers: teacher training, timing, sweeps, reports.

Everything here composes the other modules into runnable studies: train
a CTC teacher on the synthetic task, distill students at several depths,
time and size each model, and emit CSV/plot-data artifacts.  Runs are
deterministic in their seeds except for the wall-clock columns.

Timing methodology, pinned once: wall clock over the full eval set
(forward plus decode), driver loop on a single thread, one warm-up pass
excluded, median over at least three repeats.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .ctc import ctc_loss
from .decode import best_path_decode, wer
from .distill import (
    DistillConfig,
    DistillHistory,
    adamw_step,
    distill,
    frozen,
    init_adam_state,
    lr_at,
)
from .model import (
    AcousticModel,
    ConfigError,
    LayerSelection,
    ModelConfig,
    count_params,
    init_student,
)
from .quantize import model_size_bytes, prepack, quantize_model
from .tensor import Rng

REPORT_COLUMNS = ("model", "layers", "params", "bytes", "cpu_s", "wer")

TEACHER_COLUMNS = ("epoch", "lr", "train_loss", "val_loss", "val_wer")


@dataclass(frozen=True)
class BenchReport:
    """One row of the size/latency/accuracy table.

    wer is in percent; cpu_s is the median eval-set wall clock from
    measure_inference and the only field that varies between identically
    seeded runs.
    """

    model: str
    layers: int
    params: int
    size_bytes: int
    cpu_s: float
    wer: float

    def __post_init__(self):
        for field in ("layers", "params", "size_bytes", "cpu_s", "wer"):
            if getattr(self, field) < 0:
                raise ConfigError(f"BenchReport.{field} must be nonnegative")


def eval_wer(model, eval_set, boundary: int) -> float:
    """Corpus WER of a model over a dataset, in percent.

    Works on float and quantized models alike; both expose infer().
    """
    refs, hyps = [], []
    for wave, transcript in eval_set:
        refs.append(list(transcript))
        hyps.append(best_path_decode(model.infer(wave)))
    return 100.0 * wer(refs, hyps, boundary=boundary).wer


def measure_inference(model, eval_set, repeats: int = 3) -> float:
    """Median wall-clock seconds for forward+decode over the eval set.

    One untimed pass warms caches first; then the full set runs
    `repeats` times and the median is returned.  The loop itself is
    single-threaded; callers wanting exclusive timing must not run
    anything else concurrently.
    """
    if repeats < 3:
        raise ConfigError(f"measure_inference: repeats must be >= 3, got {repeats}")

    def one_pass():
        for wave, _ in eval_set:
            best_path_decode(model.infer(wave))

    one_pass()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        one_pass()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


# ---------------------------------------------------------------------------
# teacher training


@dataclass(frozen=True)
class TeacherEpoch:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_wer: float


def train_teacher(
    train, val, model_config: ModelConfig, cfg: DistillConfig, boundary: int | None = None
) -> tuple:
    """Train a fresh model with CTC loss on the synthetic task.

    Uses the same optimizer and ramp schedule as distillation (cfg's
    epochs, learning rates, decay), with per-epoch reshuffling drawn
    from cfg.seed.  Returns the snapshot with the lowest validation
    loss and the per-epoch history.

    Returns:
        (AcousticModel, list of TeacherEpoch)
    """
    if boundary is None:
        boundary = model_config.n_tokens - 1
    model = AcousticModel.init(model_config, seed=cfg.seed)
    params = model.params()
    state = init_adam_state(params)
    shuffler = Rng(cfg.seed)
    history = []
    best = model.copy()
    best_val = _teacher_val_loss(model, val)
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        total = 0.0
        for idx in shuffler.child(epoch).permutation(len(train)):
            wave, transcript = train[int(idx)]
            logits, _ = model.forward(wave)
            loss = ctc_loss(logits, transcript)
            model.zero_grad()
            loss.backward()
            adamw_step(params, [p.grad for p in params], state, lr, cfg)
            total += loss.item()
        val_loss = _teacher_val_loss(model, val)
        history.append(
            TeacherEpoch(
                epoch=epoch,
                lr=lr,
                train_loss=total / max(len(train), 1),
                val_loss=val_loss,
                val_wer=eval_wer(model, val, boundary),
            )
        )
        if val_loss < best_val:
            best_val = val_loss
            best = model.copy()
    return best, history


def _teacher_val_loss(model: AcousticModel, val) -> float:
    if not len(val):
        return 0.0
    total = 0.0
    with frozen(model):
        for wave, transcript in val:
            logits, _ = model.forward(wave)
            total += ctc_loss(logits, transcript).item()
    return total / len(val)


def write_teacher_history_csv(history, path) -> None:
    lines = [",".join(TEACHER_COLUMNS)]
    for r in history:
        lines.append(f"{r.epoch},{r.lr!r},{r.train_loss!r},{r.val_loss!r},{r.val_wer!r}")
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# experiment drivers


def run_tradeoff_sweep(
    teacher: AcousticModel,
    layer_counts,
    cfg: DistillConfig,
    train,
    val,
    eval_set,
    repeats: int = 3,
    parallel: bool = False,
) -> list:
    """Distill one student per layer count and table them with the teacher.

    Students use the alternating selection.  With parallel=True the
    distillation runs share a thread pool (each against its own teacher
    copy); timing always happens afterwards, sequentially, so clock
    measurements never overlap.
    """
    counts = [int(k) for k in layer_counts]
    depth = teacher.config.n_transformer_layers
    for k in counts:
        if not 1 <= k <= depth:
            raise ConfigError(f"sweep: layer count {k} outside [1, {depth}]")
    boundary = teacher.config.n_tokens - 1

    def train_one(k, teacher_for_worker):
        student = init_student(teacher_for_worker, LayerSelection.alternating(k))
        best, _ = distill(teacher_for_worker, student, train, val, cfg)
        return best

    if parallel and len(counts) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(counts))) as pool:
            futures = [pool.submit(train_one, k, teacher.copy()) for k in counts]
            students = [f.result() for f in futures]
    else:
        students = [train_one(k, teacher) for k in counts]

    reports = [_report_row("teacher", teacher, eval_set, boundary, repeats)]
    for k, student in zip(counts, students):
        reports.append(_report_row(f"student-{k}", student, eval_set, boundary, repeats))
    return reports


def _report_row(name, model, eval_set, boundary, repeats) -> BenchReport:
    if isinstance(model, AcousticModel):
        layers = model.config.n_transformer_layers
        params = model.count_params()
    else:
        layers = model.config.n_transformer_layers
        params = count_params(model.config)
    return BenchReport(
        model=name,
        layers=layers,
        params=params,
        size_bytes=model_size_bytes(model),
        cpu_s=measure_inference(model, eval_set, repeats),
        wer=eval_wer(model, eval_set, boundary),
    )


def run_init_experiment(teacher: AcousticModel, k: int, cfg: DistillConfig, train, val) -> tuple:
    """Distill the same depth from alternating vs last-k picks.

    Both runs share the data, config and seed; only the initialization
    differs.  k must be strictly below the teacher depth, otherwise the
    two selections are the same layers.

    Returns:
        (alternating history, last-k history)
    """
    depth = teacher.config.n_transformer_layers
    if not 1 <= k < depth:
        raise ConfigError(
            f"init experiment: k must be in [1, {depth}) so the strategies differ, got {k}"
        )
    histories = []
    for sel in (LayerSelection.alternating(k), LayerSelection.last_k(k)):
        student = init_student(teacher, sel)
        _, hist = distill(teacher, student, train, val, cfg)
        histories.append(hist)
    return tuple(histories)


def run_data_experiment(
    teacher: AcousticModel, k: int, sizes, cfg: DistillConfig, train, val
) -> list:
    """Distill identical students on nested prefixes of the training set.

    sizes must be nondecreasing and within the dataset; the validation
    set stays fixed, so curves are comparable across sizes.

    Returns:
        list of (size, DistillHistory), one per requested size
    """
    sizes = [int(s) for s in sizes]
    for a, b in zip(sizes, sizes[1:]):
        if b < a:
            raise ConfigError(f"data experiment: sizes must be nondecreasing, got {sizes}")
    for s in sizes:
        if not 1 <= s <= len(train):
            raise ConfigError(
                f"data experiment: size {s} outside the {len(train)}-utterance train set"
            )
    out = []
    for s in sizes:
        student = init_student(teacher, LayerSelection.alternating(k))
        _, hist = distill(teacher, student, train[:s], val, cfg)
        out.append((s, hist))
    return out


# ---------------------------------------------------------------------------
# report and plot-data emission


def emit_report(reports, path) -> None:
    """Write BenchReports as CSV with the fixed six-column header."""
    lines = [",".join(REPORT_COLUMNS)]
    for r in reports:
        lines.append(f"{r.model},{r.layers},{r.params},{r.size_bytes},{r.cpu_s!r},{r.wer!r}")
    _write_text(path, "\n".join(lines) + "\n")


def read_report(path) -> list:
    """Parse emit_report output back into BenchReport records."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"read_report: cannot read {path}: {exc}") from exc
    if not lines or lines[0] != ",".join(REPORT_COLUMNS):
        raise ValueError(f"not a bench report: bad header in {path}")
    out = []
    for line in lines[1:]:
        model, layers, params, nbytes, cpu_s, w = line.split(",")
        out.append(
            BenchReport(
                model=model,
                layers=int(layers),
                params=int(params),
                size_bytes=int(nbytes),
                cpu_s=float(cpu_s),
                wer=float(w),
            )
        )
    return out


def history_curve(history: DistillHistory) -> list:
    """(epoch, validation loss) points, starting from the pre-training value."""
    points = [(0, history.initial_val_total)]
    for row in history.epochs:
        points.append((row.epoch + 1, row.val_total))
    return points


def write_curve(points, path) -> None:
    """Plot-data file: one "x y" pair per line."""
    _write_text(path, "\n".join(f"{x} {y!r}" for x, y in points) + "\n")


def read_curve(path) -> list:
    with open(path) as fh:
        lines = fh.read().splitlines()
    return [(int(a), float(b)) for a, b in (line.split() for line in lines)]


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# the three-row compression table


def run_compression_bench(
    teacher: AcousticModel,
    cfg: DistillConfig,
    student_layers: int,
    train,
    val,
    eval_set,
    repeats: int = 3,
) -> list:
    """Original vs distilled vs distilled+quantized, one row each."""
    boundary = teacher.config.n_tokens - 1
    student = init_student(teacher, LayerSelection.alternating(student_layers))
    best, _ = distill(teacher, student, train, val, cfg)
    quantized = prepack(quantize_model(best))
    return [
        _report_row("original", teacher, eval_set, boundary, repeats),
        _report_row("distilled", best, eval_set, boundary, repeats),
        _report_row("quantized", quantized, eval_set, boundary, repeats),
    ]
