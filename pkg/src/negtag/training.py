"""Joint loss, the teacher-forced training loop, and the low-resource harness."""
from __future__ import annotations

import csv
import io
import logging
import math
import random
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .data import Dataset, Sentence, Vocab, build_vocab, subsample
from .decoders import Model, greedy_decode, run_decoder, teacher_forced_probs
from .encoder import Batch, ModelConfig, Variant
from .errors import ConfigError, DataError, DivergenceError
from .evaluation import EvalReport, score

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs_max: int = 50
    patience: int = 5
    batch_size: int = 8
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    task_loss_weight: float = 1.0
    low_resource_fractions: tuple[float, ...] = (0.05, 0.1, 0.25, 0.5, 1.0)
    eval_seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    clip_norm: float = 5.0
    min_word_freq: int = 1
    select_metric: str = "macro"
    # patience only counts once every served task has scored above zero on dev
    hold_patience_at_zero: bool = True

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.task_loss_weight < 0:
            raise ConfigError(f"task_loss_weight must be >= 0, got {self.task_loss_weight}")
        if self.batch_size < 1 or self.epochs_max < 0:
            raise ConfigError("batch_size must be >= 1 and epochs_max >= 0")
        for f in self.low_resource_fractions:
            if not 0.0 < f <= 1.0:
                raise ConfigError(f"fractions must lie in (0, 1], got {f}")
        if self.select_metric not in ("macro", "entity", "negation"):
            raise ConfigError(f"select_metric must be macro, entity or negation, got {self.select_metric!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_entity_f1: float | None
    dev_negation_f1: float | None
    dev_macro_f1: float
    wall_time: float = 0.0


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    HEADER = ("epoch", "train_loss", "dev_entity_f1", "dev_negation_f1", "dev_macro_f1", "best")

    def to_csv(self, include_wall_time: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER + (("wall_time",) if include_wall_time else ()))
        for r in self.epochs:
            row = [
                r.epoch,
                repr(r.train_loss),
                "" if r.dev_entity_f1 is None else f"{r.dev_entity_f1:.6f}",
                "" if r.dev_negation_f1 is None else f"{r.dev_negation_f1:.6f}",
                f"{r.dev_macro_f1:.6f}",
                int(r.epoch == self.best_epoch),
            ]
            if include_wall_time:
                row.append(f"{r.wall_time:.3f}")
            w.writerow(row)
        return buf.getvalue()


# -- loss ---------------------------------------------------------------------------------


def _as_batch(sentences, model: Model) -> Batch:
    if isinstance(sentences, Batch):
        return sentences
    if isinstance(sentences, Sentence):
        sentences = [sentences]
    return model.batch(list(sentences))


def joint_loss(sentences, model: Model, train: bool = True, task_loss_weight: float = 1.0) -> ag.Tensor:
    """Teacher-forced summed cross-entropy over both tasks.

    ``loss = sum_t CE(entity) + weight * sum_t CE(negation)``; tasks the
    variant does not serve contribute nothing. Padding is masked out.
    """
    batch = _as_batch(sentences, model)
    column = {"entity": "entity_tags", "negation": "negation_tags"}
    for s in batch.sentences:
        for task in model.tasks:
            if getattr(s, column[task]) is None:
                raise DataError(f"sentence lacks gold {task} tags required by {model.variant.value}")
    probs = teacher_forced_probs(model, batch, train)
    gold = {"entity": batch.entity_gold.T, "negation": batch.negation_gold.T}
    weight = {"entity": 1.0, "negation": float(task_loss_weight)}
    mask = batch.mask.T
    terms = [ag.cross_entropy(p, gold[task], weights=mask * weight[task]) for task, p in probs.items()]
    return ag.add_n(terms)


def stepwise_joint_loss(sentences, model: Model, train: bool = True, task_loss_weight: float = 1.0) -> ag.Tensor:
    """:func:`joint_loss` computed through the per-step decoders (for cross-checks)."""
    batch = _as_batch(sentences, model)
    probs, _ = run_decoder(model, batch, train=train, teacher_forcing=True)
    gold = {"entity": batch.entity_gold, "negation": batch.negation_gold}
    weight = {"entity": 1.0, "negation": float(task_loss_weight)}
    terms = []
    for t, step in enumerate(probs):
        for task, p in step.items():
            terms.append(ag.cross_entropy(p, gold[task][:, t], weights=batch.mask[:, t] * weight[task]))
    return ag.add_n(terms)


def evaluate_model(model: Model, dataset: Dataset, batch_size: int = 32) -> EvalReport:
    preds = greedy_decode(dataset.sentences, model, batch_size=batch_size)
    return score(dataset, preds)


def _selection_metric(report: EvalReport, metric: str) -> float:
    if metric == "macro":
        return report.macro_f1
    return report[metric].f1


# -- training loop ----------------------------------------------------------------------------


def train(
    train_set: Dataset,
    dev_set: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    vocab: Vocab | None = None,
    pretrained: dict[int, np.ndarray] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[Model, TrainLog]:
    """Train with Adam and early stopping on dev macro-F1.

    Returns the model restored to its best dev epoch and the per-epoch log.
    """
    if len(train_set) == 0 or len(dev_set) == 0:
        raise DataError("training and dev sets must be non-empty")
    if train_cfg.select_metric != "macro" and train_cfg.select_metric not in model_cfg.variant.tasks:
        raise ConfigError(
            f"variant {model_cfg.variant.value} does not produce {train_cfg.select_metric} predictions"
        )
    vocab = vocab or build_vocab(train_set, train_cfg.min_word_freq)
    model = Model(model_cfg, vocab, seed=train_cfg.seed)
    if pretrained:
        model.load_pretrained(pretrained)
    opt = ag.AdamState(lr=train_cfg.lr, beta1=train_cfg.beta1, beta2=train_cfg.beta2, epsilon=train_cfg.epsilon)
    shuffle_rng = random.Random(train_cfg.seed)
    history = TrainLog()
    best_metric = -math.inf
    best = model.snapshot()
    bad_epochs = 0
    seen_signal = {task: False for task in model_cfg.variant.tasks}
    n = len(train_set)
    bs = train_cfg.batch_size
    for epoch in range(1, train_cfg.epochs_max + 1):
        start = time.perf_counter()
        order = list(range(n))
        shuffle_rng.shuffle(order)
        total = 0.0
        for k, lo in enumerate(range(0, n, bs), start=1):
            batch = model.batch([train_set[i] for i in order[lo : lo + bs]])
            with ag.Tape() as tape:
                loss = joint_loss(batch, model, train=True, task_loss_weight=train_cfg.task_loss_weight)
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {k}")
            ag.zero_grads(model.params)
            tape.backward(loss)
            ag.clip_grad_norm(model.params, train_cfg.clip_norm)
            try:
                ag.adam_step(opt, model.params)
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}, batch {k}") from None
            total += value
        ag.zero_grads(model.params)
        report = evaluate_model(model, dev_set)
        record = EpochRecord(
            epoch,
            total,
            report["entity"].f1 if "entity" in report.tasks else None,
            report["negation"].f1 if "negation" in report.tasks else None,
            report.macro_f1,
            time.perf_counter() - start,
        )
        history.epochs.append(record)
        log.info(
            "epoch %d loss %.4f dev macro-F1 %.4f (%.1fs)", epoch, total, record.dev_macro_f1, record.wall_time
        )
        if on_epoch is not None:
            on_epoch(record)
        metric = _selection_metric(report, train_cfg.select_metric)
        for task in seen_signal:
            seen_signal[task] = seen_signal[task] or report[task].f1 > 0.0
        if metric > best_metric:
            best_metric = metric
            best = model.snapshot()
            history.best_epoch = epoch
            bad_epochs = 0
        elif all(seen_signal.values()) or not train_cfg.hold_patience_at_zero:
            bad_epochs += 1
            if bad_epochs >= train_cfg.patience:
                break
    model.restore(best)
    return model, history


# -- low-resource experiment -------------------------------------------------------------------


CURVE_HEADER = ("variant", "fraction", "seed", "task", "precision", "recall", "f1")


@dataclass(frozen=True)
class CellResult:
    variant: str
    fraction: float
    seed: int
    task: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class CurveSummary:
    variant: str
    fraction: float
    task: str
    n: int
    precision_mean: float
    recall_mean: float
    f1_mean: float
    precision_std: float
    recall_std: float
    f1_std: float


def run_cell(args) -> list[CellResult]:
    train_set, dev_set, test_set, variant, fraction, seed, model_cfg, train_cfg, min_updates = args
    sub = subsample(train_set, fraction, seed)
    mcfg = replace(model_cfg, variant=Variant.parse(variant) if isinstance(variant, str) else variant)
    # small subsets give few updates per epoch; stretch the epoch cap so every cell gets min_updates,
    # and stretch patience by the same factor so early stopping runs on the same update clock
    batches = math.ceil(len(sub) / train_cfg.batch_size)
    epochs = max(train_cfg.epochs_max, math.ceil(min_updates / batches))
    stretch = epochs / train_cfg.epochs_max if train_cfg.epochs_max else 1.0
    tcfg = replace(train_cfg, seed=seed, epochs_max=epochs, patience=math.ceil(train_cfg.patience * stretch))
    model, _ = train(sub, dev_set, mcfg, tcfg)
    report = evaluate_model(model, test_set)
    return [
        CellResult(mcfg.variant.value, fraction, seed, task, tr.precision, tr.recall, tr.f1)
        for task, tr in report.tasks.items()
    ]


def low_resource_experiment(
    train_set: Dataset,
    dev_set: Dataset,
    test_set: Dataset,
    fractions: Sequence[float],
    seeds: Sequence[int],
    variants: Sequence[Variant | str],
    model_cfg: ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    workers: int = 1,
    min_updates: int = 2000,
) -> list[CellResult]:
    """Subsample, train and test every (variant, fraction, seed) cell.

    Each cell may train past ``train_cfg.epochs_max`` until it has had the
    chance to take ``min_updates`` optimiser steps; patience is stretched by
    the same factor. Cells that already reach ``min_updates`` are untouched.
    Results are sorted by key, so worker scheduling cannot change the output.
    """
    fractions = list(fractions)
    if fractions != sorted(fractions):
        raise ConfigError("fractions must be sorted ascending")
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainConfig()
    jobs = [
        (train_set, dev_set, test_set, v, f, s, model_cfg, train_cfg, min_updates)
        for v in variants
        for f in fractions
        for s in seeds
    ]
    if workers > 1:
        from multiprocessing import get_context

        with get_context("spawn").Pool(workers) as pool:
            chunks = pool.map(run_cell, jobs)
    else:
        chunks = [run_cell(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    order = {Variant.parse(v).value if isinstance(v, str) else v.value: i for i, v in enumerate(variants)}
    rows.sort(key=lambda r: (order[r.variant], r.fraction, r.seed, r.task))
    return rows


def summarize(rows: Sequence[CellResult]) -> list[CurveSummary]:
    """Mean and sample standard deviation per (variant, fraction, task)."""
    groups: dict[tuple, list[CellResult]] = {}
    for r in rows:
        groups.setdefault((r.variant, r.fraction, r.task), []).append(r)
    out = []
    for (variant, fraction, task), rs in groups.items():

        def ms(attr):
            xs = [getattr(r, attr) for r in rs]
            return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)

        (pm, ps), (rm, rsd), (fm, fs) = ms("precision"), ms("recall"), ms("f1")
        out.append(CurveSummary(variant, fraction, task, len(rs), pm, rm, fm, ps, rsd, fs))
    return out


def curve_csv(rows: Sequence[CellResult]) -> str:
    """Per-seed rows, then one ``mean`` and one ``std`` row per cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for r in rows:
        w.writerow([r.variant, r.fraction, r.seed, r.task, f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.f1:.6f}"])
    summary = summarize(rows)
    for s in summary:
        w.writerow([s.variant, s.fraction, "mean", s.task, f"{s.precision_mean:.6f}", f"{s.recall_mean:.6f}", f"{s.f1_mean:.6f}"])
    for s in summary:
        w.writerow([s.variant, s.fraction, "std", s.task, f"{s.precision_std:.6f}", f"{s.recall_std:.6f}", f"{s.f1_std:.6f}"])
    return buf.getvalue()


def plot_data_csv(rows: Sequence[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("variant", "task", "x", "y", "y_std"))
    for s in summarize(rows):
        w.writerow([s.variant, s.task, s.fraction, f"{s.f1_mean:.6f}", f"{s.f1_std:.6f}"])
    return buf.getvalue()


# -- hyperparameter search --------------------------------------------------------------------------


def random_search(
    train_set: Dataset,
    dev_set: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    n_trials: int = 5,
    seed: int = 0,
) -> list[tuple[float, ModelConfig, TrainConfig]]:
    """Seeded random search over dropout, learning rate and tagger size.

    Returns ``(dev macro-F1, model config, train config)`` per trial, best first.
    """
    rng = random.Random(seed)
    trials = []
    for _ in range(n_trials):
        mcfg = replace(
            model_cfg,
            dropout_rate=round(rng.uniform(0.1, 0.6), 3),
            tagger_hidden=rng.choice([25, 50, 100]),
        )
        tcfg = replace(train_cfg, lr=float(10 ** rng.uniform(math.log10(3e-4), math.log10(3e-3))))
        model, _ = train(train_set, dev_set, mcfg, tcfg)
        trials.append((evaluate_model(model, dev_set).macro_f1, mcfg, tcfg))
    trials.sort(key=lambda x: -x[0])
    return trials
