"""Training loop, evaluation and report writing."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import QAExample
from .layers import AdamState, adam_step, clip_grad_norm, global_norm
from .model import KAReader, Vocab
from .scorer import Prediction, hit_at_1, precision_recall_f1, qa_loss

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


def predict(model: KAReader, ex: QAExample, threshold: float = 0.5) -> Prediction:
    with T.no_grad():
        out = model.forward(ex, training=False)
    return Prediction(out.candidates, out.scores.data.copy(), threshold)


@dataclass
class EvalReport:
    records: list[dict]
    summary: dict

    def records_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def summary_tsv(self) -> str:
        lines = ["metric\tvalue"]
        lines += [f"{k}\t{v:.6f}" if isinstance(v, float) else f"{k}\t{v}"
                  for k, v in self.summary.items()]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str = "eval") -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"records": out_dir / f"{stem}_records.jsonl",
                 "summary": out_dir / f"{stem}_summary.tsv"}
        paths["records"].write_text(self.records_jsonl(), encoding="utf-8")
        paths["summary"].write_text(self.summary_tsv(), encoding="utf-8")
        return paths


def evaluate(model: KAReader, examples: Sequence[QAExample], threshold: float = 0.5) -> EvalReport:
    if not examples:
        raise ValueError("evaluate: empty example set")
    records = []
    for ex in sorted(examples, key=lambda e: e.id):
        pred = predict(model, ex, threshold)
        p, r, f1 = precision_recall_f1(pred.answer_set, ex.answers)
        top1 = pred.ranking[0]
        records.append({
            "id": ex.id,
            "hit@1": hit_at_1(pred, ex.answers),
            "precision": p,
            "recall": r,
            "f1": f1,
            "f1_top1": precision_recall_f1({top1}, ex.answers)[2],
            "top5": [[e, s] for e, s in pred.top(5)],
            "gold": sorted(ex.answers),
        })
    n = len(records)
    summary = {
        "questions": n,
        "hit@1": sum(r["hit@1"] for r in records) / n,
        "precision": sum(r["precision"] for r in records) / n,
        "recall": sum(r["recall"] for r in records) / n,
        "f1": sum(r["f1"] for r in records) / n,
        "f1_top1": sum(r["f1_top1"] for r in records) / n,
    }
    return EvalReport(records, summary)


def batch_loss(model: KAReader, batch: Sequence[QAExample], rng) -> T.Tensor:
    total = None
    for ex in batch:
        out = model.forward(ex, training=True, rng=rng)
        loss = qa_loss(out.scores, out.candidates, ex.answers, model.config.smoothing)
        total = loss if total is None else T.add(total, loss)
    return T.scale(total, 1.0 / len(batch))


def train_step(model: KAReader, batch: Sequence[QAExample], adam: AdamState, rng) -> tuple[float, float]:
    """One optimiser step; returns (loss, pre-clip gradient norm)."""
    params = model.named_params()
    model.zero_grad()
    loss = batch_loss(model, batch, rng)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite training loss {value}")
    loss.backward()
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
             for k, p in params.items()}
    norm = global_norm(grads)
    adam_step(params, clip_grad_norm(grads, model.config.clip), adam)
    model.zero_grad()
    return value, norm


class RunLog:
    """Tab-separated ``timestamp epoch split metric value`` lines."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.rows: list[tuple[int, str, str, float]] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def __call__(self, epoch: int, split: str, metric: str, value: float) -> None:
        self.rows.append((epoch, split, metric, float(value)))
        line = f"{time.strftime('%Y-%m-%dT%H:%M:%S')}\t{epoch}\t{split}\t{metric}\t{value:.6f}"
        log.info(line)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def series(self, split: str, metric: str) -> tuple[list[int], list[float]]:
        pts = [(e, v) for e, s, m, v in self.rows if s == split and m == metric]
        return [e for e, _ in pts], [v for _, v in pts]


def save_model(model: KAReader, path, extra: dict | None = None) -> None:
    meta = {"config": model.config.to_dict(), "vocab": model.vocab.to_dict(), **(extra or {})}
    save_checkpoint(path, model.state_arrays(), meta)


def load_model(path, config: RunConfig | None = None) -> KAReader:
    """Rebuild a model from a checkpoint; ``config`` (if given) must agree on architecture."""
    arrays, meta = load_checkpoint(path)
    saved = RunConfig.from_dict(meta["config"])
    if config is not None:
        for name in RunConfig.ARCH_FIELDS:
            if getattr(config, name) != getattr(saved, name):
                raise ValueError(f"checkpoint {name}={getattr(saved, name)!r} does not match "
                                 f"config {name}={getattr(config, name)!r}")
    model = KAReader(saved if config is None else config, Vocab.from_dict(meta["vocab"]))
    model.load_arrays(arrays)
    return model


@dataclass
class TrainResult:
    best_epoch: int
    best_dev: dict
    history: list[dict] = field(default_factory=list)
    log: RunLog | None = None


def train(model: KAReader, train_set: Sequence[QAExample], dev_set: Sequence[QAExample],
          checkpoint: str | Path | None = None, log_path=None) -> TrainResult:
    """Adam with global-norm clipping; keeps the best dev Hit@1 (then F1) checkpoint.

    Epoch 0 is the initialisation. On a non-finite loss the run stops and the
    last saved checkpoint is left in place.
    """
    cfg = model.config
    if not train_set:
        raise ValueError("train: empty training set")
    order_rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng(cfg.seed + 1)
    adam = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    runlog = RunLog(log_path)
    train_set = sorted(train_set, key=lambda e: e.id)

    def dev_metrics(epoch: int) -> dict:
        rep = evaluate(model, dev_set, cfg.threshold) if dev_set else None
        m = {"hit@1": rep.summary["hit@1"], "f1": rep.summary["f1"]} if rep else {}
        for k, v in m.items():
            runlog(epoch, "dev", k, v)
        return m

    best = dev_metrics(0)
    best_epoch = 0
    if checkpoint:
        save_model(model, checkpoint, {"epoch": 0})
    history = [{"epoch": 0, **best}]
    for epoch in range(1, cfg.epochs + 1):
        perm = order_rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(perm), cfg.batch_size):
            batch = [train_set[i] for i in perm[start:start + cfg.batch_size]]
            try:
                loss, _ = train_step(model, batch, adam, drop_rng)
            except (TrainingDiverged, FloatingPointError) as err:
                runlog(epoch, "train", "diverged", float("nan"))
                raise TrainingDiverged(f"epoch {epoch}: {err}") from err
            losses.append(loss)
        runlog(epoch, "train", "loss", float(np.mean(losses)))
        m = dev_metrics(epoch)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), **m})
        if m and (m["hit@1"], m["f1"]) > (best["hit@1"], best["f1"]):
            best, best_epoch = m, epoch
            if checkpoint:
                save_model(model, checkpoint, {"epoch": epoch})
    if not dev_set and checkpoint:
        save_model(model, checkpoint, {"epoch": cfg.epochs})
    return TrainResult(best_epoch, best, history, runlog)
