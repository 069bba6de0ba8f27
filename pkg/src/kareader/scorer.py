"""Answer scoring, training loss and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .layers import smoothed_bce
from .tensor import Tensor


def answer_logits(q_ref: Tensor, knowledge: Tensor, W_s: Tensor,
                  text: Tensor | None = None) -> Tensor:
    """q'^T W_s [e'; e_d] per candidate row (or q'^T W_s e' without text)."""
    feats = knowledge if text is None else T.concat([knowledge, text], axis=1)
    return T.matmul(feats, T.matmul(q_ref, W_s))


def score_answers(q_ref: Tensor, knowledge: Tensor, W_s: Tensor, text: Tensor | None = None
                  ) -> Tensor:
    return T.sigmoid(answer_logits(q_ref, knowledge, W_s, text))


@dataclass
class Prediction:
    candidates: list[str]
    scores: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.candidates) != len(self.scores):
            raise ValueError("one score per candidate required")

    @property
    def ranking(self) -> list[str]:
        """Descending score, ties broken by ascending entity id."""
        order = sorted(range(len(self.candidates)),
                       key=lambda i: (-self.scores[i], self.candidates[i]))
        return [self.candidates[i] for i in order]

    @property
    def answer_set(self) -> set[str]:
        return {c for c, s in zip(self.candidates, self.scores) if s > self.threshold}

    def top(self, k: int) -> list[tuple[str, float]]:
        score = dict(zip(self.candidates, self.scores))
        return [(e, float(score[e])) for e in self.ranking[:k]]


def qa_labels(candidates: Sequence[str], gold: Iterable[str]) -> np.ndarray:
    gold = set(gold)
    if not gold:
        raise ValueError("qa_loss: example has no gold answers")
    if not gold <= set(candidates):
        raise ValueError(f"qa_loss: gold answers {sorted(gold - set(candidates))} not candidates")
    return np.array([1.0 if c in gold else 0.0 for c in candidates])


def qa_loss(scores: Tensor, candidates: Sequence[str], gold: Iterable[str], eps: float = 0.1
            ) -> Tensor:
    """Smoothed binary cross-entropy averaged over all candidates."""
    return smoothed_bce(scores, qa_labels(candidates, gold), eps)


def hit_at_1(prediction: Prediction, gold: Iterable[str]) -> int:
    ranking = prediction.ranking
    if not ranking:
        raise ValueError("hit_at_1: empty ranking")
    return int(ranking[0] in set(gold))


def precision_recall_f1(predicted: Iterable[str], gold: Iterable[str]) -> tuple[float, float, float]:
    """Set precision/recall/F1. Both empty counts as a perfect match."""
    pred, gold = set(predicted), set(gold)
    if not pred and not gold:
        return 1.0, 1.0, 1.0
    tp = len(pred & gold)
    p = tp / len(pred) if pred else 0.0
    r = tp / len(gold) if gold else 0.0
    return p, r, (2 * p * r / (p + r) if tp else 0.0)


def f1_score(predicted: Iterable[str], gold: Iterable[str]) -> float:
    return precision_recall_f1(predicted, gold)[2]
