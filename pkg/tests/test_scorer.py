import math

import numpy as np
import pytest

import oracles
from kareader.scorer import (
    Prediction,
    f1_score,
    hit_at_1,
    precision_recall_f1,
    qa_labels,
    qa_loss,
    score_answers,
)
from kareader.tensor import Tensor


@pytest.mark.parametrize("seed", range(20))
def test_score_answers_matches_formula(seed):
    rng = np.random.default_rng(seed)
    d, n = 4, 5
    q, E, D = rng.uniform(-1, 1, d), rng.uniform(-1, 1, (n, d)), rng.uniform(-1, 1, (n, d))
    W, W_kb = rng.uniform(-1, 1, (d, 2 * d)), rng.uniform(-1, 1, (d, d))
    full = score_answers(Tensor(q), Tensor(E), Tensor(W), Tensor(D)).data
    kb = score_answers(Tensor(q), Tensor(E), Tensor(W_kb)).data
    for i in range(n):
        assert abs(full[i] - oracles.score(q, E[i], W, D[i])) < 1e-10
        assert abs(kb[i] - oracles.score(q, E[i], W_kb)) < 1e-10


def test_zero_map_scores_half():
    s = score_answers(Tensor(np.ones(2)), Tensor(np.ones((3, 2))), Tensor(np.zeros((2, 4))),
                      Tensor(np.ones((3, 2))))
    assert s.data.tolist() == [0.5, 0.5, 0.5]


def test_ranking_breaks_ties_by_id():
    p = Prediction(["c", "a", "b"], [0.4, 0.9, 0.9])
    assert p.ranking == ["a", "b", "c"]
    assert p.top(2) == [("a", 0.9), ("b", 0.9)]


def test_answer_set_is_strictly_above_threshold():
    p = Prediction(["a", "b", "c"], [0.5, 0.51, 0.2], threshold=0.5)
    assert p.answer_set == {"b"}


def test_metrics_examples():
    assert precision_recall_f1({"a"}, {"a"}) == (1.0, 1.0, 1.0)
    assert precision_recall_f1(set(), set()) == (1.0, 1.0, 1.0)
    assert precision_recall_f1(set(), {"a"}) == (0.0, 0.0, 0.0)
    p, r, f = precision_recall_f1({"a", "b"}, {"a", "c", "d"})
    assert (p, r) == (0.5, 1 / 3) and abs(f - 0.4) < 1e-15
    assert f1_score({"x"}, {"y"}) == 0.0
    assert hit_at_1(Prediction(["a", "b"], [0.2, 0.7]), ["b"]) == 1


def test_perfect_scores_give_target_entropy():
    scores = Tensor([0.95, 0.05, 0.05])
    loss = qa_loss(scores, ["a", "b", "c"], ["a"], eps=0.1).item()
    entropy = -(0.95 * math.log(0.95) + 0.05 * math.log(0.05))
    assert abs(loss - entropy) < 1e-12


def test_loss_rejects_bad_gold():
    with pytest.raises(ValueError, match="no gold"):
        qa_labels(["a"], [])
    with pytest.raises(ValueError, match="not candidates"):
        qa_labels(["a"], ["b"])


def test_loss_is_finite_at_saturated_scores():
    loss = qa_loss(Tensor([1.0, 0.0]), ["a", "b"], ["b"]).item()
    assert math.isfinite(loss) and loss > 0
