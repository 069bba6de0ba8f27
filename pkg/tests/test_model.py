import numpy as np
import pytest

from kareader import tensor as T
from kareader import model as model_mod
from kareader.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from kareader.cli import run_gradcheck, tiny_example
from kareader.config import RunConfig
from kareader.dataset import Document, QAExample
from kareader.layers import pad_ids
from kareader.model import KAReader, Vocab
from kareader.text_reader import token_features
from kareader.train import evaluate, load_model, save_model, train

SMALL = dict(d_h=6, word_dim=8, dropout=0.0)


def make(ablation="none", **kw):
    ex = tiny_example()
    cfg = RunConfig(**{**SMALL, "ablation": ablation, **kw})
    return KAReader(cfg, Vocab.from_examples([ex, other_question(ex)])), ex


def other_question(ex):
    return QAExample(**{**ex.__dict__, "id": "tiny2", "question": ["who", "employs", "ann", "now"]})


@pytest.mark.parametrize("kw", [
    dict(ablation="kb-only"), dict(ablation="std-gate"), dict(ablation="no-know"),
    dict(gate_variant="vector-ew"), dict(gate_variant="scalar-dot"),
])
def test_gradcheck_variants(kw):
    report = run_gradcheck(RunConfig(d_h=4, word_dim=6, dropout=0.0, **kw))
    assert report.passed, report.lines()


def test_kb_only_never_reads_text():
    m, ex = make("kb-only")
    m.forward(ex)
    evaluate(m, [ex])
    assert m.text_calls == 0
    assert not any(k.startswith(("ka.W_f", "ka.W_gd", "ka.bilstm")) for k in m.named_params())
    assert m.W_s.shape == (6, 6)
    full, _ = make()
    full.forward(ex)
    assert full.text_calls == 1


def test_no_reform_keeps_question_vector_bitwise():
    m, ex = make("no-reform")
    tr = m.forward(ex).trace
    assert tr["q_ref"].tobytes() == tr["q"].tobytes()
    assert tr["gamma_q"] is None


def projected_features(m, ex):
    ids, lengths = pad_ids([m.word_ids(d.tokens) for d in ex.documents], m.config.max_doc_len)
    extra = np.zeros(ids.shape + (2,))
    for k, doc in enumerate(ex.documents):
        extra[k, : lengths[k]] = token_features(doc.tokens, ex.question)
    emb = m.words.weight.data[ids]
    return np.concatenate([emb, extra], axis=2) @ m.ka.W_f.data.T


def capture_inputs(monkeypatch):
    seen = []
    real = model_mod.encode_documents

    def spy(inputs, *a, **k):
        seen.append(inputs.data.copy())
        return real(inputs, *a, **k)

    monkeypatch.setattr(model_mod, "encode_documents", spy)
    return seen


def test_no_know_feeds_raw_features_bitwise(monkeypatch):
    seen = capture_inputs(monkeypatch)
    m, ex = make("no-know")
    m.forward(ex)
    m.entity_table.weight.data += 1.0  # knowledge must not reach the documents
    m.forward(ex)
    want = projected_features(m, ex)
    assert seen[0].tobytes() == seen[1].tobytes()
    np.testing.assert_allclose(seen[0], want, atol=1e-14)


def test_full_model_mixes_knowledge_into_linked_tokens_only(monkeypatch):
    seen = capture_inputs(monkeypatch)
    m, ex = make()
    m.forward(ex)
    feats = projected_features(m, ex)
    linked = np.zeros(feats.shape[:2], bool)
    for k, d in enumerate(ex.documents):
        linked[k, : len(d.tokens)] = [e is not None for e in d.linked_entities()]
    np.testing.assert_allclose(seen[0][~linked], feats[~linked], atol=1e-14)
    assert not np.allclose(seen[0][linked], feats[linked])


def gates_under_question_vectors(monkeypatch, ablation, variant):
    """gamma^d for two different question vectors q, everything else fixed."""
    real = model_mod.question_vector
    out = []
    for scale in (1.0, -3.0):
        monkeypatch.setattr(model_mod, "question_vector",
                            lambda h, w, s=scale: (T.scale(real(h, w)[0], s), real(h, w)[1]))
        m, ex = make(ablation, gate_variant=variant)
        out.append(m.forward(ex).trace["gamma_d"])
    return out


@pytest.mark.parametrize("variant", ["scalar-ew", "vector-ew", "scalar-dot"])
def test_std_gate_is_question_independent(monkeypatch, variant):
    a, b = gates_under_question_vectors(monkeypatch, "std-gate", variant)
    assert np.array_equal(a, b, equal_nan=True)
    c, d = gates_under_question_vectors(monkeypatch, "none", variant)
    assert not np.array_equal(c, d, equal_nan=True)


def test_document_only_candidate_keeps_embedding():
    ex = tiny_example()
    ex.documents.append(Document(["zed", "is", "here"], [(0, 1, "zed")]))
    ex.candidates.append("zed")
    m = KAReader(RunConfig(**SMALL), Vocab.from_examples([ex]))
    out = m.forward(ex)
    row = out.candidates.index("zed")
    e = m.entity_table.weight.data[m.entity_table.index["zed"]]
    assert out.knowledge.data[row].tobytes() == e.tobytes()


def test_trace_distributions_normalised():
    m, ex = make()
    tr = m.forward(ex).trace
    np.testing.assert_allclose(tr["alpha"].sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(tr["beta"].sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(tr["b"].sum(), 1.0, atol=1e-12)
    np.testing.assert_allclose(tr["lambda"].sum(axis=1), 1.0, atol=1e-12)
    owner_sums = np.bincount(tr["s_tilde_owner"], weights=tr["s_tilde"])
    np.testing.assert_allclose(owner_sums[owner_sums > 0], 1.0, atol=1e-12)


def test_checkpoint_round_trip(tmp_path):
    m, ex = make()
    path = tmp_path / "m.ckpt"
    save_model(m, path)
    m2 = load_model(path)
    a, b = m.forward(ex).scores.data, m2.forward(ex).scores.data
    assert a.tobytes() == b.tobytes()


def test_checkpoint_architecture_mismatch(tmp_path):
    m, _ = make()
    path = tmp_path / "m.ckpt"
    save_model(m, path)
    with pytest.raises(ValueError, match="d_h"):
        load_model(path, RunConfig(**{**SMALL, "d_h": 8}))
    arrays, meta = load_checkpoint(path)
    arrays["sg.W_e"] = np.zeros((2, 2))
    save_checkpoint(path, arrays, meta)
    with pytest.raises(ValueError, match="sg.W_e"):
        load_model(path)


def test_corrupt_checkpoint_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_zero_epochs_saves_initialisation(tmp_path):
    m, ex = make(epochs=0)
    init = {k: v.copy() for k, v in m.state_arrays().items()}
    train(m, [ex], [ex], tmp_path / "m.ckpt")
    arrays, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert meta["epoch"] == 0
    for k, v in init.items():
        assert arrays[k].tobytes() == v.tobytes()


def test_training_is_deterministic(tmp_path):
    reports = []
    for run in range(2):
        m, ex = make(epochs=3, dropout=0.2, batch_size=1)
        train(m, [ex, other_question(ex)], [ex])
        reports.append(evaluate(m, [ex, other_question(ex)]).records_jsonl())
    assert reports[0] == reports[1]


def test_training_lowers_loss_on_tiny_set():
    m, ex = make(epochs=30, lr=0.01, batch_size=1)
    result = train(m, [ex], [ex])
    losses = [h["loss"] for h in result.history[1:]]
    assert losses[-1] < losses[0]
    assert result.best_dev["hit@1"] == 1.0


def test_empty_eval_set_is_an_error():
    m, _ = make()
    with pytest.raises(ValueError, match="empty"):
        evaluate(m, [])
