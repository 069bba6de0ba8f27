"""Knowledge-aware text reader.

The question vector is reformulated with topic-entity knowledge, document
tokens are fused with the knowledge of their linked entities through a
question-conditioned gate, and attended document vectors are averaged into
per-entity text evidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import BiLstm, glorot, length_mask, uniform
from .tensor import Tensor

N_EXTRA_FEATURES = 2  # exact match with the question, normalised term frequency


def gate_shape(d_h: int, variant: str, conditional: bool) -> tuple[int, int]:
    rows = d_h if variant == "vector-ew" else 1
    if variant == "scalar-dot" and conditional:
        return (1, 2)
    return (rows, 2 * d_h)


@dataclass
class KaReaderParams:
    w_q: Tensor     # (d_h,) question self-attention scorer
    W_q: Tensor     # (d_h, 3 d_h)
    W_gq: Tensor    # (1, 3 d_h)
    W_gd: Tensor    # see gate_shape
    W_f: Tensor     # (d_h, word_dim + 2) token feature projection
    bilstm: BiLstm

    @classmethod
    def init(cls, d_h: int, word_dim: int, rng: np.random.Generator,
             variant: str = "scalar-ew", conditional: bool = True) -> "KaReaderParams":
        return cls(
            w_q=Tensor(uniform(rng, d_h, 0.1), requires_grad=True),
            W_q=Tensor(glorot(rng, (d_h, 3 * d_h)), requires_grad=True),
            W_gq=Tensor(glorot(rng, (1, 3 * d_h)), requires_grad=True),
            W_gd=Tensor(glorot(rng, gate_shape(d_h, variant, conditional)), requires_grad=True),
            W_f=Tensor(glorot(rng, (d_h, word_dim + N_EXTRA_FEATURES)), requires_grad=True),
            bilstm=BiLstm(d_h, d_h, rng),
        )

    def named(self, text: bool = True) -> dict[str, Tensor]:
        out = {"ka.w_q": self.w_q, "ka.W_q": self.W_q, "ka.W_gq": self.W_gq}
        if text:
            out.update({"ka.W_gd": self.W_gd, "ka.W_f": self.W_f})
            out.update(self.bilstm.params("ka.bilstm"))
        return out


@dataclass
class TextEvidence:
    """Row i of ``vectors`` is e_d for ``entities[i]`` (zero when in no document)."""

    entities: list[str]
    vectors: Tensor
    query: Tensor
    doc_vectors: Tensor | None = None
    token_attention: np.ndarray | None = None
    token_gates: np.ndarray | None = None


def question_vector(h_q: Tensor, w_q: Tensor) -> tuple[Tensor, Tensor]:
    """q = sum_i b_i h_i with b = softmax(h_q w_q)."""
    b = T.softmax(T.matmul(h_q, w_q), axis=0)
    return T.matmul(b, h_q), b


def reformulate_query(q: Tensor, topic_knowledge: Tensor | None, W_q: Tensor, W_gq: Tensor
                      ) -> tuple[Tensor, Tensor]:
    """q' = g q + (1 - g) tanh(W_q [q; e^q; q - e^q]), g = sigmoid(W_gq [q; e^q; q - e^q]).

    ``topic_knowledge`` is the (k, d) stack of e' over topic entities; its mean
    is e^q. None or zero rows means e^q = 0.
    """
    if topic_knowledge is None or topic_knowledge.shape[0] == 0:
        e_q = Tensor(np.zeros(q.shape))
    else:
        e_q = T.mean(topic_knowledge, axis=0)
    fused = T.concat([q, e_q, T.sub(q, e_q)], axis=0)
    gate = T.sigmoid(T.linear(fused, W_gq))
    cand = T.tanh(T.linear(fused, W_q))
    return T.add(T.mul(gate, q), T.mul(T.sub(1.0, gate), cand)), gate


def token_features(doc_tokens: list[str], question: list[str]) -> np.ndarray:
    """(len, 2): exact match with a question token, term frequency / doc length."""
    qset = set(question)
    n = len(doc_tokens)
    counts: dict[str, int] = {}
    for tok in doc_tokens:
        counts[tok] = counts.get(tok, 0) + 1
    return np.array([[float(tok in qset), counts[tok] / n] for tok in doc_tokens])


def conditional_gate(q: Tensor, e_tok: Tensor, f_tok: Tensor, W_gd: Tensor,
                     variant: str = "scalar-ew", conditional: bool = True
                     ) -> tuple[Tensor, Tensor]:
    """i = g e' + (1 - g) f with g = sigmoid(W_gd [q*e'; q*f]).

    ``e_tok`` and ``f_tok`` share a shape (..., d). ``variant`` picks the gate
    form: scalar or per-dimension gate over elementwise products, or a scalar
    gate over the two dot products. With ``conditional=False`` the gate reads
    [e'; f] and ignores q. Returns (fused input, gate values).
    """
    if not conditional:
        inp = T.concat([e_tok, f_tok], axis=-1)
    elif variant == "scalar-dot":
        inp = T.concat([T.sum_(T.mul(e_tok, q), axis=-1, keepdims=True),
                        T.sum_(T.mul(f_tok, q), axis=-1, keepdims=True)], axis=-1)
    else:
        inp = T.concat([T.mul(e_tok, q), T.mul(f_tok, q)], axis=-1)
    gate = T.sigmoid(T.linear(inp, W_gd))
    fused = T.add(T.mul(gate, e_tok), T.mul(T.sub(1.0, gate), f_tok))
    return fused, gate


def encode_documents(inputs: Tensor, lengths: np.ndarray, q_ref: Tensor, bilstm: BiLstm,
                     dropout_rate: float = 0.0, rng=None, training: bool = False
                     ) -> tuple[Tensor, Tensor]:
    """Padded fused inputs (B, T, d) -> document vectors (B, d) and token weights (B, T).

    lambda = softmax over valid tokens of q' . h_t; d = sum_t lambda_t h_t.
    """
    H = T.dropout(bilstm.run(inputs, lengths), dropout_rate, rng, training)
    mask = length_mask(lengths, inputs.shape[1])
    lam = T.softmax(T.matmul(H, q_ref), axis=1, mask=mask)
    docs = T.sum_(T.mul(H, lam.reshape(*lam.shape, 1)), axis=1)
    return docs, lam


def aggregation_matrix(entities: list[str], doc_entities: list[list[str]]) -> np.ndarray:
    """(n_entities, n_docs) averaging weights 1/|D^e| over documents containing e."""
    row = {e: i for i, e in enumerate(entities)}
    A = np.zeros((len(entities), len(doc_entities)))
    for j, ents in enumerate(doc_entities):
        for e in set(ents):
            if e in row:
                A[row[e], j] = 1.0
    counts = A.sum(axis=1, keepdims=True)
    return np.divide(A, counts, out=np.zeros_like(A), where=counts > 0)


def aggregate_entity_text(entities: list[str], doc_entities: list[list[str]],
                          doc_vectors: Tensor) -> Tensor:
    """e_d = mean of the vectors of documents linking e; zero for unlinked entities."""
    return T.matmul(Tensor(aggregation_matrix(entities, doc_entities)), doc_vectors)
