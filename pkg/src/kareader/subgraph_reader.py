"""Graph-attention reader over the question subgraph.

Relations are encoded once per distinct relation, matched against the
question tokens, and every entity then absorbs one hop of gated, attended
neighbour messages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import glorot, self_attentive_pool, uniform
from .tensor import Tensor


@dataclass
class SgReaderParams:
    W_e: Tensor      # (d_h, 2 d_h) message transform on [r_i; e_i]
    W_gate: Tensor   # (1, 2 d_h) gate g(e, aggregate)
    w_r: Tensor      # (d_h,) relation self-attention scorer

    @classmethod
    def init(cls, d_h: int, rng: np.random.Generator) -> "SgReaderParams":
        return cls(
            W_e=Tensor(glorot(rng, (d_h, 2 * d_h)), requires_grad=True),
            W_gate=Tensor(glorot(rng, (1, 2 * d_h)), requires_grad=True),
            w_r=Tensor(uniform(rng, d_h, 0.1), requires_grad=True),
        )

    def named(self) -> dict[str, Tensor]:
        return {"sg.W_e": self.W_e, "sg.W_gate": self.W_gate, "sg.w_r": self.w_r}


@dataclass
class EntityKnowledge:
    """Row i of ``vectors`` is e' for ``entities[i]``."""

    entities: list[str]
    vectors: Tensor
    gates: np.ndarray          # gamma^e per entity; NaN where there were no neighbours
    attention: np.ndarray      # s~ per neighbour pair
    pair_entity: np.ndarray    # owning entity row of each pair
    relation_scores: np.ndarray | None = None   # s_r per relation
    relation_beta: np.ndarray | None = None     # beta over question tokens per relation

    def row(self, entity: str) -> int:
        return self.entities.index(entity)


def relation_vectors(H_r: Tensor, w_r: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Self-attentive pooling of padded relation token states (R, l_r, d) -> (R, d)."""
    return self_attentive_pool(H_r, w_r, mask)


def relation_match_score(h_q: Tensor, r: Tensor) -> tuple[Tensor, Tensor]:
    """s_r = r . sum_j beta_j h_j, beta = softmax_j(r . h_j), for each row of ``r``.

    ``h_q`` is (l_q, d); ``r`` is (R, d) or (d,). Returns (s_r, beta).
    """
    single = r.ndim == 1
    if single:
        r = r.reshape(1, -1)
    beta = T.softmax(T.matmul(r, T.transpose(h_q)), axis=1)
    summary = T.matmul(beta, h_q)
    s = T.sum_(T.mul(r, summary), axis=1)
    if single:
        return s.reshape(()), beta.reshape(-1)
    return s, beta


def neighbor_attention(s_r: Tensor, is_topic: np.ndarray, segments: np.ndarray,
                       n_entities: int) -> Tensor:
    """Softmax over each entity's neighbours of (1[neighbour in E0] + s_r)."""
    logits = T.add(s_r, np.asarray(is_topic, dtype=np.float64))
    return T.segment_softmax(logits, segments, n_entities)


@dataclass
class NeighborIndex:
    """Flattened neighbour lists of the entities being read."""

    owner: np.ndarray     # row of the entity owning the pair
    relation: np.ndarray  # relation row
    neighbor: np.ndarray  # row of the neighbour entity
    is_topic: np.ndarray  # neighbour is a topic entity

    @classmethod
    def build(cls, entities: list[str], neighbors: dict[str, list[tuple[str, str]]],
              relations: list[str], topic) -> "NeighborIndex":
        erow = {e: i for i, e in enumerate(entities)}
        rrow = {r: i for i, r in enumerate(relations)}
        topic = set(topic)
        owner, rel, nb, top = [], [], [], []
        for e in entities:
            for r, other in neighbors.get(e, ()):
                owner.append(erow[e])
                rel.append(rrow[r])
                nb.append(erow[other])
                top.append(other in topic)
        return cls(np.array(owner, dtype=np.int64), np.array(rel, dtype=np.int64),
                   np.array(nb, dtype=np.int64), np.array(top, dtype=bool))


def propagate(E: Tensor, R: Tensor, s_r: Tensor, index: NeighborIndex,
              params: SgReaderParams) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """One gated hop for every entity row of ``E``.

    e' = g e + (1 - g) sum_i s~_i tanh(W_e [r_i; e_i]),  g = sigmoid(W_gate [e; aggregate]).
    Rows with no neighbours come back unchanged. Returns (e', gates, attention).
    """
    n = E.shape[0]
    if len(index.owner) == 0:
        return E, np.full(n, np.nan), np.zeros(0)
    msg_in = T.concat([T.take(R, index.relation), T.take(E, index.neighbor)], axis=1)
    msgs = T.tanh(T.linear(msg_in, params.W_e))
    att = neighbor_attention(T.take(s_r, index.relation), index.is_topic, index.owner, n)
    agg = T.segment_sum(T.mul(msgs, att.reshape(-1, 1)), index.owner, n)
    gate = T.sigmoid(T.linear(T.concat([E, agg], axis=1), params.W_gate))
    has = np.zeros((n, 1))
    has[np.unique(index.owner)] = 1.0
    # isolated rows: gate forced to exactly 1 so e' == e bitwise
    gate = T.add(T.mul(gate, has), 1.0 - has)
    out = T.add(T.mul(gate, E), T.mul(T.sub(1.0, gate), agg))
    gates = np.where(has[:, 0] > 0, gate.data[:, 0], np.nan)
    return out, gates, att.data.copy()


def read_subgraph(h_q: Tensor, R: Tensor, E: Tensor, entities: list[str],
                  index: NeighborIndex, params: SgReaderParams) -> tuple[EntityKnowledge, Tensor]:
    """Single-hop knowledge for every entity; relation scores computed once per relation.

    ``R`` holds one pooled vector per relation, ``E`` the base embeddings of
    ``entities``. Returns the knowledge and the per-relation scores s_r.
    """
    s_r, beta = relation_match_score(h_q, R)
    out, gates, att = propagate(E, R, s_r, index, params)
    know = EntityKnowledge(list(entities), out, gates, att, index.owner, s_r.data, beta.data)
    return know, s_r
