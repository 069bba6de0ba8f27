"""End-to-end model: subgraph reader, knowledge-aware text reader and answer scorer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import tensor as T
from .config import RunConfig
from .dataset import QAExample
from .kb import relation_tokens
from .layers import EmbeddingTable, LstmCell, glorot, length_mask, pad_ids
from .scorer import score_answers
from .subgraph_reader import NeighborIndex, SgReaderParams, read_subgraph, relation_vectors
from .tensor import Tensor
from .text_reader import (
    KaReaderParams,
    TextEvidence,
    aggregate_entity_text,
    conditional_gate,
    encode_documents,
    question_vector,
    reformulate_query,
    token_features,
)

PAD, UNK = "<pad>", "<unk>"


@dataclass
class Vocab:
    words: list[str]
    entities: list[str]

    @classmethod
    def from_examples(cls, examples: Iterable[QAExample]) -> "Vocab":
        words: set[str] = set()
        ents: set[str] = set()
        for ex in examples:
            words.update(ex.question)
            ents.update(ex.candidates)
            ents.update(ex.subgraph_entities)
            for _, r, _ in ex.subgraph_triples:
                words.update(relation_tokens(r))
            for d in ex.documents:
                words.update(d.tokens)
        words.discard(PAD)
        words.discard(UNK)
        return cls([PAD, UNK] + sorted(words), sorted(ents))

    def to_dict(self) -> dict:
        return {"words": self.words, "entities": self.entities}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(list(d["words"]), list(d["entities"]))


@dataclass
class Forward:
    candidates: list[str]
    scores: Tensor
    knowledge: Tensor
    text: TextEvidence | None
    trace: dict = field(default_factory=dict)


class KAReader:
    """All trainable state lives in ``named_params()``; names are stable across runs."""

    def __init__(self, config: RunConfig, vocab: Vocab):
        self.config = config
        self.vocab = vocab
        rng = np.random.default_rng(config.seed)
        d, wd = config.d_h, config.word_dim
        self.words = EmbeddingTable(vocab.words, wd, rng, config.word_init_scale,
                                    frozen=config.freeze_words)
        self.entity_table = EmbeddingTable(vocab.entities, d, rng, config.entity_init_scale)
        self.lstm = LstmCell(wd, d, rng)
        self.sg = SgReaderParams.init(d, rng)
        self.ka = KaReaderParams.init(d, wd, rng, config.gate_variant,
                                      conditional=config.ablation != "std-gate")
        out_dim = d if self.kb_only else 2 * d
        self.W_s = Tensor(glorot(rng, (d, out_dim)), requires_grad=True)
        self.text_calls = 0
        self._rel_ids: dict[str, list[int]] = {}

    @property
    def kb_only(self) -> bool:
        return self.config.ablation == "kb-only"

    def named_params(self) -> dict[str, Tensor]:
        """Trainable parameters in a fixed order."""
        out = {}
        if not self.words.frozen:
            out["emb.words"] = self.words.weight
        out["emb.entities"] = self.entity_table.weight
        out.update(self.lstm.params("lstm"))
        out.update(self.sg.named())
        out.update(self.ka.named(text=not self.kb_only))
        out["out.W_s"] = self.W_s
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"emb.words": self.words.weight.data}
        out.update({k: v.data for k, v in self.named_params().items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        targets = {"emb.words": self.words.weight, **self.named_params()}
        for name, t in targets.items():
            if name not in arrays:
                raise KeyError(f"checkpoint has no parameter {name!r}")
            if arrays[name].shape != t.shape:
                raise ValueError(f"parameter {name!r}: checkpoint shape {arrays[name].shape} "
                                 f"!= model shape {t.shape}")
            t.data = np.array(arrays[name], dtype=np.float64)

    def zero_grad(self) -> None:
        for p in self.named_params().values():
            p.zero_grad()

    # -------------------------------------------------------------- pieces

    def word_ids(self, tokens: Iterable[str]) -> list[int]:
        unk = self.words.index[UNK]
        return [self.words.index.get(t, unk) for t in tokens]

    def entity_ids(self, entities: Iterable[str]) -> np.ndarray:
        return self.entity_table.ids(entities)

    def _embed(self, ids: np.ndarray, rng, training: bool) -> Tensor:
        return T.dropout(self.words.lookup(ids), self.config.dropout, rng, training)

    def encode_question(self, question: list[str], rng=None, training=False) -> Tensor:
        ids, _ = pad_ids([self.word_ids(question)], self.config.max_question_len)
        H = self.lstm.run(self._embed(ids, rng, training))[0]
        return T.dropout(H, self.config.dropout, rng, training)

    def encode_relations(self, relations: list[str], rng=None, training=False
                         ) -> tuple[Tensor, Tensor | None]:
        d = self.config.d_h
        if not relations:
            return Tensor(np.zeros((0, d))), None
        seqs = []
        for r in relations:
            if r not in self._rel_ids:
                self._rel_ids[r] = self.word_ids(relation_tokens(r) or [r])
            seqs.append(self._rel_ids[r])
        ids, lengths = pad_ids(seqs)
        H = self.lstm.run(self._embed(ids, rng, training))
        H = T.dropout(H, self.config.dropout, rng, training)
        return relation_vectors(H, self.sg.w_r, length_mask(lengths, ids.shape[1]))

    def read_documents(self, ex: QAExample, candidates: list[str], knowledge: Tensor,
                       q: Tensor, q_ref: Tensor, rng=None, training=False) -> TextEvidence:
        cfg = self.config
        self.text_calls += 1
        d = cfg.d_h
        if not ex.documents:
            return TextEvidence(candidates, Tensor(np.zeros((len(candidates), d))), q_ref)
        docs = ex.documents
        seqs = [self.word_ids(doc.tokens) for doc in docs]
        ids, lengths = pad_ids(seqs, cfg.max_doc_len)
        n_doc, steps = ids.shape
        extra = np.zeros((n_doc, steps, 2))
        link = np.zeros((n_doc, steps), dtype=np.int64)
        linked = np.zeros((n_doc, steps, 1))
        row = {e: i for i, e in enumerate(candidates)}
        doc_entities = []
        for k, doc in enumerate(docs):
            n = int(lengths[k])
            extra[k, :n] = token_features(doc.tokens[:n], ex.question)
            ents = []
            for i, ent in enumerate(doc.linked_entities()[:n]):
                if ent is not None:
                    link[k, i] = row[ent]
                    linked[k, i] = 1.0
                    ents.append(ent)
            doc_entities.append(ents)
        emb = self._embed(ids, rng, training)
        feats = T.linear(T.concat([emb, Tensor(extra)], axis=2), self.ka.W_f)
        gates = None
        if cfg.ablation == "no-know":
            fused = feats
        else:
            e_tok = T.take(knowledge, link.reshape(-1)).reshape(n_doc, steps, d)
            gated, gate = conditional_gate(q, e_tok, feats, self.ka.W_gd, cfg.gate_variant,
                                           conditional=cfg.ablation != "std-gate")
            # tokens without an entity link keep their projected features exactly
            fused = T.add(T.mul(gated, linked), T.mul(feats, 1.0 - linked))
            gates = np.where(linked > 0, gate.data, np.nan)
        D, lam = encode_documents(fused, lengths, q_ref, self.ka.bilstm, cfg.dropout, rng,
                                  training)
        e_d = aggregate_entity_text(candidates, doc_entities, D)
        return TextEvidence(candidates, e_d, q_ref, D, lam.data.copy(), gates)

    # -------------------------------------------------------------- forward

    def forward(self, ex: QAExample, training: bool = False,
                rng: np.random.Generator | None = None) -> Forward:
        cfg = self.config
        candidates = list(ex.candidates)
        sub = ex.subgraph(cfg.max_neighbors)
        relations = sub.relations

        h_q = self.encode_question(ex.question, rng, training)
        R, alpha = self.encode_relations(relations, rng, training)
        E = self.entity_table.lookup(self.entity_ids(candidates))
        index = NeighborIndex.build(candidates, sub.neighbors, relations, ex.topic_entities)
        know, s_r = read_subgraph(h_q, R, E, candidates, index, self.sg)

        q, b = question_vector(h_q, self.ka.w_q)
        topic_rows = [candidates.index(e) for e in ex.topic_entities]
        if cfg.ablation == "no-reform":
            q_ref, gamma_q = q, None
        else:
            topic_k = T.take(know.vectors, topic_rows) if topic_rows else None
            q_ref, gamma_q = reformulate_query(q, topic_k, self.ka.W_q, self.ka.W_gq)

        text = None
        if self.kb_only:
            scores = score_answers(q_ref, know.vectors, self.W_s)
        else:
            text = self.read_documents(ex, candidates, know.vectors, q, q_ref, rng, training)
            scores = score_answers(q_ref, know.vectors, self.W_s, text.vectors)

        trace = {
            "alpha": None if alpha is None else alpha.data,
            "s_r": s_r.data,
            "beta": know.relation_beta,
            "s_tilde": know.attention,
            "s_tilde_owner": know.pair_entity,
            "gamma_e": know.gates,
            "b": b.data,
            "q": q.data,
            "q_ref": q_ref.data,
            "gamma_q": None if gamma_q is None else gamma_q.data,
        }
        if text is not None:
            trace["lambda"] = text.token_attention
            trace["gamma_d"] = text.token_gates
        return Forward(candidates, scores, know.vectors, text, trace)
