"""Triple store, personalized PageRank, subgraph extraction and KB downsampling."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

Triple = tuple[str, str, str]

MAX_NEIGHBORS = 50


def relation_tokens(relation: str) -> list[str]:
    """``people.person.place_of_birth`` -> ``['people', 'person', 'place', 'of', 'birth']``."""
    return [t for t in re.split(r"[^0-9A-Za-z]+", relation.lower()) if t]


class KnowledgeGraph:
    """Duplicate-free list of (head, relation, tail) triples plus vocabularies."""

    def __init__(self, triples: Iterable[Triple] = (), entities: Iterable[str] = ()):
        self.triples: list[Triple] = []
        self._seen: set[Triple] = set()
        self.entities: list[str] = []
        self._entity_set: set[str] = set()
        for e in entities:
            self.add_entity(e)
        for t in triples:
            self.add(t)

    def add_entity(self, e: str) -> None:
        if e not in self._entity_set:
            self._entity_set.add(e)
            self.entities.append(e)

    def add(self, triple: Triple) -> bool:
        triple = tuple(triple)
        if len(triple) != 3:
            raise ValueError(f"triple must have 3 fields, got {triple!r}")
        if triple in self._seen:
            return False
        self._seen.add(triple)
        self.triples.append(triple)
        self.add_entity(triple[0])
        self.add_entity(triple[2])
        return True

    @property
    def relations(self) -> list[str]:
        return sorted({r for _, r, _ in self.triples})

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple) -> bool:
        return tuple(triple) in self._seen

    def __eq__(self, other) -> bool:
        return (isinstance(other, KnowledgeGraph) and self.triples == other.triples
                and self.entities == other.entities)

    def tails(self, head: str, relation: str) -> set[str]:
        return {t for h, r, t in self.triples if h == head and r == relation}

    def save_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for h, r, t in self.triples:
                fh.write(f"{h}\t{r}\t{t}\n")

    @classmethod
    def load_tsv(cls, path) -> "KnowledgeGraph":
        kg = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected head<TAB>relation<TAB>tail")
                kg.add(tuple(parts))
        return kg


@dataclass
class PPRResult:
    scores: dict[str, float]
    iterations: int
    converged: bool


def transition_matrix(graph: KnowledgeGraph) -> tuple[sparse.csr_matrix, np.ndarray, dict[str, int]]:
    """Row-stochastic walk matrix over the undirected view, edge multiplicity kept.

    A self-loop counts once. Rows of dangling entities are left empty and
    flagged in the returned boolean vector.
    """
    index = {e: i for i, e in enumerate(graph.entities)}
    rows, cols = [], []
    for h, _, t in graph.triples:
        i, j = index[h], index[t]
        rows.append(i)
        cols.append(j)
        if i != j:
            rows.append(j)
            cols.append(i)
    n = len(index)
    adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    dangling = deg == 0
    inv = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, deg))
    return sparse.diags(inv) @ adj, dangling, index


def personalized_pagerank(graph: KnowledgeGraph, seeds: Sequence[str], restart: float = 0.15,
                          tol: float = 1e-12, max_iters: int = 1000) -> PPRResult:
    """Random walk with restart to the uniform distribution over ``seeds``.

    Mass sitting on a dangling entity jumps back to the seeds.
    """
    if not seeds:
        raise ValueError("personalized_pagerank: no seed entities")
    if not 0.0 < restart < 1.0:
        raise ValueError(f"restart must be in (0, 1), got {restart}")
    P, dangling, index = transition_matrix(graph)
    missing = [s for s in seeds if s not in index]
    if missing:
        raise KeyError(f"seed entities not in graph: {missing}")
    n = len(index)
    s = np.zeros(n)
    for e in set(seeds):
        s[index[e]] = 1.0
    s /= s.sum()
    Pt = P.T.tocsr()
    p = s.copy()
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        nxt = restart * s + (1.0 - restart) * (Pt @ p + p[dangling].sum() * s)
        delta = np.abs(nxt - p).sum()
        p = nxt
        if delta < tol:
            converged = True
            break
    if not converged:
        log.warning("personalized_pagerank did not converge in %d iterations", max_iters)
    return PPRResult({e: float(p[i]) for e, i in index.items()}, it, converged)


@dataclass
class Subgraph:
    """Question-specific KB neighbourhood.

    ``neighbors[e]`` lists ``(relation, entity)`` pairs over both edge directions,
    in triple order, capped at ``max_neighbors``.
    """

    entities: list[str]
    triples: list[Triple]
    topic: list[str]
    max_neighbors: int = MAX_NEIGHBORS
    neighbors: dict[str, list[tuple[str, str]]] = field(init=False)

    def __post_init__(self):
        ents = set(self.entities)
        for h, _, t in self.triples:
            if h not in ents or t not in ents:
                raise ValueError(f"subgraph triple ({h}, {t}) leaves the entity set")
        if not set(self.topic) <= ents:
            raise ValueError("topic entities must belong to the subgraph")
        self.neighbors = {e: [] for e in self.entities}
        for h, r, t in self.triples:
            self._link(h, r, t)
            if h != t:
                self._link(t, r, h)

    def _link(self, e: str, r: str, other: str) -> None:
        nbrs = self.neighbors[e]
        if len(nbrs) < self.max_neighbors:
            nbrs.append((r, other))

    @property
    def relations(self) -> list[str]:
        return sorted({r for _, r, _ in self.triples})

    def relation_tokens(self) -> dict[str, list[str]]:
        return {r: relation_tokens(r) for r in self.relations}


def extract_subgraph(graph: KnowledgeGraph, topic: Sequence[str], top_k: int = 50,
                     restart: float = 0.15, max_neighbors: int = MAX_NEIGHBORS) -> Subgraph:
    """Keep the ``top_k`` entities by PPR from ``topic`` and every triple among them.

    Seeds are always kept; entities with zero PPR mass never are.
    """
    topic = list(dict.fromkeys(topic))
    if top_k < len(topic):
        raise ValueError(f"top_k={top_k} smaller than the {len(topic)} topic entities")
    scores = personalized_pagerank(graph, topic, restart).scores
    rank = sorted(
        (e for e in graph.entities if e not in topic and scores[e] > 0.0),
        key=lambda e: (-scores[e], e),
    )
    kept = topic + rank[: top_k - len(topic)]
    kept_set = set(kept)
    triples = [t for t in graph.triples if t[0] in kept_set and t[2] in kept_set]
    return Subgraph(kept, triples, topic, max_neighbors)


def downsample_kb(graph: KnowledgeGraph, fraction: float, seed: int) -> KnowledgeGraph:
    """Uniformly keep floor(fraction * |triples|) triples, original order preserved."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    n = len(graph.triples)
    keep = int(np.floor(fraction * n + 1e-9))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=keep, replace=False))
    return KnowledgeGraph((graph.triples[i] for i in chosen), entities=graph.entities)
