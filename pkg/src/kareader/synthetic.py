"""Synthetic typed KB, sentence corpus and templated questions.

Every fact of the full KB has one templated sentence. After the KB is
downsampled, questions are answered from the kept triples, the sentences, or
both. Gold answers always come from brute-force lookup in the full KB.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dataset import Document, QAExample, save_dataset
from .kb import KnowledgeGraph, Triple, downsample_kb, extract_subgraph, relation_tokens

# relation -> (head type, tail type, min tails, max tails, sentence template)
RELATIONS: dict[str, tuple[str, str, int, int, str]] = {
    "born_in": ("person", "city", 1, 1, "{h} was born in {t}"),
    "lives_in": ("person", "city", 1, 2, "{h} lives in {t}"),
    "works_for": ("person", "company", 1, 1, "{h} works for {t}"),
    "studied_at": ("person", "university", 1, 1, "{h} studied at {t}"),
    "citizen_of": ("person", "country", 1, 1, "{h} is a citizen of {t}"),
    "city_located_in": ("city", "country", 1, 1, "{h} is a city in {t}"),
    "campus_located_in": ("university", "city", 1, 1, "the campus of {h} is in {t}"),
    "headquartered_in": ("company", "city", 1, 1, "{h} has its headquarters in {t}"),
    "founded_by": ("company", "person", 1, 2, "{h} was founded by {t}"),
}

QUESTION_TEMPLATES = (
    ["what", "is", "the", "{rel}", "of", "{e}"],
    ["{rel}", "of", "{e}", "?"],
    ["tell", "me", "the", "{rel}", "of", "{e}"],
)


@dataclass
class SyntheticConfig:
    n_person: int = 90
    n_city: int = 28
    n_country: int = 10
    n_company: int = 14
    n_university: int = 10
    n_questions: int = 300
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    kb_fraction: float = 0.3
    top_k: int = 50
    max_topic_docs: int = 10
    n_distractor_docs: int = 2
    max_question_len: int = 10
    max_doc_len: int = 50
    seed: int = 0

    def type_sizes(self) -> dict[str, int]:
        return {"person": self.n_person, "city": self.n_city, "country": self.n_country,
                "company": self.n_company, "university": self.n_university}


@dataclass
class SyntheticWorld:
    config: SyntheticConfig
    full_kb: KnowledgeGraph
    kept_kb: KnowledgeGraph
    sentences: dict[Triple, Document]
    splits: dict[str, list[QAExample]]
    stats: dict = field(default_factory=dict)


def build_kb(config: SyntheticConfig, rng: random.Random) -> KnowledgeGraph:
    by_type = {t: [f"{t}{i}" for i in range(n)] for t, n in config.type_sizes().items()}
    kb = KnowledgeGraph(entities=[e for ents in by_type.values() for e in ents])
    for rel, (htype, ttype, lo, hi, _) in RELATIONS.items():
        for head in by_type[htype]:
            for tail in rng.sample(by_type[ttype], rng.randint(lo, hi)):
                kb.add((head, rel, tail))
    return kb


def sentence(triple: Triple) -> Document:
    h, r, t = triple
    tokens, spans = [], []
    for word in RELATIONS[r][4].split(" "):
        if word in ("{h}", "{t}"):
            ent = h if word == "{h}" else t
            spans.append((len(tokens), len(tokens) + 1, ent))
            tokens.append(ent)
        else:
            tokens.append(word)
    return Document(tokens, spans)


def question_tokens(head: str, relation: str, rng: random.Random) -> list[str]:
    template = rng.choice(QUESTION_TEMPLATES)
    out = []
    for tok in template:
        if tok == "{rel}":
            out.extend(relation_tokens(relation))
        elif tok == "{e}":
            out.append(head)
        else:
            out.append(tok)
    return out


def brute_force_answers(triples, head: str, relation: str) -> set[str]:
    return {t for h, r, t in triples if h == head and r == relation}


def generate_synthetic(config: SyntheticConfig) -> SyntheticWorld:
    rng = random.Random(config.seed)
    full = build_kb(config, rng)
    kept = downsample_kb(full, config.kb_fraction, config.seed)
    sentences = {t: sentence(t) for t in full.triples}
    by_entity: dict[str, list[Triple]] = {e: [] for e in full.entities}
    for t in full.triples:
        by_entity[t[0]].append(t)
        if t[2] != t[0]:
            by_entity[t[2]].append(t)

    pairs = sorted({(h, r) for h, r, _ in full.triples})
    rng.shuffle(pairs)
    examples: list[QAExample] = []
    discarded = 0
    text_only = 0
    for head, rel in pairs:
        if len(examples) >= config.n_questions:
            break
        gold = brute_force_answers(full.triples, head, rel)
        key = [(head, rel, a) for a in sorted(gold)]
        # answer-bearing sentences first so the cap never drops them
        others = [t for t in by_entity[head] if t not in key]
        rng.shuffle(others)
        doc_triples = (key + others)[: max(config.max_topic_docs, len(key))]
        pool = [t for t in full.triples if head not in (t[0], t[2])]
        doc_triples += rng.sample(pool, min(config.n_distractor_docs, len(pool)))
        rng.shuffle(doc_triples)
        docs = [sentences[t] for t in doc_triples]

        sub = extract_subgraph(kept, [head], config.top_k)
        cands = list(dict.fromkeys(sub.entities + [e for d in docs for e in d.entities()]))
        reachable = brute_force_answers(sub.triples, head, rel) | brute_force_answers(
            doc_triples, head, rel)
        if reachable != gold or not gold <= set(cands):
            discarded += 1
            continue
        if not any((head, rel, a) in kept for a in gold):
            text_only += 1
        q = question_tokens(head, rel, rng)[: config.max_question_len]
        examples.append(QAExample(
            id=f"q{len(examples):04d}", question=q, topic_entities=[head],
            answers=sorted(gold), subgraph_entities=sub.entities,
            subgraph_triples=sub.triples, documents=docs, candidates=cands,
        ))

    n = len(examples)
    n_train = int(round(config.split[0] * n))
    n_dev = int(round(config.split[1] * n))
    splits = {
        "train": examples[:n_train],
        "dev": examples[n_train:n_train + n_dev],
        "test": examples[n_train + n_dev:],
    }
    stats = {
        "entities": len(full.entities),
        "relations": len(full.relations),
        "triples_full": len(full),
        "triples_kept": len(kept),
        "triples_dropped": len(full) - len(kept),
        "kb_fraction": config.kb_fraction,
        "fraction_realized": len(kept) / len(full),
        "questions": n,
        "questions_discarded": discarded,
        "questions_without_kb_answer": text_only,
        **{f"{k}_questions": len(v) for k, v in splits.items()},
        "relation_counts": dict(sorted(Counter(r for _, r, _ in full.triples).items())),
    }
    return SyntheticWorld(config, full, kept, sentences, splits, stats)


def write_world(world: SyntheticWorld, data_dir) -> dict[str, Path]:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "kb": data_dir / "kb.tsv",
        "kb_full": data_dir / "kb_full.tsv",
        "stats": data_dir / "stats.json",
    }
    world.kept_kb.save_tsv(paths["kb"])
    world.full_kb.save_tsv(paths["kb_full"])
    for split, exs in world.splits.items():
        paths[split] = data_dir / f"{split}.jsonl"
        save_dataset(exs, paths[split])
    cfg = asdict(world.config)
    cfg["split"] = list(cfg["split"])
    paths["stats"].write_text(
        json.dumps({"config": cfg, **world.stats}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return paths
