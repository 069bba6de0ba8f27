"""QA example records and their line-delimited JSON files.

One question per line::

    {"id": "q0001", "question": ["what", "is", ...], "topic_entities": ["person3"],
     "answers": ["city7"], "candidates": [...],
     "subgraph": {"entities": [...], "triples": [["person3", "born_in", "city7"], ...]},
     "documents": [{"tokens": [...], "spans": [[start, end, "city7"], ...]}, ...]}

Spans are half-open token ranges linked to one entity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .kb import MAX_NEIGHBORS, Subgraph


class DatasetError(ValueError):
    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        self.line = line
        self.field_name = field_name
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field {field_name!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class Document:
    tokens: list[str]
    spans: list[tuple[int, int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.spans = [tuple(s) for s in self.spans]

    def linked_entities(self) -> list[str | None]:
        """Per-token entity id, None for tokens outside every span."""
        out: list[str | None] = [None] * len(self.tokens)
        for start, end, ent in self.spans:
            for i in range(start, end):
                out[i] = ent
        return out

    def entities(self) -> list[str]:
        return list(dict.fromkeys(ent for _, _, ent in self.spans))

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "spans": [list(s) for s in self.spans]}


@dataclass
class QAExample:
    id: str
    question: list[str]
    topic_entities: list[str]
    answers: list[str]
    subgraph_entities: list[str]
    subgraph_triples: list[tuple[str, str, str]]
    documents: list[Document]
    candidates: list[str]

    def __post_init__(self):
        self.subgraph_triples = [tuple(t) for t in self.subgraph_triples]

    def subgraph(self, max_neighbors: int = MAX_NEIGHBORS) -> Subgraph:
        return Subgraph(list(self.subgraph_entities), list(self.subgraph_triples),
                        list(self.topic_entities), max_neighbors)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": list(self.question),
            "topic_entities": list(self.topic_entities),
            "answers": list(self.answers),
            "candidates": list(self.candidates),
            "subgraph": {
                "entities": list(self.subgraph_entities),
                "triples": [list(t) for t in self.subgraph_triples],
            },
            "documents": [d.to_dict() for d in self.documents],
        }

    @classmethod
    def from_dict(cls, rec: dict, line: int | None = None) -> "QAExample":
        def need(obj: dict, key: str, kind, name: str | None = None):
            if key not in obj:
                raise DatasetError("missing", line, name or key)
            val = obj[key]
            if not isinstance(val, kind):
                raise DatasetError(f"expected {kind.__name__}", line, name or key)
            return val

        def str_list(obj: dict, key: str, name: str | None = None) -> list[str]:
            val = need(obj, key, list, name)
            if not all(isinstance(v, str) for v in val):
                raise DatasetError("expected a list of strings", line, name or key)
            return val

        sub = need(rec, "subgraph", dict)
        triples = need(sub, "triples", list, "subgraph.triples")
        for t in triples:
            if not (isinstance(t, list) and len(t) == 3 and all(isinstance(v, str) for v in t)):
                raise DatasetError(f"bad triple {t!r}", line, "subgraph.triples")
        docs = []
        for k, d in enumerate(need(rec, "documents", list)):
            name = f"documents[{k}]"
            if not isinstance(d, dict):
                raise DatasetError("expected an object", line, name)
            tokens = str_list(d, "tokens", f"{name}.tokens")
            spans = need(d, "spans", list, f"{name}.spans")
            for s in spans:
                ok = (isinstance(s, list) and len(s) == 3 and isinstance(s[0], int)
                      and isinstance(s[1], int) and isinstance(s[2], str)
                      and 0 <= s[0] < s[1] <= len(tokens))
                if not ok:
                    raise DatasetError(f"bad span {s!r}", line, f"{name}.spans")
            docs.append(Document(tokens, spans))
        ex = cls(
            id=need(rec, "id", str),
            question=str_list(rec, "question"),
            topic_entities=str_list(rec, "topic_entities"),
            answers=str_list(rec, "answers"),
            subgraph_entities=str_list(sub, "entities", "subgraph.entities"),
            subgraph_triples=triples,
            documents=docs,
            candidates=str_list(rec, "candidates"),
        )
        ex.validate(line)
        return ex

    def validate(self, line: int | None = None) -> None:
        cands = set(self.candidates)
        if len(cands) != len(self.candidates):
            raise DatasetError("duplicate candidates", line, "candidates")
        if not self.question:
            raise DatasetError("empty question", line, "question")
        if not self.answers:
            raise DatasetError("no gold answers", line, "answers")
        if not set(self.answers) <= cands:
            missing = sorted(set(self.answers) - cands)
            raise DatasetError(f"gold answers {missing} not among candidates", line, "answers")
        sub_ents = set(self.subgraph_entities)
        if not set(self.topic_entities) <= sub_ents:
            raise DatasetError("topic entities outside the subgraph", line, "topic_entities")
        if not sub_ents <= cands:
            raise DatasetError("subgraph entities missing from candidates", line, "candidates")
        for h, _, t in self.subgraph_triples:
            if h not in sub_ents or t not in sub_ents:
                raise DatasetError(f"triple endpoint outside subgraph: {h}, {t}", line,
                                   "subgraph.triples")
        for k, d in enumerate(self.documents):
            if not d.tokens:
                raise DatasetError("empty document", line, f"documents[{k}].tokens")
            for _, _, ent in d.spans:
                if ent not in cands:
                    raise DatasetError(f"linked entity {ent} not a candidate", line,
                                       f"documents[{k}].spans")


def save_dataset(examples: Iterable[QAExample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")


def load_dataset(path) -> list[QAExample]:
    out = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"invalid JSON: {err.msg}", lineno) from None
            if not isinstance(rec, dict):
                raise DatasetError("record is not an object", lineno)
            out.append(QAExample.from_dict(rec, lineno))
    return out
