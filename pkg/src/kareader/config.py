"""Run configuration with the published hyperparameters as defaults."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

ABLATIONS = ("none", "no-reform", "no-know", "std-gate", "kb-only")
GATE_VARIANTS = ("scalar-ew", "vector-ew", "scalar-dot")
KB_FRACTIONS = (0.1, 0.3, 0.5, 1.0)

# where each default comes from: "published" values are the reported
# implementation settings, "chosen" ones are unstated and picked here.
PROVENANCE = {
    "d_h": "published: LSTM hidden size and entity embedding size 100",
    "word_dim": "published: 300-d word embeddings",
    "dropout": "published: 0.2 on word embeddings and LSTM hidden states",
    "lr": "published: Adam learning rate 0.001",
    "clip": "published: gradient clipping norm 1.0",
    "smoothing": "published: label smoothing 0.1 on binary cross-entropy",
    "max_question_len": "published: max question length 10",
    "max_doc_len": "published: max document length 50",
    "max_neighbors": "published: at most 50 neighbours per entity",
    "beta1": "chosen: conventional Adam default",
    "beta2": "chosen: conventional Adam default",
    "adam_eps": "chosen: conventional Adam default",
    "epochs": "chosen: synthetic-scale default",
    "batch_size": "chosen: small batches give more updates on a few hundred questions",
    "threshold": "chosen: answer-set threshold on s^e",
    "kb_fraction": "chosen: default incompleteness setting",
    "seed": "chosen",
    "ablation": "chosen: full model",
    "gate_variant": "chosen: scalar gate over elementwise products",
    "entity_init_scale": "chosen: uniform init half-width for entity table; wide init keeps entities distinguishable",
    "word_init_scale": "chosen: uniform init half-width for random word table",
    "freeze_words": "chosen: random word vectors are trained",
    "top_k": "chosen: subgraph size at synthetic scale",
    "restart": "chosen: PPR restart probability",
}


@dataclass
class RunConfig:
    seed: int = 0
    d_h: int = 100
    word_dim: int = 300
    dropout: float = 0.2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip: float = 1.0
    smoothing: float = 0.1
    max_question_len: int = 10
    max_doc_len: int = 50
    max_neighbors: int = 50
    kb_fraction: float = 0.3
    ablation: str = "none"
    gate_variant: str = "scalar-ew"
    epochs: int = 50
    batch_size: int = 4
    threshold: float = 0.5
    entity_init_scale: float = 1.0
    word_init_scale: float = 1.0
    freeze_words: bool = False
    top_k: int = 50
    restart: float = 0.15

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.d_h <= 0 or self.d_h % 2:
            raise ValueError(f"d_h must be a positive even number, got {self.d_h}")
        if not 0.0 < self.kb_fraction <= 1.0:
            raise ValueError(f"kb_fraction must be in (0, 1], got {self.kb_fraction}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.gate_variant not in GATE_VARIANTS:
            raise ValueError(f"unknown gate variant {self.gate_variant!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must be in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    # architecture-defining fields, checked when a checkpoint is loaded
    ARCH_FIELDS = ("d_h", "word_dim", "ablation", "gate_variant")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def dump_lines(self) -> list[str]:
        return [f"{f.name}\t{getattr(self, f.name)!r}\t{PROVENANCE.get(f.name, '')}"
                for f in fields(self)]
