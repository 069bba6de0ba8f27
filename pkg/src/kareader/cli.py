"""Command-line entry point: generate, train, eval, ablate, gradcheck, config-dump.

Every command prints tab-separated results to stdout and exits nonzero when a
check fails. Figures are written as PNG files next to the text reports.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import plots
from .config import ABLATIONS, GATE_VARIANTS, KB_FRACTIONS, RunConfig
from .dataset import Document, QAExample, load_dataset
from .gradcheck import grad_check
from .model import KAReader, Vocab
from .scorer import qa_loss
from .synthetic import SyntheticConfig, generate_synthetic, write_world
from .train import TrainingDiverged, evaluate, load_model, train

log = logging.getLogger("kareader")

ABLATION_LABELS = {
    "none": "full model",
    "no-reform": "w/o query reformulation",
    "no-know": "w/o knowledge enhancement",
    "std-gate": "w/o conditional gate",
    "kb-only": "subgraph reader only",
}


class CliError(Exception):
    pass


def _emit(rows) -> None:
    for row in rows:
        print("\t".join(str(v) for v in row))


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------- argparse


def _common(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--kb-fraction", type=float, choices=KB_FRACTIONS, default=d.kb_fraction)
    p.add_argument("--ablation", choices=ABLATIONS, default=d.ablation)
    p.add_argument("--gate-variant", choices=GATE_VARIANTS, default=d.gate_variant)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--threshold", type=float, default=d.threshold)
    p.add_argument("--data-dir", type=Path, default=Path("data"))
    p.add_argument("--checkpoint", type=Path, default=Path("runs/model.ckpt"))
    p.add_argument("--d-h", type=int, default=d.d_h, help="hidden and entity size")
    p.add_argument("--word-dim", type=int, default=d.word_dim)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--dropout", type=float, default=d.dropout)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kareader", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic KB, corpus and question splits")
    _common(g)
    g.add_argument("--questions", type=int, default=SyntheticConfig.n_questions)

    t = sub.add_parser("train", help="train on <data-dir>/train.jsonl, select on dev")
    _common(t)
    t.add_argument("--out-dir", type=Path, default=Path("runs"))

    e = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _common(e)
    e.add_argument("--split", default="test")
    e.add_argument("--out-dir", type=Path, default=Path("runs"))

    a = sub.add_parser("ablate", help="train and compare every model variant on dev")
    _common(a)
    a.add_argument("--out-dir", type=Path, default=Path("runs/ablation"))
    a.add_argument("--variants", nargs="+", choices=ABLATIONS, default=list(ABLATIONS))

    c = sub.add_parser("gradcheck", help="finite-difference check of every parameter")
    _common(c)
    c.set_defaults(d_h=4, word_dim=6, dropout=0.0)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--step", type=float, default=1e-5)
    c.add_argument("--corrupt-grad", metavar="NAME", help=argparse.SUPPRESS)

    d = sub.add_parser("config-dump", help="print the run configuration with provenance")
    _common(d)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(seed=args.seed, kb_fraction=args.kb_fraction, ablation=args.ablation,
                     gate_variant=args.gate_variant, epochs=args.epochs,
                     batch_size=args.batch_size, threshold=args.threshold, d_h=args.d_h,
                     word_dim=args.word_dim, lr=args.lr, dropout=args.dropout)


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    cfg = SyntheticConfig(seed=args.seed, kb_fraction=args.kb_fraction,
                          n_questions=args.questions)
    world = generate_synthetic(cfg)
    try:
        paths = write_world(world, args.data_dir)
    except OSError as err:
        raise CliError(f"cannot write dataset to {args.data_dir}: {err}") from err
    _emit([("stat", "value")])
    _emit((k, _fmt(v)) for k, v in world.stats.items() if not isinstance(v, dict))
    for k, v in world.stats["relation_counts"].items():
        print(f"relation:{k}\t{v}")
    for name, p in sorted(paths.items()):
        print(f"file:{name}\t{p}")
    return 0


def load_splits(data_dir: Path, names=("train", "dev", "test")) -> dict[str, list[QAExample]]:
    out = {}
    for name in names:
        path = data_dir / f"{name}.jsonl"
        if not path.exists():
            raise CliError(f"missing {path}; run `kareader generate --data-dir {data_dir}` first")
        out[name] = load_dataset(path)
    return out


def _data_fraction(data_dir: Path, fallback: float) -> float:
    stats = data_dir / "stats.json"
    if stats.exists():
        return float(json.loads(stats.read_text())["kb_fraction"])
    return fallback


def run_training(cfg: RunConfig, splits, checkpoint: Path, out_dir: Path, stem: str) -> dict:
    # every split contributes ids so any of them can be evaluated later
    vocab = Vocab.from_examples(ex for split in splits.values() for ex in split)
    model = KAReader(cfg, vocab)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    result = train(model, splits["train"], splits["dev"], checkpoint,
                   log_path=out_dir / f"{stem}.log")
    elapsed = time.time() - start
    hist = out_dir / f"{stem}_history.tsv"
    keys = ["epoch", "loss", "hit@1", "f1"]
    lines = ["\t".join(keys)]
    for row in result.history:
        lines.append("\t".join(_fmt(row.get(k, "")) for k in keys))
    hist.write_text("\n".join(lines) + "\n", encoding="utf-8")
    series = {
        "train loss": result.log.series("train", "loss"),
        "dev Hit@1": result.log.series("dev", "hit@1"),
        "dev F1": result.log.series("dev", "f1"),
    }
    plots.learning_curves(series, out_dir / f"{stem}_curves.png")
    return {"best_epoch": result.best_epoch, **result.best_dev, "seconds": elapsed}


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    cfg.kb_fraction = _data_fraction(args.data_dir, cfg.kb_fraction)
    splits = load_splits(args.data_dir)
    try:
        summary = run_training(cfg, splits, args.checkpoint, args.out_dir, "train")
    except TrainingDiverged as err:
        print(f"error\t{err}; last good checkpoint kept at {args.checkpoint}", file=sys.stderr)
        return 3
    _emit([("metric", "value")])
    _emit((k, _fmt(v)) for k, v in summary.items())
    print(f"checkpoint\t{args.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    if not args.checkpoint.exists():
        raise CliError(f"checkpoint {args.checkpoint} not found")
    model = load_model(args.checkpoint)
    model.config.threshold = args.threshold
    examples = load_splits(args.data_dir, (args.split,))[args.split]
    if not examples:
        raise CliError(f"split {args.split!r} in {args.data_dir} has no questions")
    report = evaluate(model, examples, args.threshold)
    stem = f"eval_{args.split}"
    paths = report.write(args.out_dir, stem)
    plots.eval_histograms(report.records, args.out_dir / f"{stem}.png")
    sys.stdout.write(report.summary_tsv())
    print(f"records\t{paths['records']}")
    return 0


def cmd_ablate(args) -> int:
    base = config_from_args(args)
    base.kb_fraction = _data_fraction(args.data_dir, base.kb_fraction)
    splits = load_splits(args.data_dir)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant in args.variants:
        cfg = RunConfig.from_dict({**base.to_dict(), "ablation": variant})
        res = run_training(cfg, splits, args.out_dir / f"{variant}.ckpt", args.out_dir, variant)
        rows.append({"variant": ABLATION_LABELS[variant], "ablation": variant, **res})
        log.info("ablation %s done: %s", variant, res)
    header = ["variant", "ablation", "hit@1", "f1", "best_epoch"]
    lines = ["\t".join(header)] + ["\t".join(_fmt(r[k]) for k in header) for r in rows]
    table = "\n".join(lines) + "\n"
    (args.out_dir / "ablation.tsv").write_text(table, encoding="utf-8")
    plots.ablation_bars(rows, args.out_dir / "ablation.png")
    sys.stdout.write(table)
    return 0


def tiny_example() -> QAExample:
    """Five entities, two linked documents and a four-token question."""
    triples = [("ann", "born_in", "paris"), ("paris", "city_in", "france"),
               ("ann", "works_for", "acme"), ("bob", "works_for", "acme")]
    docs = [
        Document(["ann", "lives", "in", "paris"], [(0, 1, "ann"), (3, 4, "paris")]),
        Document(["acme", "hired", "bob", "in", "france"], [(0, 1, "acme"), (2, 3, "bob"),
                                                           (4, 5, "france")]),
    ]
    ents = ["acme", "ann", "bob", "france", "paris"]
    return QAExample(id="tiny", question=["where", "was", "ann", "born"], topic_entities=["ann"],
                     answers=["paris"], subgraph_entities=ents, subgraph_triples=triples,
                     documents=docs, candidates=ents)


def run_gradcheck(cfg: RunConfig, tol: float = 1e-4, step: float = 1e-5,
                  corrupt: str | None = None):
    if cfg.dropout != 0.0:
        raise CliError("gradcheck needs a deterministic loss; dropout must be 0 "
                       f"(got {cfg.dropout}), since each call would draw a fresh mask")
    ex = tiny_example()
    model = KAReader(cfg, Vocab.from_examples([ex]))
    params = model.named_params()
    if corrupt is not None and corrupt not in params:
        raise CliError(f"unknown parameter {corrupt!r}; known: {', '.join(params)}")

    def loss():
        out = model.forward(ex, training=True, rng=np.random.default_rng(0))
        return qa_loss(out.scores, out.candidates, ex.answers, cfg.smoothing)

    hooks = {corrupt: lambda g: g * 1.5 + 1e-2} if corrupt else None
    return grad_check(loss, params, step=step, tol=tol, grad_hooks=hooks)


def cmd_gradcheck(args) -> int:
    cfg = config_from_args(args)
    start = time.time()
    report = run_gradcheck(cfg, args.tol, args.step, args.corrupt_grad)
    print("status\tparameter\tshape\tmax_rel_error")
    for line in report.lines():
        print(line)
    n_fail = len(report.failed)
    print(f"summary\t{len(report.checks) - n_fail}/{len(report.checks)} passed"
          f"\ttol={args.tol:g}\t{time.time() - start:.1f}s")
    if n_fail:
        print(f"failed\t{', '.join(report.failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_config_dump(args) -> int:
    print("field\tvalue\tprovenance")
    for line in config_from_args(args).dump_lines():
        print(line)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "config-dump": cmd_config_dump,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (CliError, ValueError, KeyError, OSError) as err:
        print(f"error\t{err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
