"""Command line: build-index, retrieve, train, evaluate, analyze, synth."""

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields

import numpy as np

from . import evaluation, retrieval, trainer as trainer_mod
from . import tensor as T
from .config import Config
from .model import RankReadModel
from .synth import SyntheticSpec, generate
from .text import EmbeddingTable, load_embeddings, synthetic_embeddings, tokenize

log = logging.getLogger(__name__)


def load_dataset(path):
    """JSON-lines of {id, question, answers}."""
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            missing = {"id", "question", "answers"} - set(rec)
            if missing:
                raise ValueError(f"{path}:{lineno}: dataset record missing {sorted(missing)}")
            records.append(rec)
    if not records:
        raise ValueError(f"{path}: empty dataset")
    return records


def _config_from_args(args):
    base = Config.from_file(args.config) if getattr(args, "config", None) else Config()
    overrides = {}
    for field in fields(Config):
        if hasattr(args, field.name):
            overrides[field.name] = getattr(args, field.name)
    return base.with_overrides(overrides)


def _add_config_flags(parser):
    for field in fields(Config):
        flag = "--" + field.name.replace("_", "-")
        typ = {int: int, float: float, str: str}.get(field.type, str)
        parser.add_argument(flag, type=typ, default=None, help=f"override config {field.name}")
    parser.add_argument("--config", default=None, help="config file (key=value lines)")


def _vocabulary(dataset, retrieved_sets):
    vocab = set()
    for rec in dataset:
        vocab.update(tokenize(rec["question"]).tokens)
        for ans in rec["answers"]:
            vocab.update(tokenize(ans).tokens)
    for rs in retrieved_sets:
        for p in rs.passages:
            vocab.update(tokenize(p.text).tokens)
    return vocab


def _make_table(config, dataset, retrieved_sets):
    if config.embeddings_path:
        return load_embeddings(config.embeddings_path, config.embed_dim)
    return synthetic_embeddings(_vocabulary(dataset, retrieved_sets),
                                config.embed_dim, seed=config.seed)


def _table_payload(config, table):
    if config.embeddings_path:
        return {"kind": "file", "path": config.embeddings_path, "dimension": table.dimension}
    return {"kind": "inline", "dimension": table.dimension,
            "vectors": {tok: table.lookup(tok).tolist() for tok in sorted(table._vectors)}}


def _table_from_payload(payload):
    if payload["kind"] == "file":
        return load_embeddings(payload["path"], payload["dimension"])
    vectors = {tok: np.array(vec) for tok, vec in payload["vectors"].items()}
    return EmbeddingTable(payload["dimension"], vectors)


def _load_model(checkpoint_path):
    values, _, extra = T.load_checkpoint(checkpoint_path)
    if not extra or "config" not in extra or "table" not in extra:
        raise ValueError(f"{checkpoint_path}: checkpoint lacks config/table metadata")
    config = Config(**extra["config"]).validate()
    model = RankReadModel(config.model_config(), seed=config.seed)
    model.load_values(values)
    return model, _table_from_payload(extra["table"]), config


# --- subcommands -----------------------------------------------------------------

def cmd_build_index(args):
    docs = retrieval.load_corpus(args.corpus)
    index = retrieval.build_index(docs)
    retrieval.save_index(index, args.out)
    print(f"indexed {index.doc_count} documents -> {args.out}")
    return 0


def cmd_retrieve(args):
    index = retrieval.load_index(args.index)
    dataset = load_dataset(args.dataset)
    train = args.mode == "train"

    def one(rec):
        return retrieval.retrieve(index, rec["id"], rec["question"], rec["answers"],
                                  n=args.n, top_a=args.top_a, top_s=args.top_s, train=train)

    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(one, dataset))
    else:
        results = [one(rec) for rec in dataset]
    sets = []
    empty = 0
    for rs in results:
        if not rs.passages:
            empty += 1
            if train:
                continue
        sets.append(rs)
    retrieval.save_retrieved(sets, args.out)
    msg = f"retrieved passages for {len(sets)} questions -> {args.out}"
    if empty:
        msg += f" ({empty} questions with no passages{' dropped' if train else ''})"
    print(msg)
    return 0


def cmd_train(args):
    config = _config_from_args(args)
    dataset = load_dataset(args.dataset)
    retrieved_sets = retrieval.load_retrieved(args.retrieved)
    examples, dropped = trainer_mod.build_examples(dataset, retrieved_sets)
    if not examples:
        raise ValueError("no trainable questions (none has a positive passage)")
    table = _make_table(config, dataset, retrieved_sets)
    model = RankReadModel(config.model_config(), seed=config.seed)
    trainer = trainer_mod.Trainer(model, table, config, seed=config.seed)
    if args.init:
        trainer_mod.pretrain_init(model, args.init, trainer.optimizer)
    elif config.mode == "r3":
        log.info("no init checkpoint: pretraining %d epochs first", config.pretrain_epochs)
        trainer.train(examples, "sr2", config.pretrain_epochs)
        trainer.optimizer.reset()
    trainer.train(examples, config.mode, config.epochs)
    extra = {"mode": config.mode, "config": asdict(config),
             "table": _table_payload(config, table)}
    T.save_checkpoint(args.out, model.parameters(), optimizer=trainer.optimizer, extra=extra)
    if args.log:
        with open(args.log, "w") as f:
            for record in trainer.log:
                f.write(json.dumps(record) + "\n")
    print(f"trained mode={config.mode} on {len(examples)} questions "
          f"({dropped} dropped, {trainer.skipped} skipped) -> {args.out}")
    return 0


def cmd_evaluate(args):
    model, table, config = _load_model(args.checkpoint)
    dataset = load_dataset(args.dataset)
    retrieved_sets = retrieval.load_retrieved(args.retrieved)
    report = evaluation.evaluate(model, table, dataset, retrieved_sets,
                                 max_span_len=args.max_span_len, threads=args.threads)
    with open(args.out, "w") as f:
        json.dump(report, f, indent=1)
    print(f"evaluated {report['count']} questions: "
          f"F1 {100 * report['f1']:.1f} EM {100 * report['em']:.1f} -> {args.out}")
    return 0


def cmd_analyze(args):
    model, table, config = _load_model(args.checkpoint)
    dataset = load_dataset(args.dataset)
    retrieved_sets = retrieval.load_retrieved(args.retrieved)
    ks = [int(k) for k in args.k.split(",")]
    by_id = {rs.question_id: rs for rs in retrieved_sets}
    ir_flags, model_flags = [], []
    candidate_lists, gold_lists = [], []
    for rec in dataset:
        rs = by_id.get(rec["id"])
        if rs is None or not rs.passages:
            continue
        ir_flags.append([p.positive for p in rs.passages])
        q_tokens = tokenize(rec["question"]).tokens
        ranked = evaluation.rank_passages(model, table, q_tokens, rs.passages)
        model_flags.append([p.positive for p in ranked])
        if args.oracle:
            candidate_lists.append(evaluation.predict_candidates(
                model, table, q_tokens, rs.passages, args.max_span_len))
            gold_lists.append(rec["answers"])
    out = {
        "k": ks,
        "recall": {
            "ir": evaluation.topk_recall(ir_flags, ks),
            "model": evaluation.topk_recall(model_flags, ks),
        },
    }
    if args.oracle:
        out["oracle"] = evaluation.oracle_topk(candidate_lists, gold_lists, ks)
    with open(args.out, "w") as f:
        json.dump(out, f, indent=1)
    for k in ks:
        print(f"top-{k} recall: ir {out['recall']['ir'][k]:.3f} "
              f"model {out['recall']['model'][k]:.3f}")
    return 0


def cmd_synth(args):
    spec = SyntheticSpec(entities=args.entities, relations=args.relations,
                         train_questions=args.train_questions,
                         test_questions=args.test_questions,
                         strong_decoy_rate=args.strong_decoy_rate, seed=args.seed)
    docs, train_records, test_records, vocab = generate(spec)
    retrieval.save_corpus(docs, args.out_corpus)
    for path, records in ((args.out_train, train_records), (args.out_test, test_records)):
        with open(path, "w") as f:
            for rec in records:
                f.write(json.dumps(rec) + "\n")
    print(f"generated {len(docs)} documents, {len(train_records)}/{len(test_records)} "
          f"train/test questions, vocabulary {len(vocab)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rankread",
                                     description="sentence-level retrieval + ranker-reader QA")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="build the inverted index from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="retrieve top-N passages per question")
    p.add_argument("--index", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["train", "test"], default="test")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--top-a", type=int, default=20)
    p.add_argument("--top-s", type=int, default=50)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("train", help="train sr, sr2 or r3 on retrieved passages")
    p.add_argument("--retrieved", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="write per-step JSONL records here")
    p.add_argument("--init", default=None, help="checkpoint to initialize from")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="F1/EM of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--retrieved", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-span-len", type=int, default=15)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="top-k recall and oracle re-ranking ceiling")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--retrieved", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", default="1,3,5")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--max-span-len", type=int, default=15)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate the synthetic corpus and datasets")
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--entities", type=int, default=40)
    p.add_argument("--relations", type=int, default=10)
    p.add_argument("--train-questions", type=int, default=300)
    p.add_argument("--test-questions", type=int, default=100)
    p.add_argument("--strong-decoy-rate", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, T.ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
