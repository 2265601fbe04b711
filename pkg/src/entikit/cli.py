"""Command-line pipeline: match, refine, build, decode, eval, grad-check, stats.

Every command is deterministic given its inputs, config, and fixtures;
rerunning a stage reproduces byte-identical outputs. Exit codes: 0 success,
1 usage, 2 data error, 3 provider failure after retries.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from entikit.checkpoint import Checkpoint
from entikit.config import PipelineConfig
from entikit.dataset import (
    ExpandConfig,
    expand_records,
    leak_filter,
    split_seen_unseen,
    write_shards,
)
from entikit.decoding import DecodeMode, HashedScorer, beam_search
from entikit.embedding import HashedTrigramEmbedder, embed_texts
from entikit.evaluation import (
    UnresolvedEntityError,
    evaluate,
    load_label_mapping,
    read_gold,
    read_predictions,
    write_predictions,
    Prediction,
)
from entikit.kb import load_vocabulary_file
from entikit.matching import build_candidate_assignments, read_assignments, read_corpus, write_assignments
from entikit.objective import grad_check
from entikit.providers import DirectoryProvider, HttpProvider, ProviderCallError
from entikit.refine import (
    RecordRejectedError,
    RefineConfig,
    correction_rate,
    record_from_dict,
    record_to_dict,
    refine_record,
)
from entikit.tokenizer import ByteTokenizer
from entikit.trie import TokenTrie

logger = logging.getLogger("entikit")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract here is 1
    def error(self, message):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None, help="pipeline config JSON")
    sub.add_argument("--out", type=Path, required=True, help="output directory")
    sub.add_argument("--resume", action="store_true", help="resume from a checkpoint")


def _load_config(args) -> PipelineConfig:
    if args.config is None:
        return PipelineConfig()
    return PipelineConfig.load(args.config)


def _make_provider(config: PipelineConfig):
    if config.provider_type == "mock":
        if not config.provider_fixtures:
            raise UsageError("mock provider requires provider_fixtures in the config")
        return DirectoryProvider(config.provider_fixtures)
    return HttpProvider()


# ---------------------------------------------------------------------------
# subcommands


def cmd_match(args) -> int:
    config = _load_config(args)
    vocab = load_vocabulary_file(args.vocab)
    corpus = read_corpus(args.corpus)
    args.out.mkdir(parents=True, exist_ok=True)
    out_path = args.out / "assignments.jsonl"
    if not corpus:
        out_path.write_text("", encoding="utf-8")
        print(f"wrote 0 assignments to {out_path}")
        return EXIT_OK
    embedder = HashedTrigramEmbedder(config.embedding_dim)
    assignments = build_candidate_assignments(vocab, corpus, embedder, k=config.match_k)
    write_assignments(assignments, vocab, out_path)
    print(f"wrote {len(assignments)} assignments to {out_path}")
    return EXIT_OK


def cmd_refine(args) -> int:
    config = _load_config(args)
    vocab = load_vocabulary_file(args.vocab)
    assignments = read_assignments(args.assignments, vocab)
    proxies: dict[str, str] = {}
    if args.proxies:
        with Path(args.proxies).open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    proxies[str(obj["image_id"])] = str(obj["proxy"])

    args.out.mkdir(parents=True, exist_ok=True)
    records_path = args.out / "records.jsonl"
    rejects_path = args.out / "rejects.jsonl"
    ckpt = Checkpoint.open(args.out / "refine.ckpt", "refine", config.config_hash, resume=args.resume)
    if not args.resume:
        records_path.write_text("", encoding="utf-8")
        rejects_path.write_text("", encoding="utf-8")

    provider = _make_provider(config)
    refine_config = RefineConfig(retries=config.retries, caption_proxies=proxies)
    pending = [a for a in assignments if a.image_id not in ckpt]

    n_records = n_rejects = 0
    aborted: ProviderCallError | None = None
    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        futures = [pool.submit(refine_record, provider, a, vocab, refine_config) for a in pending]
        for assignment, future in zip(pending, futures):
            try:
                record = future.result()
            except RecordRejectedError as exc:
                with rejects_path.open("a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "image_id": exc.image_id,
                                "stage": exc.stage,
                                "reason": exc.reason,
                                "raw_response": exc.raw_response,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
                n_rejects += 1
            except ProviderCallError as exc:
                aborted = exc
                pool.shutdown(wait=False, cancel_futures=True)
                break
            else:
                with records_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record_to_dict(record, vocab), ensure_ascii=False) + "\n")
                n_records += 1
            ckpt.mark(assignment.image_id)
    if aborted is not None:
        print(f"provider failure after retries: {aborted}", file=sys.stderr)
        return EXIT_PROVIDER

    records = _read_records_file(records_path)
    stats = {
        "assignments": len(assignments),
        "refined": len(records),
        "rejected": sum(1 for _ in rejects_path.open()) if rejects_path.exists() else 0,
        "validated": sum(1 for r in records if r.outcome.verdict == "validated"),
        "corrected": sum(1 for r in records if r.outcome.verdict == "corrected"),
        "correction_rate": correction_rate(records) if records else None,
    }
    (args.out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    print(f"refined {n_records} records, rejected {n_rejects} (this run)")
    return EXIT_OK


def _read_records_file(path: Path, vocab=None):
    records = []
    if not path.exists():
        return records
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(record_from_dict(json.loads(line), vocab))
    return records


def cmd_build(args) -> int:
    config = _load_config(args)
    records = _read_records_file(Path(args.records))
    args.out.mkdir(parents=True, exist_ok=True)

    removed = []
    if args.eval_embeddings:
        eval_vecs = np.load(args.eval_embeddings)
        embedder = HashedTrigramEmbedder(config.embedding_dim)
        record_vecs = embed_texts(embedder, [r.original_caption for r in records])
        records, removed = leak_filter(records, record_vecs, eval_vecs, config.leak_threshold)
    with (args.out / "leak_removed.jsonl").open("w", encoding="utf-8") as fh:
        for record in removed:
            fh.write(json.dumps({"image_id": record.image_id, "reason": "eval_similarity"}) + "\n")

    expand_config = ExpandConfig(entity_prompt=config.entity_prompt, rationale_prefix=config.rationale_prefix)
    examples = expand_records(records, expand_config)

    if args.seen_entities:
        seen_names = {
            line.strip()
            for line in Path(args.seen_entities).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
        seen, unseen = split_seen_unseen(examples, seen_names)
        write_shards(seen, config.shard_size, args.out / "seen", config_hash=config.config_hash)
        write_shards(unseen, config.shard_size, args.out / "unseen", config_hash=config.config_hash)
        print(f"wrote {len(seen)} seen / {len(unseen)} unseen examples")
    else:
        manifest = write_shards(examples, config.shard_size, args.out, config_hash=config.config_hash)
        print(f"wrote {len(examples)} examples across {len(manifest.shards)} shards")
    return EXIT_OK


_MODES = {
    "free": DecodeMode.UNCONSTRAINED,
    "filter": DecodeMode.LAST_STEP_FILTER,
    "full": DecodeMode.FULL_TRIE,
}


def cmd_decode(args) -> int:
    config = _load_config(args)
    beam = args.beam if args.beam is not None else config.beam_size
    max_len = args.max_len if args.max_len is not None else config.max_len
    if beam < 1:
        raise UsageError("--beam must be >= 1")
    if max_len < 1:
        raise UsageError("--max-len must be >= 1")
    vocab = load_vocabulary_file(args.vocab)
    tokenizer = ByteTokenizer()
    mode = _MODES[args.mode]
    trie = TokenTrie.build(vocab, tokenizer) if mode is DecodeMode.FULL_TRIE else None

    with Path(args.scorer).open("r", encoding="utf-8") as fh:
        scorer_spec = json.load(fh)
    if scorer_spec.get("type") != "hashed":
        raise ValueError(f"unknown scorer type {scorer_spec.get('type')!r}")
    scorer = HashedScorer(vocab_size=tokenizer.vocab_size, seed=int(scorer_spec.get("seed", 0)))

    args.out.mkdir(parents=True, exist_ok=True)
    predictions = []
    with Path(args.queries).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            results = beam_search(
                scorer,
                obj.get("context", ""),
                mode=mode,
                beam_size=beam,
                max_len=max_len,
                trie=trie,
                vocab=vocab,
                tokenizer=tokenizer,
            )
            predictions.append(
                Prediction(query_id=str(obj["query_id"]), ranked=tuple(r.text for r in results))
            )
    out_path = args.out / "predictions.jsonl"
    write_predictions(predictions, out_path)
    print(f"wrote {len(predictions)} predictions to {out_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    mapping = load_label_mapping(args.mapping) if args.mapping else None
    if mapping is not None and args.vocab:
        vocab = load_vocabulary_file(args.vocab)
        for target in mapping.values():
            if vocab.lookup(target) is None:
                raise UnresolvedEntityError(target)
    golds = read_gold(args.gold, mapping)
    preds = read_predictions(args.preds)
    report = evaluate(preds, golds, allow_empty_split=args.allow_empty_split)
    args.out.mkdir(parents=True, exist_ok=True)
    report_path = args.out / "report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    print(report.format_table())
    print(f"report written to {report_path}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    worst = 0.0
    for seed in range(args.instances):
        err = grad_check(k=args.k, vocab=args.classes, epsilon=args.epsilon, seed=seed)
        worst = max(worst, err)
    print(f"max relative error over {args.instances} instances: {worst:.3e}")
    return EXIT_OK


def cmd_stats(args) -> int:
    records = _read_records_file(Path(args.records))
    rejects = 0
    if args.rejects and Path(args.rejects).exists():
        rejects = sum(1 for line in Path(args.rejects).open() if line.strip())
    stats = {
        "records": len(records),
        "rejected": rejects,
        "validated": sum(1 for r in records if r.outcome.verdict == "validated"),
        "corrected": sum(1 for r in records if r.outcome.verdict == "corrected"),
        "correction_rate": correction_rate(records) if records else None,
        "qa_pairs": sum(len(r.qa_pairs) for r in records),
    }
    print(json.dumps(stats, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="entikit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", parents=[], help="assign candidate entities to captions")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("refine", help="verify/correct candidates and generate QA pairs")
    p.add_argument("--assignments", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--proxies", type=Path, default=None, help="caption proxies JSONL (image_id, proxy)")
    _common_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("build", help="expand records into sharded training examples")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--eval-embeddings", type=Path, default=None, help=".npy eval vectors for the leak filter")
    p.add_argument("--seen-entities", type=Path, default=None, help="entity names forming the seen split")
    _common_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("decode", help="beam-search entity predictions for queries")
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--scorer", type=Path, required=True, help="scorer fixture JSON")
    p.add_argument("--mode", choices=sorted(_MODES), default="full")
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    _common_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score predictions against gold entities")
    p.add_argument("--preds", type=Path, required=True)
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("--mapping", type=Path, default=None, help="class-label to entity mapping TSV")
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--allow-empty-split", action="store_true")
    _common_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="compare analytic and finite-difference gradients")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("stats", help="summarize refinement outputs")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--rejects", type=Path, default=None)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderCallError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
