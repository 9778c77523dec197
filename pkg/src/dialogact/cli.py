"""Command-line entry point: ``dialogact <command> ...``.

On failure the last line on stderr is ``error: <category>: <message>`` and
the exit code is 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from dialogact.config import ENCODER_VARIANTS, dump_config, load_config, without_context
from dialogact.errors import ContractError, DialogActError, FormatError

log = logging.getLogger("dialogact")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: usage: {message}\n")
        sys.exit(2)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _external(model, path):
    from dialogact.corpus import load_external_vectors

    vectors, dim = load_external_vectors(path)
    if dim != model.config.external_dim:
        raise FormatError(f"external vectors have dimension {dim}, checkpoint expects {model.config.external_dim}")
    model.set_external_vectors(vectors)


def cmd_train(args) -> None:
    from dialogact.checkpoint import save_checkpoint
    from dialogact.corpus import load_corpus, load_external_vectors
    from dialogact.metrics import evaluate
    from dialogact.model import build_model
    from dialogact.training import fit

    overrides = {"seed": args.seed, "encoder": args.encoder, "max_epochs": args.max_epochs}
    mcfg, tcfg = load_config(args.config, **overrides)
    if args.no_context:
        mcfg = replace(mcfg, encoder=without_context(mcfg.encoder))
    splits, labels = load_corpus(args.corpus, args.format, lowercase=tcfg.lowercase,
                                 unknown_label_policy=tcfg.unknown_label_policy)
    if not splits.train:
        raise ContractError(f"{args.corpus}: no training conversations")
    vectors = None
    if args.external_vectors:
        vectors, dim = load_external_vectors(args.external_vectors)
        mcfg = replace(mcfg, external_dim=dim)
    model = build_model(splits.train, labels, mcfg, min_count=tcfg.min_count, embeddings=args.embeddings)
    if vectors is not None:
        model.set_external_vectors(vectors)
    result = fit(model, splits.train, splits.validation, tcfg, log_path=args.log)
    save_checkpoint(model, args.out, extra={"train": dump_config(mcfg, tcfg), "best_epoch": result.best_epoch})
    summary = {"checkpoint": str(args.out), "epochs": len(result.history), "best_epoch": result.best_epoch,
               "best_val_accuracy": result.best_accuracy}
    if splits.test:
        summary["test_accuracy"] = evaluate(model, splits.test).accuracy
    _emit(summary)


def cmd_eval(args) -> None:
    from dialogact.checkpoint import load_checkpoint
    from dialogact.corpus import load_corpus
    from dialogact.metrics import evaluate

    model = load_checkpoint(args.checkpoint)
    if args.external_vectors:
        _external(model, args.external_vectors)
    splits, _ = load_corpus(args.corpus, args.format, labels=model.labels, unknown_label_policy="drop")
    convs = splits.split(args.split)
    if not convs:
        raise ContractError(f"split {args.split!r} is empty")
    _emit(evaluate(model, convs, decode=args.decode).to_dict())


def cmd_decode(args) -> None:
    from dialogact.checkpoint import load_checkpoint
    from dialogact.corpus import conversation_record, read_conversations
    from dialogact.tensor import no_tape

    model = load_checkpoint(args.checkpoint)
    if args.external_vectors:
        _external(model, args.external_vectors)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        with no_tape():
            for conv, split in read_conversations(args.input):
                rec = conversation_record(conv, split, predicted=model.predict_labels(conv, args.decode))
                out.write(json.dumps(rec) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_synth(args) -> None:
    from dialogact.corpus import generate_synthetic_corpus, overlapping_profiles, save_corpus

    try:
        spec = json.loads(Path(args.transitions).read_text())
        labels = spec["labels"]
        matrix = spec["matrix"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{args.transitions}: expected labels and matrix ({exc})") from None
    profiles = spec.get("profiles") or overlapping_profiles(labels, **spec.get("profile_options", {}))
    splits = generate_synthetic_corpus(
        int(spec.get("n_conversations", 250)), float(spec.get("mean_length", 20)), matrix, profiles,
        seed=args.seed, labels=labels, mean_tokens=float(spec.get("mean_tokens", 6)), initial=spec.get("initial"))
    save_corpus(splits, args.out)
    _emit({"out": str(args.out), **splits.stats()})


def cmd_gradcheck(args) -> None:
    from dialogact.gradcheck import check_ops, check_full_model

    failed = False
    for name, rep in check_ops(range(args.seeds), tol=1e-6).items():
        _emit({"op": name, "max_rel_error": rep.max_error, "passed": rep.passed})
        failed |= not rep.passed
    if args.full:
        rep = check_full_model(tol=1e-4)
        _emit({"op": "end-to-end", "max_rel_error": rep.max_error, "passed": rep.passed})
        failed |= not rep.passed
    if failed:
        raise ContractError("gradient check failed")


def cmd_analyze(args) -> None:
    from dialogact.checkpoint import load_checkpoint
    from dialogact.corpus import load_corpus
    from dialogact.metrics import analyze

    model = load_checkpoint(args.checkpoint)
    if args.external_vectors:
        _external(model, args.external_vectors)
    splits, labels = load_corpus(args.corpus, args.format, labels=model.labels, unknown_label_policy="drop")
    if labels != model.labels:
        raise ContractError("corpus labels do not match the checkpoint")
    _emit(analyze(model, splits.split(args.split)).to_dict())


def cmd_ablate(args) -> None:
    from dialogact.ablation import ablate, format_table
    from dialogact.corpus import load_corpus

    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in ENCODER_VARIANTS:
            raise ContractError(f"unknown encoder variant {v!r}")
    mcfg, tcfg = load_config(args.config, max_epochs=args.max_epochs)
    splits, labels = load_corpus(args.corpus, args.format, lowercase=tcfg.lowercase,
                                 unknown_label_policy=tcfg.unknown_label_policy)
    rows = ablate(splits, labels, variants, list(range(args.seeds)), mcfg, tcfg, embeddings=args.embeddings)
    sys.stderr.write(format_table(rows) + "\n")
    for r in rows:
        _emit({"variant": r.variant, "mean_accuracy": r.mean, "accuracies": r.accuracies, "error": r.error})


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dialogact", description="Hierarchical dialogue-act tagger")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--corpus", required=True)
    t.add_argument("--format", default="jsonl")
    t.add_argument("--embeddings")
    t.add_argument("--external-vectors")
    t.add_argument("--encoder", choices=ENCODER_VARIANTS)
    t.add_argument("--no-context", action="store_true")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--log", help="per-epoch JSON lines metrics log")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy and confusion matrix on a split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--format", default="jsonl")
    e.add_argument("--split", default="test")
    e.add_argument("--decode", choices=("crf", "argmax"), default="crf")
    e.add_argument("--external-vectors")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("decode", help="add a predicted label to every utterance")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--output")
    d.add_argument("--decode", choices=("crf", "argmax"), default="crf")
    d.add_argument("--external-vectors")
    d.set_defaults(func=cmd_decode)

    s = sub.add_parser("synth", help="generate a Markov-chain corpus")
    s.add_argument("--transitions", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("gradcheck", help="finite-difference check of every op")
    g.add_argument("--full", action="store_true", help="also check the end-to-end loss")
    g.add_argument("--seeds", type=int, default=10)
    g.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("analyze", help="previous-label entropy vs per-class accuracy")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--corpus", required=True)
    a.add_argument("--format", default="jsonl")
    a.add_argument("--split", default="test")
    a.add_argument("--external-vectors")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("ablate", help="compare encoder variants")
    b.add_argument("--corpus", required=True)
    b.add_argument("--format", default="jsonl")
    b.add_argument("--variants", required=True, help="comma-separated encoder variants")
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--config")
    b.add_argument("--embeddings")
    b.add_argument("--max-epochs", type=int)
    b.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DialogActError as exc:
        sys.stderr.write(f"error: {exc.category}: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: io: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
