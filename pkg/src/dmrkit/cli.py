"""Command-line entry points.

Exit codes: 0 success, 1 domain errors (invalid graphs, failed checks,
missing data), 2 usage errors. ``--json`` switches error reporting to a
machine-readable line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .corpus import export_seq2seq, load_corpus, nlu_filter, stats
from .dialogue_graph import DGraphConfig, build_dialogue_graph, export_dialogue_graph, export_to_text, gold_resolutions
from .graph import read_graph
from .linearizer import delinearize, line_to_tokens
from .metrics import MatchConfig, corpus_eval
from .ontology import load_ontology
from .validation import validate
from .wordvec import WordVectors


class CliError(Exception):
    """Domain-level failure; maps to exit code 1."""


def _read_blocks(path) -> list[str]:
    blocks: list[str] = []
    current: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                current.append(line.rstrip("\n"))
            elif current:
                blocks.append("\n".join(current))
                current = []
    if current:
        blocks.append("\n".join(current))
    return blocks


def _emit(args, payload: dict) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def cmd_validate(args) -> int:
    ontology = load_ontology(args.ontology)
    failures = 0
    for i, block in enumerate(_read_blocks(args.file)):
        try:
            g = read_graph(block, turn=args.turn, ontology=ontology)
        except Exception as err:
            failures += 1
            print(f"graph {i}: parse error: {err}", file=sys.stderr)
            continue
        violations = validate(ontology, g)
        for v in violations:
            failures += 1
            print(f"graph {i}: {v.code} at {v.locus}: {v.message}", file=sys.stderr)
    if failures:
        raise CliError(f"{failures} violation(s)")
    print("ok")
    return 0


def _load_predictions(path, fmt: str, ontology):
    preds = []
    for i, block in enumerate(_read_blocks(path)):
        if fmt == "tokens":
            preds.append(delinearize(line_to_tokens(" ".join(block.split())), turn=0,
                                     ontology=ontology))
        else:
            try:
                preds.append(read_graph(block, turn=0, ontology=ontology))
            except Exception:
                # Unparseable prediction text counts as an invalid graph.
                preds.append(delinearize(["("], turn=0, ontology=ontology))
    return preds


def cmd_score(args) -> int:
    ontology = load_ontology(args.ontology)
    golds = [read_graph(b, turn=0, ontology=ontology) for b in _read_blocks(args.gold)]
    preds = _load_predictions(args.pred, args.pred_format, ontology)
    if len(golds) != len(preds):
        raise CliError(f"{len(golds)} gold blocks vs {len(preds)} predictions")
    utterances: list[str | None] = [None] * len(golds)
    if args.utterances:
        with open(args.utterances, encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
        if len(lines) < len(golds):
            raise CliError("fewer utterance lines than graph pairs")
        utterances = lines[: len(golds)]
    cfg = MatchConfig(restarts=args.restarts, seed=args.seed)
    report = corpus_eval(list(zip(golds, preds, utterances)), ontology, cfg)
    out = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    print(out)
    return 0


def cmd_stats(args) -> int:
    ontology = load_ontology(args.ontology) if args.ontology else None
    corpus = load_corpus(args.corpus, ontology)
    if corpus.errors and args.strict:
        for err in corpus.errors:
            print(json.dumps(err), file=sys.stderr)
        raise CliError(f"{len(corpus.errors)} malformed record(s)")
    corpus = nlu_filter(corpus)
    report = stats(corpus)
    if args.json:
        print(json.dumps(report.to_json(), indent=2, sort_keys=True))
        return 0
    rows = [
        ("Dialogue", "dialogues"),
        ("Utterance", "utterances"),
        ("Utterance/Dialogue", "utterances_per_dialogue"),
        ("Customer Utterance", "customer_utterances"),
        ("Utterance for NLU", "nlu_utterances"),
        ("Utterance Length", "mean_utterance_length"),
        ("Reference", "references"),
        ("Negation", "negations"),
        ("Conjunction", "conjunctions"),
        ("NLU DMR Depth", "mean_nlu_dmr_depth"),
        ("NLU DMR Nodes", "mean_nlu_dmr_nodes"),
    ]
    splits = [s for s in ("train", "dev", "test") if s in report.per_split]
    splits += [s for s in report.per_split if s not in splits]
    print(f"{'':22s}" + "".join(f"{s:>12s}" for s in splits))
    table = report.to_json()
    for label, key in rows:
        cells = []
        for s in splits:
            value = table[s][key]
            cells.append(
                f"{value:>12.2f}" if isinstance(value, float) else f"{value:>12d}"
            )
        print(f"{label:22s}" + "".join(cells))
    return 0


def cmd_export_seq2seq(args) -> int:
    ontology = load_ontology(args.ontology) if args.ontology else None
    corpus = nlu_filter(load_corpus(args.corpus, ontology))
    pairs = export_seq2seq(corpus, args.context_size, split=args.split)
    with open(args.out, "w", encoding="utf-8") as fh:
        for source, target in pairs:
            fh.write(f"{source}\t{target}\n")
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def cmd_export_dgraph(args) -> int:
    ontology = load_ontology(args.ontology) if args.ontology else None
    corpus = load_corpus(args.corpus, ontology)
    dialogue = next((d for d in corpus.dialogues() if d.id == args.dialogue), None)
    if dialogue is None:
        raise CliError(f"unknown dialogue {args.dialogue!r}")
    dmrs = dialogue.customer_dmrs()
    if args.turn is not None:
        dmrs = [g for g in dmrs if g.turn <= args.turn]
    if not dmrs:
        raise CliError("dialogue has no DMRs in range")
    cfg = DGraphConfig(
        k_max=args.k_max,
        use_turn_nodes=not args.no_turn_nodes,
        link_resolved_refs=not args.no_resolved_refs,
    )
    resolved = None if args.no_resolved_refs else gold_resolutions(dmrs)
    G = build_dialogue_graph(dmrs, resolved, cfg)
    from .dialogue_graph import extract_queries

    record = export_dialogue_graph(G, extract_queries(dmrs))
    text = export_to_text(record)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote dialogue graph to {args.out}")
    else:
        print(text, end="")
    return 0


def _samples_for_split(corpus, split: str):
    from .coref import DialogueSample

    samples = []
    for d in corpus.dialogues(split):
        dmrs = d.customer_dmrs()
        if dmrs:
            samples.append(DialogueSample.from_dmrs(dmrs, dialogue_id=d.id))
    return samples


def cmd_train_coref(args) -> int:
    from .coref import CorefConfig, save_model, train

    ontology = load_ontology(args.ontology) if args.ontology else None
    corpus = load_corpus(args.corpus, ontology)
    train_samples = _samples_for_split(corpus, args.train_split)
    dev_samples = _samples_for_split(corpus, args.dev_split) or None
    wv = WordVectors.load(args.vectors) if args.vectors else None
    cfg = CorefConfig(
        model=args.model,
        layers=args.layers,
        hidden=args.hidden,
        dropout=args.dropout,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        threshold=args.threshold,
        k_max=args.k_max,
        use_turn_nodes=not args.no_turn_nodes,
        link_resolved_refs=not args.no_resolved_refs,
    )
    model, history = train(train_samples, cfg, wv, dev=dev_samples)
    if history:
        last = history[-1]
        best_dev = max((h.get("dev_accuracy", 0.0) for h in history), default=0.0)
        print(f"final loss {last['loss']:.4f}  best dev accuracy {best_dev:.4f}  "
              f"threshold {model.threshold:.2f}")
    save_model(model, args.out)
    print(f"saved {args.model} model to {args.out}")
    return 0


def cmd_coref_eval(args) -> int:
    from .coref import RuleModel, evaluate, load_model

    ontology = load_ontology(args.ontology) if args.ontology else None
    corpus = load_corpus(args.corpus, ontology)
    samples = _samples_for_split(corpus, args.split)
    if not samples:
        raise CliError(f"no dialogues in split {args.split!r}")
    if args.model == "rule":
        model = RuleModel()
    else:
        model = load_model(args.model)
    wv = WordVectors.load(args.vectors) if args.vectors else None
    result = evaluate(model, samples, wv=wv, beta=args.threshold)
    payload = {
        "split": args.split,
        "accuracy": round(result["accuracy"] * 100, 2),
        "n_scored": result["n_scored"],
        "n_queries": result["n_queries"],
        "single_candidate_share": round(result["single_candidate_share"] * 100, 2),
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    cfg = ServiceConfig(
        ontology_path=args.ontology,
        store_path=args.store,
        corpus_path=args.corpus,
        cors_origins=args.cors or [],
        host=args.host,
        port=args.port,
    )
    serve(cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmrkit", description="Dialogue Meaning Representation toolkit"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check DMR files against an ontology")
    p.add_argument("file")
    p.add_argument("--ontology", required=True)
    p.add_argument("--turn", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="Smatch-based evaluation of predictions")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--utterances")
    p.add_argument("--ontology", required=True)
    p.add_argument("--pred-format", choices=("dmr", "tokens"), default="dmr")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stats", help="dataset statistics table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology")
    p.add_argument("--strict", action="store_true",
                   help="fail on malformed corpus records")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-seq2seq", help="write (input, target) training pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology")
    p.add_argument("--context-size", type=int, default=1)
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_export_seq2seq)

    p = sub.add_parser("export-dgraph", help="export a dialogue graph as JSON")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology")
    p.add_argument("--dialogue", required=True)
    p.add_argument("--turn", type=int)
    p.add_argument("--k-max", type=int, default=2)
    p.add_argument("--no-turn-nodes", action="store_true")
    p.add_argument("--no-resolved-refs", action="store_true")
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_export_dgraph)

    p = sub.add_parser("train-coref", help="train a coreference resolver")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology")
    p.add_argument("--model", choices=("rule", "mlp", "gnn"), required=True)
    p.add_argument("--vectors", help="word-vector text file")
    p.add_argument("--out", required=True)
    p.add_argument("--train-split", default="train")
    p.add_argument("--dev-split", default="dev")
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float)
    p.add_argument("--k-max", type=int, default=2)
    p.add_argument("--no-turn-nodes", action="store_true")
    p.add_argument("--no-resolved-refs", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_train_coref)

    p = sub.add_parser("coref-eval", help="evaluate a coreference resolver")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology")
    p.add_argument("--model", required=True,
                   help="checkpoint path, or the literal 'rule'")
    p.add_argument("--vectors")
    p.add_argument("--split", default="dev")
    p.add_argument("--threshold", type=float)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_coref_eval)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--ontology", required=True)
    p.add_argument("--corpus")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8470)
    p.add_argument("--cors", nargs="*")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        if getattr(args, "json", False):
            print(json.dumps({"error": str(err)}), file=sys.stderr)
        else:
            print(f"error: {err}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, OSError) as err:
        if getattr(args, "json", False):
            print(json.dumps({"error": str(err)}), file=sys.stderr)
        else:
            print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
