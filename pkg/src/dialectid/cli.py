"""Command-line entry point: ``dialectid {stats,train,classify,evaluate,synth,dump,bench}``.

Exit codes: 0 success, 2 usage or configuration error, 3 data/model
incompatibility, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from . import __version__
from ._binio import FormatError
from ._seeding import DEFAULT_SEED
from .corpus import CorpusError, compute_stats, load_corpus, prepare_dataset
from .pipeline import FAMILIES, IncompatibleModel, ModelSpec, fit, load_model, sentence_from_text

EXIT_OK, EXIT_USAGE, EXIT_INCOMPATIBLE, EXIT_RUNTIME = 0, 2, 3, 4
OUT_ENV = "DIALECTID_OUT"

log = logging.getLogger("dialectid")


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, ".")) / name


def _gamma(value: str):
    if value == "scale":
        return value
    try:
        g = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("gamma must be 'scale' or a positive decimal") from None
    if g <= 0:
        raise argparse.ArgumentTypeError("gamma must be positive")
    return g


def _add_data_flags(p):
    p.add_argument("--manifest", required=True, help="TSV manifest (id, label, path, source)")
    p.add_argument("--min-variety-tokens", type=int, default=10000,
                   help="drop varieties with at most this many tokens (default: 10000)")
    p.add_argument("--min-sentence-len", type=int, default=5,
                   help="drop sentences with fewer tokens (default: 5)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"master random seed (default: {DEFAULT_SEED})")


def _add_model_flags(p):
    g = p.add_argument_group("embeddings")
    g.add_argument("--dim", type=int, help="embedding dimension (default: 100)")
    g.add_argument("--window", type=int, help="skip-gram context radius (default: 5)")
    g.add_argument("--negatives", type=int, help="negative samples per pair (default: 5)")
    g.add_argument("--buckets", type=int, help="hashed subword buckets, power of two (default: 2^20)")
    g.add_argument("--emb-epochs", type=int, help="embedding training epochs (default: 5)")
    g.add_argument("--emb-lr", type=float, help="embedding learning rate (default: 0.05)")
    g.add_argument("--max-len", type=int, default=60, help="tokens kept per sentence (default: 60)")
    g = p.add_argument_group("neural networks")
    g.add_argument("--epochs", type=int, help="maximum training epochs (default: 25)")
    g.add_argument("--lr", type=float, help="Adam learning rate (default: 0.001)")
    g.add_argument("--dropout", type=float, help="dropout rate (default: 0.5)")
    g.add_argument("--patience", type=int, help="early-stopping patience in epochs (default: 3)")
    g.add_argument("--batch-size", type=int, help="mini-batch size (default: 64)")
    g.add_argument("--hidden-size", type=int, help="LSTM hidden units (default: 100)")
    g = p.add_argument_group("svm / textcat")
    g.add_argument("--C", dest="svm_c", type=float, help="SVM regularisation (default: 1.0)")
    g.add_argument("--gamma", type=_gamma, help="RBF gamma: 'scale' or a decimal (default: scale)")
    g.add_argument("--svm-features", choices=("mean", "tfidf"), default="mean",
                   help="SVM input: mean embeddings or character n-gram TF-IDF (default: mean)")
    g.add_argument("--profile-size", type=int, help="TextCat n-grams per profile (default: 2000)")


def _spec(family: str, args) -> ModelSpec:
    emb = {k: v for k, v in {
        "dim": args.dim, "window": args.window, "negatives": args.negatives,
        "bucket_count": args.buckets, "epochs": args.emb_epochs, "lr": args.emb_lr,
    }.items() if v is not None}
    nn = {k: v for k, v in {
        "epochs": args.epochs, "learning_rate": args.lr, "dropout": args.dropout,
        "patience": args.patience, "batch_size": args.batch_size, "hidden_size": args.hidden_size,
    }.items() if v is not None}
    sv = {k: v for k, v in {"C": args.svm_c, "gamma": args.gamma}.items() if v is not None}
    tc = {"profile_size": args.profile_size} if args.profile_size else {}
    return ModelSpec(family, embedding=emb, svm=sv, neural=nn, textcat=tc,
                     svm_features=args.svm_features, max_len=args.max_len)


def _dataset(args):
    corpus = load_corpus(args.manifest)
    return prepare_dataset(corpus, args.min_variety_tokens, args.min_sentence_len)


# -- subcommands ----------------------------------------------------------------

def cmd_stats(args) -> int:
    stats = compute_stats(load_corpus(args.manifest))
    out = Path(args.out) if args.out else _default_out("stats")
    out.mkdir(parents=True, exist_ok=True)
    stats.to_csv(out / "corpus_stats.csv")
    print(out / "corpus_stats.csv")
    if args.json:
        stats.to_json(out / "corpus_stats.json")
        print(out / "corpus_stats.json")
    return EXIT_OK


def cmd_train(args) -> int:
    spec = _spec(args.arch, args)
    data = _dataset(args)
    model = fit(spec, data, seed=args.seed)
    out = Path(args.out) if args.out else _default_out(f"{args.arch}.model")
    if spec.family == "textcat":
        model.save(out)
        meta_path = out / "model.json"
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        meta.update(spec=spec.as_dict(), config_hash=spec.hash(), seed=args.seed)
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written = [out]
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        written = model.save(out)
        if spec.family in ("cnn", "lstm", "clstm"):
            model.model.write_log(out.with_name(out.name + ".log.csv"))
    for p in written:
        print(p)
    return EXIT_OK


def cmd_classify(args) -> int:
    try:
        model = load_model(args.model)
    except (FormatError, FileNotFoundError) as exc:
        raise CliError(str(exc), EXIT_INCOMPATIBLE) from None
    if args.input in (None, "-"):
        lines = sys.stdin.read().splitlines()
    else:
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    sentences = {i: sentence_from_text(l) for i, l in enumerate(lines, 1) if l.strip()}
    keys = sorted(sentences)
    labels = model.labels
    scores = model.scores([sentences[k] for k in keys]) if keys else None
    row_of = {k: r for r, k in enumerate(keys)}
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write("line\tlabel\ttop1\tp1\ttop2\tp2\ttop3\tp3\n")
        for i in range(1, len(lines) + 1):
            if i not in row_of:
                out.write(f"{i}\tSKIP\t\t\t\t\t\t\n")
                continue
            s = scores[row_of[i]]
            order = sorted(range(len(labels)), key=lambda j: (-s[j], j))[:3]
            cells = []
            for j in order:
                cells += [labels[j], f"{s[j]:.6f}"]
            cells += [""] * (6 - len(cells))
            out.write("\t".join([str(i), labels[order[0]]] + cells) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import emit_merged, emit_report, run_experiment

    families = []
    for a in args.arch:
        if a not in families:
            families.append(a)
    specs = [_spec(f, args) for f in families]
    data = _dataset(args)
    out = Path(args.out) if args.out else _default_out("evaluation")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out.parent))
    try:
        reports = []
        for spec in specs:
            rep = run_experiment(spec, data, runs=args.runs, seed=args.seed, jobs=args.jobs,
                                 by_document=args.by_document)
            emit_report(rep, tmp)
            reports.append(rep)
            print(f"{rep.model}: macro P={rep.macro['precision']:.4f} "
                  f"R={rep.macro['recall']:.4f} F={rep.macro['f1']:.4f}", file=sys.stderr)
        if len(reports) > 1:
            emit_merged(reports, tmp / "merged.csv")
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(tmp.iterdir()):
            shutil.move(str(f), out / f.name)
            print(out / f.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthgen import SynthConfig, SynthError, generate

    try:
        cfg = SynthConfig(k=args.k, sentences_per_class=args.sentences, delta=args.delta,
                          min_tokens=args.min_tokens, max_tokens=args.max_tokens,
                          alphabet=args.alphabet, seed=args.seed,
                          sentences_per_doc=args.sentences_per_doc)
    except SynthError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out) if args.out else _default_out("synth")
    _, manifest = generate(cfg, out)
    print(manifest)
    return EXIT_OK


def cmd_dump(args) -> int:
    from .embeddings import EmbeddingModel, nearest_neighbors

    try:
        emb = EmbeddingModel.load(args.model)
    except (ValueError, OSError) as exc:
        raise CliError(str(exc), EXIT_INCOMPATIBLE) from None
    tokens = args.tokens or emb.vocab[: args.top]
    for tok in tokens:
        nn = nearest_neighbors(emb, tok, args.k)
        print(tok + "\t" + " ".join(f"{t}:{s:.4f}" for t, s in nn))
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    run_benchmark(sentences=args.sentences, epochs=args.epochs, dim=args.dim, seed=args.seed)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dialectid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics per variety")
    p.add_argument("manifest", help="TSV manifest (id, label, path, source)")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/stats)")
    p.add_argument("--json", action="store_true", help="also write JSON with histograms")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one model family on a corpus")
    p.add_argument("arch", choices=FAMILIES, help="model family")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", help="model path (a directory for textcat)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify one sentence per input line")
    p.add_argument("model", help="trained model path")
    p.add_argument("input", nargs="?", help="input text file, '-' or omitted for stdin")
    p.add_argument("--out", help="write TSV here instead of stdout")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="stratified 80/20 resampling evaluation")
    p.add_argument("arch", nargs="+", choices=FAMILIES, help="one or more model families")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--runs", type=int, default=5, help="number of resamples (default: 5)")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs (default: 1)")
    p.add_argument("--by-document", action="store_true",
                   help="keep all sentences of a document on one side of the split")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/evaluation)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic multi-variety corpus")
    p.add_argument("--k", type=int, default=6, help="number of classes (default: 6)")
    p.add_argument("--sentences", type=int, default=500, help="sentences per class (default: 500)")
    p.add_argument("--delta", type=float, default=1.0, help="divergence in [0, 1] (default: 1.0)")
    p.add_argument("--min-tokens", type=int, default=5, help="min tokens per sentence (default: 5)")
    p.add_argument("--max-tokens", type=int, default=12, help="max tokens per sentence (default: 12)")
    p.add_argument("--sentences-per-doc", type=int, default=50, help="sentences per document (default: 50)")
    p.add_argument("--alphabet", default="aeiouklmnpstwxyzch", help="symbols to sample from")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default: {DEFAULT_SEED})")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/synth)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump", help="nearest neighbours from an embedding model file")
    p.add_argument("model", help="embedding model (.emb)")
    p.add_argument("tokens", nargs="*", help="query tokens (default: most frequent vocabulary)")
    p.add_argument("-k", type=int, default=10, help="neighbours per token (default: 10)")
    p.add_argument("--top", type=int, default=20, help="vocabulary queries when no tokens given")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("bench", help="compare compiled and pure-Python skip-gram kernels")
    p.add_argument("--sentences", type=int, default=400, help="toy sentences to train on (default: 400)")
    p.add_argument("--epochs", type=int, default=1, help="training epochs (default: 1)")
    p.add_argument("--dim", type=int, default=50, help="embedding dimension (default: 50)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default: {DEFAULT_SEED})")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"dialectid: error: {exc}", file=sys.stderr)
        return exc.code
    except (CorpusError, FileNotFoundError) as exc:
        print(f"dialectid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IncompatibleModel, FormatError) as exc:
        print(f"dialectid: incompatible: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except ValueError as exc:
        print(f"dialectid: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("dialectid: interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        log.debug("failure", exc_info=True)
        print(f"dialectid: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
