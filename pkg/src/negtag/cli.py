"""``negtag`` command line: generate, train, evaluate, predict, experiment, negex.

Every option can also come from a flat ``key = value`` file given with
``--config``. Keys are option names with dashes or underscores. A flag on
the command line beats the file, and the file beats the built-in default.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .data import Dataset, Sentence, corpus_stats, format_conll, load_conll, load_embeddings, build_vocab
from .encoder import ModelConfig, Variant
from .errors import ConfigError, NegtagError, UsageError
from .io import atomic_write

log = logging.getLogger("negtag")

CHECKPOINT_NAME = "model.ckpt"
TRAIN_LOG_NAME = "train_log.csv"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message} (see {self.prog} --help)")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _split(text: str) -> tuple[int, int, int]:
    parts = str(text).split("/")
    try:
        vals = tuple(int(p) for p in parts)
    except ValueError:
        vals = ()
    if len(vals) != 3 or min(vals) < 0 or sum(vals) == 0:
        raise argparse.ArgumentTypeError(f"expected train/dev/test percentages like 80/10/10, got {text!r}")
    return vals


def _variants(text: str) -> tuple[str, ...]:
    try:
        return tuple(Variant.parse(v).value for v in str(text).replace(" ", "").split(",") if v)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# per-command option table: prog -> dest -> default, converter, action
_OPTIONS: dict[str, dict] = {}


def _opt(parser, dest: str, *flags, default=None, **kw):
    """Add an option whose default is resolved after the config file is read."""
    options = _OPTIONS.setdefault(parser.prog, {})
    options[dest] = {"default": default, "type": kw.get("type"), "action": kw.get("action")}
    if kw.get("action") is argparse.BooleanOptionalAction:
        kw.setdefault("help", "")
        kw["help"] += f" (default: {'on' if default else 'off'})"
    elif default is not None and "help" in kw:
        kw["help"] += f" (default: {default})"
    parser.add_argument(*flags, dest=dest, default=argparse.SUPPRESS, **kw)


def _model_options(p, with_variant: bool = True):
    d = ModelConfig()
    if with_variant:
        _opt(p, "variant", "--variant", default=d.variant.value, type=lambda s: Variant.parse(s).value,
             help="decoder: independent-ner, independent-negation, two, shared, conditional")
    _opt(p, "word_emb_dim", "--word-dim", default=d.word_emb_dim, type=int, help="word embedding size")
    _opt(p, "char_emb_dim", "--char-dim", default=d.char_emb_dim, type=int, help="character embedding size")
    _opt(p, "tag_emb_dim", "--tag-dim", default=d.tag_emb_dim, type=int, help="tag embedding size")
    _opt(p, "char_hidden", "--char-hidden", default=d.char_hidden, type=int, help="character LSTM size per direction")
    _opt(p, "word_hidden", "--word-hidden", default=d.word_hidden, type=int, help="word LSTM size per direction")
    _opt(p, "tagger_hidden", "--tagger-hidden", default=d.tagger_hidden, type=int, help="tagger LSTM size")
    _opt(p, "dropout_rate", "--dropout", default=d.dropout_rate, type=float, help="dropout rate")
    for site in ("char", "input", "encoder", "tagger"):
        _opt(p, f"dropout_{site}", f"--dropout-{site}", default=True, action=argparse.BooleanOptionalAction,
             help=f"dropout at the {site} site")
    _opt(p, "heads_on_encoder", "--heads-on-encoder", default=False, action=argparse.BooleanOptionalAction,
         help="feed the encoder output to the heads as well")
    _opt(p, "stop_gradient", "--stop-gradient", default=False, action=argparse.BooleanOptionalAction,
         help="block gradients through the entity distribution fed to the negation head")
    _opt(p, "dtype", "--dtype", default=d.dtype, choices=["float32", "float64"], help="parameter precision")


def _train_options(p):
    from .training import TrainConfig

    d = TrainConfig()
    _opt(p, "epochs_max", "--epochs", default=d.epochs_max, type=int, help="maximum epochs")
    _opt(p, "patience", "--patience", default=d.patience, type=int, help="early stopping patience")
    _opt(p, "batch_size", "--batch-size", default=d.batch_size, type=int, help="sentences per update")
    _opt(p, "lr", "--lr", default=d.lr, type=float, help="Adam learning rate")
    _opt(p, "seed", "--seed", default=d.seed, type=int, help="random seed")
    _opt(p, "task_loss_weight", "--task-loss-weight", default=d.task_loss_weight, type=float,
         help="weight on the negation loss")
    _opt(p, "clip_norm", "--clip-norm", default=d.clip_norm, type=float, help="global gradient norm limit")
    _opt(p, "min_word_freq", "--min-word-freq", default=d.min_word_freq, type=int, help="vocabulary cutoff")
    _opt(p, "select_metric", "--select-metric", default=d.select_metric, choices=["macro", "entity", "negation"],
         help="dev score used for early stopping")
    _opt(p, "embeddings", "--embeddings", type=Path, help="pretrained word vectors (GloVe text format)")


def build_parser() -> argparse.ArgumentParser:
    _OPTIONS.clear()
    parser = _Parser(prog="negtag", description="Joint clinical entity and negation tagging.")
    parser.add_argument("--version", action="version", version=f"negtag {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, default=None, help="key = value file with option defaults")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return p

    p = command("generate", "write a seeded synthetic train/dev/test corpus")
    _opt(p, "seed", "--seed", default=7, type=int, help="corpus seed")
    _opt(p, "n", "--n", default=2000, type=int, help="total sentences")
    _opt(p, "split", "--split", default=(80, 10, 10), type=_split, help="train/dev/test percentages")
    _opt(p, "out", "--out", type=Path, help="output directory (required)")

    p = command("train", "train a tagger and write its checkpoint and log")
    _opt(p, "train", "--train", type=Path, help="training corpus (required)")
    _opt(p, "dev", "--dev", type=Path, help="dev corpus for early stopping (required)")
    _opt(p, "out", "--out", type=Path, help="output directory (required)")
    _model_options(p)
    _train_options(p)

    p = command("evaluate", "score a checkpoint or a predicted corpus against gold tags")
    _opt(p, "test", "--test", type=Path, help="gold corpus (required)")
    _opt(p, "checkpoint", "--checkpoint", type=Path, help="model checkpoint")
    _opt(p, "predictions", "--predictions", type=Path, help="predicted corpus to score instead of a checkpoint")
    _opt(p, "variant", "--variant", type=lambda s: Variant.parse(s).value, help="expected checkpoint variant")
    _opt(p, "name", "--name", default="model", help="row label in the report")
    _opt(p, "out", "--out", type=Path, help="output directory (required)")

    p = command("predict", "tag a corpus with a checkpoint")
    _opt(p, "checkpoint", "--checkpoint", type=Path, help="model checkpoint (required)")
    _opt(p, "input", "--input", type=Path, help="corpus to tag (required)")
    _opt(p, "variant", "--variant", type=lambda s: Variant.parse(s).value, help="expected checkpoint variant")
    _opt(p, "out", "--out", type=Path, help="output corpus file (required)")

    p = command("experiment", "run the low-resource learning curve")
    _opt(p, "train", "--train", type=Path, help="training corpus (required)")
    _opt(p, "dev", "--dev", type=Path, help="dev corpus (required)")
    _opt(p, "test", "--test", type=Path, help="test corpus (required)")
    _opt(p, "variants", "--variants", default=("two", "conditional"), type=_variants,
         help="comma-separated variants")
    _opt(p, "fractions", "--fractions", default=(0.05, 0.1, 0.25, 0.5, 1.0), type=_floats,
         help="comma-separated training fractions")
    _opt(p, "seeds", "--seeds", default=(1, 2, 3, 4, 5), type=_ints, help="comma-separated seeds")
    _opt(p, "workers", "--workers", default=1, type=int, help="worker processes")
    _opt(p, "min_updates", "--min-updates", default=2000, type=int,
         help="stretch the epoch cap of small fractions to allow this many optimiser steps")
    _opt(p, "out", "--out", type=Path, help="curve CSV path (required)")
    _opt(p, "plot_data", "--emit-plot-data", type=Path, help="also write variant,task,x,y,y_std CSV here")
    _model_options(p, with_variant=False)
    _train_options(p)

    p = command("negex", "run the NegEx baseline over gold PROBLEM spans")
    _opt(p, "test", "--test", type=Path, help="gold corpus (required)")
    _opt(p, "lexicon", "--lexicon", type=Path, help="cue lexicon file (default: bundled)")
    _opt(p, "window", "--window", default=6, type=int, help="scope width in tokens")
    _opt(p, "termination", "--termination", default=True, action=argparse.BooleanOptionalAction,
         help="end scopes at termination terms")
    _opt(p, "out", "--out", type=Path, help="output directory (required)")
    return parser


# -- option resolution -----------------------------------------------------------------------


def read_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


# config-file spellings that differ from the dest name
_KEY_ALIASES = {
    "word_dim": "word_emb_dim",
    "char_dim": "char_emb_dim",
    "tag_dim": "tag_emb_dim",
    "dropout": "dropout_rate",
    "epochs": "epochs_max",
    "emit_plot_data": "plot_data",
}


def resolve(prog: str, ns: argparse.Namespace) -> dict:
    """Merge command-line flags over the config file over defaults."""
    options = _OPTIONS.get(prog, {})
    given = {k: v for k, v in vars(ns).items() if k in options}
    from_file: dict = {}
    if ns.config is not None:
        for key, raw in read_config_file(ns.config).items():
            dest = _KEY_ALIASES.get(key, key)
            if dest not in options:
                raise ConfigError(f"{ns.config}: unknown key {key!r} for {prog}")
            conv = options[dest]["type"]
            if options[dest]["action"] is argparse.BooleanOptionalAction:
                conv = _bool
            try:
                from_file[dest] = conv(raw) if conv is not None else raw
            except (argparse.ArgumentTypeError, ValueError, ConfigError) as exc:
                raise ConfigError(f"{ns.config}: bad value for {key!r}: {exc}") from None
    out = {dest: s["default"] for dest, s in options.items()}
    out.update(from_file)
    out.update(given)
    return out


def _require(opts: dict, *names: str) -> None:
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"missing required option(s): {flags}")


def _check_input(path: Path, what: str) -> Path:
    if not path.is_file():
        raise UsageError(f"{what} {path} does not exist or is not a file")
    if not os.access(path, os.R_OK):
        raise UsageError(f"{what} {path} is not readable")
    return path


def _check_out_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def _check_out_file(path: Path) -> Path:
    _check_out_dir(path.parent if str(path.parent) else Path("."))
    if path.is_dir():
        raise UsageError(f"output path {path} is a directory")
    return path


def _model_config(opts: dict) -> ModelConfig:
    names = {f.name for f in fields(ModelConfig)}
    return ModelConfig(**{k: v for k, v in opts.items() if k in names})


def _train_config(opts: dict):
    from .training import TrainConfig

    names = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in opts.items() if k in names})


def _check_variant(model, expected: str | None) -> None:
    if expected is not None and model.variant.value != expected:
        raise UsageError(f"checkpoint holds a {model.variant.value} model but --variant is {expected}")


# -- subcommands ------------------------------------------------------------------------------


def stats_text(datasets: dict[str, Dataset]) -> str:
    lines = ["split  sentences  tokens  PROBLEM  TEST  TREATMENT  negated  negated_frac"]
    for name, ds in datasets.items():
        st = corpus_stats(ds)
        e = st.entity_spans
        lines.append(
            f"{name:<6} {st.sentences:>9} {st.tokens:>7} {e['PROBLEM']:>8} {e['TEST']:>5} {e['TREATMENT']:>10}"
            f" {st.negated_spans:>8} {st.negated_problem_fraction:>13.3f}"
        )
    return "\n".join(lines) + "\n"


def cmd_generate(opts: dict, out=sys.stdout) -> int:
    from .synth import generate_splits

    _require(opts, "out")
    if opts["n"] < 1:
        raise UsageError(f"--n must be >= 1, got {opts['n']}")
    out_dir = _check_out_dir(opts["out"])
    splits = generate_splits(opts["seed"], opts["n"], opts["split"])
    for name, ds in splits.items():
        atomic_write(out_dir / f"{name}.conll", format_conll(ds) if len(ds) else "")
    out.write(stats_text(splits))
    return 0


def cmd_train(opts: dict, out=sys.stdout) -> int:
    from .checkpoint import save_checkpoint
    from .training import train

    _require(opts, "train", "dev", "out")
    _check_input(opts["train"], "training corpus")
    _check_input(opts["dev"], "dev corpus")
    if opts.get("embeddings") is not None:
        _check_input(opts["embeddings"], "embeddings file")
    out_dir = _check_out_dir(opts["out"])
    mcfg = _model_config(opts)
    tcfg = _train_config(opts)
    if tcfg.select_metric != "macro" and tcfg.select_metric not in mcfg.variant.tasks:
        raise ConfigError(f"--select-metric {tcfg.select_metric} is not produced by variant {mcfg.variant.value}")
    train_set = load_conll(opts["train"], "train")
    dev_set = load_conll(opts["dev"], "dev")
    vocab = build_vocab(train_set, tcfg.min_word_freq)
    pretrained = None
    if opts.get("embeddings") is not None:
        pretrained = load_embeddings(opts["embeddings"], vocab, mcfg.word_emb_dim)
        log.info("loaded %d pretrained vectors", len(pretrained))
    model, history = train(train_set, dev_set, mcfg, tcfg, vocab=vocab, pretrained=pretrained)
    save_checkpoint(model, out_dir / CHECKPOINT_NAME)
    atomic_write(out_dir / TRAIN_LOG_NAME, history.to_csv())
    out.write(f"epochs run: {len(history.epochs)}, best epoch: {history.best_epoch}\n")
    out.write(f"wrote {out_dir / CHECKPOINT_NAME} and {out_dir / TRAIN_LOG_NAME}\n")
    return 0


def cmd_evaluate(opts: dict, out=sys.stdout) -> int:
    from .checkpoint import load_checkpoint
    from .evaluation import report_csv, report_table, score
    from .training import evaluate_model

    _require(opts, "test", "out")
    if (opts.get("checkpoint") is None) == (opts.get("predictions") is None):
        raise UsageError("give exactly one of --checkpoint or --predictions")
    _check_input(opts["test"], "gold corpus")
    source = opts.get("checkpoint") or opts.get("predictions")
    _check_input(source, "checkpoint" if opts.get("checkpoint") else "predictions file")
    out_dir = _check_out_dir(opts["out"])
    gold = load_conll(opts["test"], "test")
    if opts.get("checkpoint") is not None:
        model = load_checkpoint(opts["checkpoint"])
        _check_variant(model, opts.get("variant"))
        report = evaluate_model(model, gold)
    else:
        pred = load_conll(opts["predictions"], "test")
        if len(pred) != len(gold) or any(p.tokens != g.tokens for p, g in zip(pred, gold)):
            raise UsageError("predictions do not align with the gold corpus token for token")
        report = score(gold, {
            "entity": [s.entity_tags for s in pred],
            "negation": [s.negation_tags for s in pred],
        })
    reports = {opts["name"]: report}
    atomic_write(out_dir / "eval.csv", report_csv(reports))
    table = report_table(reports)
    atomic_write(out_dir / "eval.txt", table)
    out.write(table)
    return 0


def cmd_predict(opts: dict, out=sys.stdout) -> int:
    from .checkpoint import load_checkpoint
    from .decoders import greedy_decode

    _require(opts, "checkpoint", "input", "out")
    _check_input(opts["checkpoint"], "checkpoint")
    _check_input(opts["input"], "input corpus")
    target = _check_out_file(opts["out"])
    model = load_checkpoint(opts["checkpoint"])
    _check_variant(model, opts.get("variant"))
    corpus = load_conll(opts["input"])
    preds = greedy_decode(corpus.sentences, model)
    tagged = []
    for i, s in enumerate(corpus):
        blank = ["O"] * len(s)
        tagged.append(Sentence(
            list(s.tokens),
            preds["entity"][i] if "entity" in preds else blank,
            preds["negation"][i] if "negation" in preds else list(blank),
        ))
    atomic_write(target, format_conll(tagged))
    out.write(f"tagged {len(tagged)} sentences into {target}\n")
    return 0


def cmd_experiment(opts: dict, out=sys.stdout) -> int:
    from .training import curve_csv, low_resource_experiment, plot_data_csv

    _require(opts, "train", "dev", "test", "out")
    for key in ("train", "dev", "test"):
        _check_input(opts[key], f"{key} corpus")
    target = _check_out_file(opts["out"])
    if opts.get("plot_data") is not None:
        _check_out_file(opts["plot_data"])
    fractions = tuple(opts["fractions"])
    if not fractions or list(fractions) != sorted(fractions):
        raise UsageError("--fractions must be non-empty and sorted ascending")
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise UsageError("--fractions must lie in (0, 1]")
    if not opts["seeds"] or not opts["variants"]:
        raise UsageError("--seeds and --variants must be non-empty")
    if opts["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    if opts["min_updates"] < 0:
        raise UsageError("--min-updates must be >= 0")
    mcfg = _model_config(opts)
    tcfg = _train_config(opts)
    for v in opts["variants"]:
        if tcfg.select_metric != "macro" and tcfg.select_metric not in Variant.parse(v).tasks:
            raise ConfigError(f"--select-metric {tcfg.select_metric} is not produced by variant {v}")
    splits = {k: load_conll(opts[k], k) for k in ("train", "dev", "test")}
    rows = low_resource_experiment(
        splits["train"], splits["dev"], splits["test"], fractions, opts["seeds"], opts["variants"],
        mcfg, tcfg, workers=opts["workers"], min_updates=opts["min_updates"],
    )
    atomic_write(target, curve_csv(rows))
    if opts.get("plot_data") is not None:
        atomic_write(opts["plot_data"], plot_data_csv(rows))
    out.write(f"wrote {len(rows)} cell results to {target}\n")
    return 0


def cmd_negex(opts: dict, out=sys.stdout) -> int:
    from .evaluation import report_csv, report_table, score, tags_to_spans
    from .negex import ScopeConfig, load_lexicon, negex_predict

    _require(opts, "test", "out")
    _check_input(opts["test"], "gold corpus")
    if opts.get("lexicon") is not None:
        _check_input(opts["lexicon"], "lexicon")
    out_dir = _check_out_dir(opts["out"])
    scope_cfg = ScopeConfig(window=opts["window"], use_termination=opts["termination"])
    lexicon = load_lexicon(opts.get("lexicon"))
    gold = load_conll(opts["test"], "test")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sentence", "start", "end", "text", "negated"))
    predicted = []
    for i, s in enumerate(gold):
        spans = [sp for sp in tags_to_spans(s.entity_tags) if sp.label == "PROBLEM"]
        flags = negex_predict(s, [(sp.start, sp.end) for sp in spans], lexicon, scope_cfg)
        tags = ["O"] * len(s)
        for sp, neg in zip(spans, flags):
            w.writerow((i, sp.start, sp.end, " ".join(s.tokens[sp.start : sp.end]), int(neg)))
            if neg:
                tags[sp.start] = "B-NEG"
                tags[sp.start + 1 : sp.end] = ["I-NEG"] * (sp.end - sp.start - 1)
        predicted.append(tags)
    reports = {"negex": score(gold, {"negation": predicted})}
    atomic_write(out_dir / "negex_flags.csv", buf.getvalue())
    atomic_write(out_dir / "negex_eval.csv", report_csv(reports))
    table = report_table(reports)
    atomic_write(out_dir / "negex_eval.txt", table)
    out.write(table)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "experiment": cmd_experiment,
    "negex": cmd_negex,
}


def main(argv=None) -> int:
    try:
        parser = build_parser()
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help(sys.stderr)
            return 1
        logging.basicConfig(
            level=logging.INFO if ns.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        opts = resolve(f"negtag {ns.command}", ns)
        return COMMANDS[ns.command](opts, out=sys.stdout)
    except NegtagError as exc:
        print(f"negtag: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("negtag: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
