"""Command-line pipelines: build-trie, train, retrieve, eval, inspect-trie.

Configuration is a plain key=value text file plus repeatable --set overrides;
every run writes a resolved-config copy next to its outputs. Exit codes:
0 ok, 1 usage/config, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evalkit
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import gold_targets, load_claims, load_wiki_pages, verifiable
from .decoding import DecodeParams, read_predictions, retrieve, write_predictions
from .errors import DataError, GereError
from .model import ModelConfig, Seq2SeqModel
from .tokenizer import EOT, build_vocab, load_vocab, save_vocab
from .training import Trainer, encode_example, make_batches
from .trie import TitleTrie

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("gere")


class UsageError(Exception):
    pass


@dataclass
class TrainParams:
    total_updates: int = 1000
    peak_lr: float = 3e-5
    warmup_frac: float = 0.10
    max_tokens: int = 4096  # dynamic batch budget: claim + target tokens
    clip_norm: float = 1.0
    checkpoint_every: int = 500
    shuffle: bool = True
    max_vocab: int = 50000


@dataclass
class RunConfig:
    wiki: str = ""
    claims: str = ""
    vocab: str = ""
    trie: str = ""
    checkpoint: str = ""
    output_dir: str = "runs/default"
    predictions: str = ""
    seed: int = 0
    d_model: int = 64
    n_heads: int = 4
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    d_ff: int = 256
    max_positions: int = 256
    dropout_rate: float = 0.0
    label_smoothing: float = 0.1
    init_std: float = 0.02
    train: TrainParams = field(default_factory=TrainParams)
    decode: DecodeParams = field(default_factory=DecodeParams)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size, d_model=self.d_model, n_heads=self.n_heads,
            n_layers_enc=self.n_layers_enc, n_layers_dec=self.n_layers_dec,
            d_ff=self.d_ff, max_positions=self.max_positions,
            dropout_rate=self.dropout_rate, label_smoothing=self.label_smoothing,
            seed=self.seed, init_std=self.init_std)

    def to_kv(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("train", "decode"):
                for sub in fields(value):
                    lines.append(f"{f.name}.{sub.name}={getattr(value, sub.name)}")
            else:
                lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

# dataclass field annotations are strings under `from __future__ import annotations`
_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _field_type(f) -> type:
    return _TYPES[f.type] if isinstance(f.type, str) else f.type


def _coerce(raw: str, target_type: type, key: str):
    if target_type is bool:
        value = _BOOL_STRINGS.get(raw.strip().lower())
        if value is None:
            raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")
        return value
    try:
        return target_type(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: expected {target_type.__name__}, "
                         f"got {raw!r}") from None


def load_run_config(path: str | None, overrides: list[str]) -> RunConfig:
    cfg = RunConfig()
    pairs: list[tuple[str, str]] = []
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from exc
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{line_no}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            pairs.append((key.strip(), value.strip()))
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value.strip()))

    top = {f.name: f for f in fields(RunConfig)}
    sub = {"train": {f.name: f for f in fields(TrainParams)},
           "decode": {f.name: f for f in fields(DecodeParams)}}
    for key, raw in pairs:
        if "." in key:
            group, name = key.split(".", 1)
            if group not in sub or name not in sub[group]:
                raise UsageError(f"unknown config key {key!r}")
            target = getattr(cfg, group)
            setattr(target, name, _coerce(raw, _field_type(sub[group][name]), key))
        else:
            if key not in top or key in ("train", "decode"):
                raise UsageError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(raw, _field_type(top[key]), key))
    if not 0.0 < cfg.train.warmup_frac < 1.0:
        raise UsageError(f"train.warmup_frac must be in (0, 1), got {cfg.train.warmup_frac}")
    if cfg.train.total_updates < 1:
        raise UsageError("train.total_updates must be positive")
    if cfg.decode.beam_size < 1:
        raise UsageError("decode.beam_size must be positive")
    return cfg


def _require(path: str, what: str) -> Path:
    if not path:
        raise UsageError(f"missing required path for {what}")
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} path does not exist: {p}")
    return p


def _write_resolved_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_resolved.txt").write_text(cfg.to_kv(), encoding="utf-8")


# -- subcommands --------------------------------------------------------------


def cmd_build_trie(args) -> int:
    corpus = load_wiki_pages(_require(args.wiki, "wiki"))
    claims = load_claims(_require(args.claims, "claims")) if args.claims else []
    vocab = build_vocab(corpus, claims, args.max_vocab)
    save_vocab(vocab, args.vocab_out)
    trie = TitleTrie.build(corpus.titles(), vocab)
    trie.save(args.trie_out, vocab)
    n_bytes = Path(args.trie_out).stat().st_size
    print(f"vocab: {len(vocab)} tokens -> {args.vocab_out}")
    print(f"trie: {trie.node_count} nodes, {trie.title_count} titles, "
          f"{n_bytes} bytes -> {args.trie_out}")
    return EXIT_OK


def _load_pipeline_inputs(cfg: RunConfig, need_claims: bool = True):
    corpus = load_wiki_pages(_require(cfg.wiki, "wiki"))
    vocab = load_vocab(_require(cfg.vocab, "vocab"))
    trie = TitleTrie.load(_require(cfg.trie, "trie"), vocab)
    claims = load_claims(_require(cfg.claims, "claims"), corpus) if need_claims else []
    return corpus, vocab, trie, claims


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set or [])
    corpus, vocab, trie, claims = _load_pipeline_inputs(cfg)
    train_claims = verifiable(claims)
    if not train_claims:
        raise DataError("no verifiable claims to train on")
    out_dir = Path(cfg.output_dir)
    _write_resolved_config(cfg, out_dir)

    if args.resume:
        model, opt_state, step = load_checkpoint(_require(args.resume, "resume checkpoint"),
                                                 expected_vocab_checksum=vocab.checksum())
        if model.config != cfg.model_config(len(vocab)):
            raise DataError("resume checkpoint config does not match the run config")
    else:
        model = Seq2SeqModel(cfg.model_config(len(vocab)), vocab_checksum=vocab.checksum())
        opt_state, step = None, 0

    trainer = Trainer(model, vocab, total_updates=cfg.train.total_updates,
                      peak_lr=cfg.train.peak_lr, warmup_frac=cfg.train.warmup_frac,
                      clip_norm=cfg.train.clip_norm)
    if opt_state is not None:
        trainer.optimizer.load_state_dict(opt_state)
        trainer.step_count = step

    examples = [encode_example(claim, gold_targets(claim, corpus), corpus, vocab,
                               model.config.max_positions)
                for claim in train_claims]
    log.info("training on %d claims (%d params, %d total updates)",
             len(examples), model.num_params, cfg.train.total_updates)

    log_path = out_dir / "train_log.jsonl"
    stats = None
    # Fresh runs truncate the log so reruns are byte-identical; resumes append.
    with open(log_path, "a" if args.resume else "w", encoding="utf-8") as log_fh:
        epoch = 0
        consumed = 0
        while trainer.step_count < cfg.train.total_updates:
            if cfg.train.shuffle:
                order = trainer.shuffle_order(len(examples), epoch)
            else:
                order = np.arange(len(examples))
            batches = make_batches([examples[i] for i in order], cfg.train.max_tokens)
            for batch in batches:
                if consumed < trainer.step_count:
                    consumed += 1  # replayed batch from before a resume
                    continue
                stats = trainer.train_step_encoded(batch)
                consumed += 1
                log_fh.write(json.dumps(stats.as_dict()) + "\n")
                if cfg.train.checkpoint_every > 0 and \
                        stats.step % cfg.train.checkpoint_every == 0:
                    save_checkpoint(out_dir / f"checkpoint_step{stats.step}.gereckpt",
                                    model, trainer.optimizer, stats.step)
                if trainer.step_count >= cfg.train.total_updates:
                    break
            epoch += 1
    final_path = cfg.checkpoint or str(out_dir / "checkpoint_final.gereckpt")
    save_checkpoint(final_path, model, trainer.optimizer, trainer.step_count)
    print(f"trained {trainer.step_count} updates; final loss_total="
          f"{stats.loss_total:.4f} -> {final_path}")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    cfg = load_run_config(args.config, args.set or [])
    corpus, vocab, trie, claims = _load_pipeline_inputs(cfg)
    model, _, _ = load_checkpoint(_require(cfg.checkpoint, "checkpoint"),
                                  expected_vocab_checksum=vocab.checksum())
    out_dir = Path(cfg.output_dir)
    _write_resolved_config(cfg, out_dir)
    results = [retrieve(model, vocab, claim, trie, corpus, cfg.decode)
               for claim in sorted(claims, key=lambda c: c.claim_id)]
    pred_path = cfg.predictions or str(out_dir / "predictions.jsonl")
    write_predictions(results, pred_path)

    n = len(results)
    n_titles = [len(r.titles) for r in results]
    n_evidence = [len(r.evidence) for r in results]
    print(f"retrieved {n} claims -> {pred_path}")
    if n:
        print(f"avg titles: {sum(n_titles) / n:.2f}  avg evidence: {sum(n_evidence) / n:.2f}")
        print(f"claims with <=5 titles: {100.0 * sum(t <= 5 for t in n_titles) / n:.2f}%  "
              f"claims with <=5 evidence: {100.0 * sum(e <= 5 for e in n_evidence) / n:.2f}%")
    return EXIT_OK


def cmd_eval(args) -> int:
    golds = load_claims(_require(args.gold, "gold claims"))
    predictions = read_predictions(_require(args.pred, "predictions"))
    gold_ids = {c.claim_id for c in golds}
    pred_ids = {rec["claim_id"] for rec in predictions}
    missing = sorted(gold_ids - pred_ids)
    extra = sorted(pred_ids - gold_ids)
    if missing:
        log.warning("claims missing from predictions (scored as empty): %s", missing)
    if extra:
        log.warning("predictions for unknown claim ids (ignored): %s", extra)
    report = evalkit.evaluate(predictions, golds, max_evidence=args.max_evidence,
                              oracle_labels=args.oracle_labels)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    out = args.out or f"{args.pred}.metrics.json"
    Path(out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_inspect_trie(args) -> int:
    vocab = load_vocab(_require(args.vocab, "vocab"))
    trie = TitleTrie.load(_require(args.trie, "trie"), vocab)
    print(f"trie: {trie.node_count} nodes, {trie.title_count} titles")
    if args.prefix is None:
        return EXIT_OK
    prefix_ids = vocab.encode(args.prefix)
    allowed = trie.allowed_next(prefix_ids)
    print(f"prefix {args.prefix!r} -> token ids {prefix_ids}")
    if not allowed:
        print("off-trie prefix: no continuations")
        return EXIT_OK
    shown = []
    for token_id in sorted(allowed):
        shown.append("<eot>" if token_id == EOT else vocab.tokens[token_id])
    print(f"allowed continuations ({len(allowed)}): {' '.join(shown)}")
    if EOT in allowed:
        print(f"complete title of doc_id: {trie.resolve(prefix_ids + [EOT])!r}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gere", description=__doc__)
    parser.add_argument("--log-level", default=os.environ.get("GERE_LOG_LEVEL", "WARNING"),
                        help="logging level (also via GERE_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-trie", help="build vocab and title trie from wiki pages")
    p.add_argument("--wiki", required=True)
    p.add_argument("--claims", default="", help="optional claims to include in the vocab")
    p.add_argument("--vocab-out", required=True)
    p.add_argument("--trie-out", required=True)
    p.add_argument("--max-vocab", type=int, default=50000)
    p.set_defaults(func=cmd_build_trie)

    for name, func in (("train", cmd_train), ("retrieve", cmd_retrieve)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")
        if name == "train":
            p.add_argument("--resume", default=None, help="checkpoint to continue from")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score a prediction file against gold claims")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--max-evidence", type=int, default=5)
    p.add_argument("--oracle-labels", action="store_true",
                   help="copy gold labels onto predictions (pipeline testing)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-trie", help="query allowed continuations of a prefix")
    p.add_argument("--trie", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--prefix", default=None)
    p.set_defaults(func=cmd_inspect_trie)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gere: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"gere: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GereError as exc:
        print(f"gere: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error")
        print(f"gere: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
