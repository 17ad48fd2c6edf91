"""Command-line interface, one subcommand per pipeline stage.

Exit codes: 0 success, 1 domain error (error name printed to stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from pathlib import Path

from . import __version__
from .checkpoint import FORMAT_VERSION, load_checkpoint
from .errors import IrtransError
from .irnorm import NormalizationConfig, normalize


def _norm_config(args) -> NormalizationConfig:
    return NormalizationConfig(
        demangle=not args.no_demangle,
        demangler_command=args.demangler_cmd,
    )


def cmd_normalize(args) -> int:
    text = Path(args.infile).read_text() if args.infile else sys.stdin.read()
    out = normalize(text, _norm_config(args))
    if args.outfile:
        Path(args.outfile).write_text(out)
    else:
        sys.stdout.write(out)
    return 0


def cmd_build_corpus(args) -> int:
    from .frontends import (FrontendConfig, LanguageFrontend, build_corpus,
                            default_frontends)

    if args.frontend_cmd:
        suffix = {"cpp": ".cpp", "c": ".c", "rust": ".rs"}.get(args.lang, ".txt")
        cfg = FrontendConfig(
            languages={args.lang: LanguageFrontend(command=args.frontend_cmd,
                                                   source_suffix=suffix)},
            timeout=args.timeout, jobs=args.jobs)
    else:
        cfg = default_frontends(jobs=args.jobs, timeout=args.timeout)
    inputs = [(f, args.lang) for f in sorted(glob.glob(f"{args.src}/**/*",
                                                       recursive=True))
              if Path(f).is_file()]
    summary = build_corpus(inputs, [args.lang], cfg, _norm_config(args), args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_train_vocab(args) -> int:
    from .frontends import load_shard
    from .tokenizer import train_vocab

    texts = []
    for shard in sorted(glob.glob(f"{args.corpus}/mono.*.jsonl")):
        for rec in load_shard(shard):
            texts.append(rec.source)
    for shard in sorted(glob.glob(f"{args.corpus}/para.*.jsonl")):
        for rec in load_shard(shard):
            if rec.normalized_ir:
                texts.append(rec.normalized_ir)
    vocab = train_vocab(texts, args.size)
    vocab.save(args.out)
    print(f"vocab size {vocab.size} ({len(vocab.merges)} merges) -> {args.out}")
    return 0


def _load_train_config(path: str):
    from .model import ModelConfig
    from .objectives import NoiseConfig
    from .trainer import TrainConfig

    raw = json.loads(Path(path).read_text())
    noise = NoiseConfig(**raw.pop("noise", {}))
    model_raw = raw.pop("model")
    train = TrainConfig(noise=noise, **raw)
    model = ModelConfig(**model_raw)
    return train, model


def cmd_train(args) -> int:
    from .frontends import load_shard
    from .tokenizer import Vocab
    from .trainer import train

    train_cfg, model_cfg = _load_train_config(args.config)
    if args.seed is not None:
        train_cfg.seed = args.seed
    vocab = Vocab.load(args.vocab)
    mono, para = {}, {}
    for shard in sorted(glob.glob(f"{args.corpus}/mono.*.jsonl")):
        mono[Path(shard).name.split(".")[1]] = load_shard(shard)
    for shard in sorted(glob.glob(f"{args.corpus}/para.*.jsonl")):
        para[Path(shard).name.split(".")[1]] = load_shard(shard)
    ckpt, log = train(mono, para, train_cfg, model_cfg, vocab, args.out,
                      resume_from=args.resume)
    last = [e for e in log.entries if "loss" in e]
    print(f"trained {train_cfg.steps} steps -> {ckpt}"
          + (f" (last loss {last[-1]['loss']:.4f})" if last else ""))
    return 0


def _translator(args):
    from .translator import Translator

    return Translator.from_files(args.model, args.vocab)


def cmd_translate(args) -> int:
    tr = _translator(args)
    text = sys.stdin.read()
    sys.stdout.write(tr.translate(text, args.src, args.tgt, beam_size=args.beam))
    return 0


def cmd_decompile(args) -> int:
    tr = _translator(args)
    text = sys.stdin.read()
    sys.stdout.write(tr.decompile(text, args.tgt, decoder_mode=args.decoder,
                                  beam_size=args.beam))
    return 0


def cmd_pivot(args) -> int:
    from .frontends import default_frontends

    tr = _translator(args)
    text = sys.stdin.read()
    out = tr.pivot_translate(text, args.src, args.tgt,
                             default_frontends(timeout=args.timeout),
                             beam_size=args.beam)
    sys.stdout.write(out)
    return 0


def cmd_evaluate(args) -> int:
    from .evalharness import (default_toolchains, evaluate, load_eval_set,
                              validate_references)
    from .translator import Translator

    tr = _translator(args)
    eval_set = load_eval_set(args.set)
    toolchain = default_toolchains(jobs=args.jobs)
    if not args.skip_validation:
        bad = validate_references(eval_set, toolchain)
        if bad:
            print(f"references failing their own tests: {bad}", file=sys.stderr)
            return 1
    directions = [tuple(d.split("-")) for d in args.directions.split(",")]

    def translate_fn(text, src, tgt):
        return tr.translate_candidates(text, src, tgt, args.beam, args.k)

    result = evaluate(eval_set, directions, toolchain, translate_fn,
                      k=args.k, vocab=tr.vocab)
    print(result.table())
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(result.directions, indent=2, sort_keys=True))
    return 0


def cmd_embed_report(args) -> int:
    from .evalharness import embedding_report

    tr = _translator(args)
    for token, sim in embedding_report(args.token, tr.state, tr.vocab, args.k):
        print(f"{sim:.4f}  {token}")
    return 0


def _add_model_args(p) -> None:
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--vocab", required=True, help="vocab file path")
    p.add_argument("--beam", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="irtrans",
        description="IR-augmented unsupervised code translation toolkit")
    ap.add_argument("--version", action="version",
                    version=f"irtrans {__version__} (checkpoint format v{FORMAT_VERSION})")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("normalize", help="normalize textual LLVM IR")
    p.add_argument("--in", dest="infile")
    p.add_argument("--out", dest="outfile")
    p.add_argument("--no-demangle", action="store_true")
    p.add_argument("--demangler-cmd")
    p.set_defaults(fn=cmd_normalize)

    p = sub.add_parser("build-corpus", help="extract, compile and shard functions")
    p.add_argument("--lang", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frontend-cmd")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-demangle", action="store_true")
    p.add_argument("--demangler-cmd")
    p.set_defaults(fn=cmd_build_corpus)

    p = sub.add_parser("train-vocab", help="learn the shared BPE vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--size", type=int, default=2048)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_vocab)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", required=True, help="JSON train+model config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("translate", help="translate stdin source code")
    _add_model_args(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.set_defaults(fn=cmd_translate)

    p = sub.add_parser("decompile", help="decompile stdin IR to source")
    _add_model_args(p)
    p.add_argument("--tgt", required=True)
    p.add_argument("--decoder", choices=["shared", "separate"])
    p.set_defaults(fn=cmd_decompile)

    p = sub.add_parser("pivot", help="translate via compile + neural decompile")
    _add_model_args(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(fn=cmd_pivot)

    p = sub.add_parser("evaluate", help="computational-accuracy evaluation")
    _add_model_args(p)
    p.add_argument("--set", required=True, help="eval set directory")
    p.add_argument("--directions", required=True, help="e.g. cpp-rust,rust-cpp")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json-out")
    p.add_argument("--skip-validation", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("embed-report", help="nearest tokens by embedding cosine")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--token", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(fn=cmd_embed_report)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if not getattr(args, "fn", None):
        ap.print_usage(sys.stderr)
        return 2
    try:
        return args.fn(args)
    except IrtransError as e:
        print(f"{e.name}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
