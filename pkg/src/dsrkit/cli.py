"""Command-line entry point: synth-corpus, augment, pretrain, finetune,
evaluate. All state flows through flags and the INI config file; every
subcommand leaves a run-record JSON beside its outputs."""

import argparse
import sys
from pathlib import Path

from .errors import DsrkitError
from .pipeline import (
    augment_file,
    evaluate,
    finetune_triplet,
    load_config,
    pretrain_ge2e,
    synth_corpus,
    write_run_record,
)


def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="INI config file (defaults used when omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsrkit",
        description="speaker-encoder toolkit: synthesis, augmentation, "
                    "GE2E pretraining, triplet fine-tuning, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="generate the synthetic voice corpus")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("augment", help="pitch-shift / tempo-stretch one wav file")
    _add_common(p)
    p.add_argument("--in", dest="in_path", type=Path, required=True,
                   help="input wav")
    p.add_argument("--out", type=Path, required=True, help="output wav")
    p.add_argument("--pitch-coeff", type=float, default=0.0,
                   help="shift-down strength in [0, 1]; 0 leaves pitch alone")
    p.add_argument("--tempo-coeff", type=float, default=1.0,
                   help="speed factor in (0, 1]; 0.5 doubles duration")

    p = sub.add_parser("pretrain", help="GE2E-pretrain the speaker encoder")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("finetune", help="triplet-fine-tune a pretrained encoder")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True,
                   help="base checkpoint to start from")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("evaluate", help="EER, gender probe, and optional WER")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--hyp", type=Path, default=None,
                   help="hypothesis text, one line per manifest record")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.seed)
        if args.command == "synth-corpus":
            manifest = synth_corpus(config, args.out)
            write_run_record(args.out, "synth-corpus", config)
            print(f"wrote {manifest}")
        elif args.command == "augment":
            out = augment_file(args.in_path, args.out,
                               args.pitch_coeff, args.tempo_coeff)
            write_run_record(out.parent, "augment", config,
                             filename=out.name + ".run.json",
                             extra={"pitch_coeff": args.pitch_coeff,
                                    "tempo_coeff": args.tempo_coeff})
            print(f"wrote {out}")
        elif args.command == "pretrain":
            ckpt = pretrain_ge2e(args.manifest, config, args.out)
            print(f"wrote {ckpt}")
        elif args.command == "finetune":
            ckpt = finetune_triplet(args.manifest, args.checkpoint, config, args.out)
            print(f"wrote {ckpt}")
        elif args.command == "evaluate":
            report = evaluate(args.manifest, args.checkpoint, config, args.out,
                              hypotheses_path=args.hyp)
            print(f"wrote {report}")
    except (DsrkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
