"""Batch conversion front end: `ckpt-import convert` and `ckpt-import tokenize`."""

import argparse
import json
import logging
import sys

from .convert import convert_checkpoint
from .corpus import export_tokenized_corpus
from .errors import ImporterError

log = logging.getLogger("ckpt_importer")


def cmd_convert(args) -> None:
    overrides = json.loads(args.config_overrides) if args.config_overrides else None
    manifest = convert_checkpoint(
        args.source, args.out, config_overrides=overrides, manifest_path=args.manifest
    )
    print(
        json.dumps(
            {
                "command": "convert",
                "out": str(args.out),
                "max_abs_divergence": manifest["self_test"]["max_abs_divergence"],
            },
            sort_keys=True,
        )
    )


def cmd_tokenize(args) -> None:
    n = export_tokenized_corpus(args.text, args.tokenizer, args.out)
    print(json.dumps({"command": "tokenize", "out": str(args.out), "n_tokens": n}, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ckpt-import", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a source checkpoint directory")
    p.add_argument("--source", required=True, help="source model directory")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--config-overrides", default=None, help="JSON object of config field overrides")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("tokenize", help="tokenise a text file into u32 token ids")
    p.add_argument("--text", required=True)
    p.add_argument("--tokenizer", required=True, help="tokenizer directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tokenize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO)
    try:
        args.func(args)
    except ImporterError as e:
        log.error("%s", e)
        return 1
    except FileNotFoundError as e:
        log.error("%s", e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
