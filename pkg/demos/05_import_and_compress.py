"""End-to-end: import a published OPT-style checkpoint, slice 25%, compare perplexity.

Usage:
    python demos/05_import_and_compress.py SOURCE_DIR CORPUS.txt [WORKDIR]

SOURCE_DIR must hold a post-norm OPT-family checkpoint (and its tokenizer);
CORPUS.txt is plain UTF-8 text for calibration and evaluation.  With a real
125M-class model and a WikiText-2-style test set this runs for hours on CPU;
with the tiny fixture from importer/tests it finishes in seconds.  The
expectation for a real pretrained model is a sliced-to-dense perplexity
ratio of at most 1.6.
"""

import json
import subprocess
import sys
from pathlib import Path


def run(args):
    print("+", " ".join(str(a) for a in args))
    out = subprocess.run([str(a) for a in args], check=True, capture_output=True, text=True)
    summary = json.loads(out.stdout.strip().splitlines()[-1])
    print(" ", summary)
    return summary


def main():
    if len(sys.argv) < 3:
        print(__doc__)
        return 2
    source, corpus_txt = Path(sys.argv[1]), Path(sys.argv[2])
    work = Path(sys.argv[3]) if len(sys.argv) > 3 else Path("work")
    work.mkdir(exist_ok=True)

    dense = work / "dense.ckpt"
    tokens = work / "corpus.tokens"
    sliced = work / "sliced.ckpt"

    run(["ckpt-import", "convert", "--source", source, "--out", dense])
    run(["ckpt-import", "tokenize", "--text", corpus_txt, "--tokenizer", source, "--out", tokens])
    run(
        [
            "slicekit", "slice",
            "--model", dense,
            "--corpus", tokens,
            "--out", sliced,
            "--slice-fraction", "0.25",
            "--cal-count", "128",
            "--report", work / "slicing_report.json",
        ]
    )
    base = run(["slicekit", "eval", "--model", dense, "--corpus", tokens])
    cut = run(["slicekit", "eval", "--model", sliced, "--corpus", tokens])

    ratio = cut["perplexity"] / base["perplexity"]
    print(f"\ndense perplexity : {base['perplexity']:.3f}")
    print(f"sliced perplexity: {cut['perplexity']:.3f}")
    print(f"ratio            : {ratio:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
