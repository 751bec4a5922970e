"""Tokenise text corpora into the flat binary token-id format.

The output is a plain concatenation of little-endian unsigned 32-bit token
ids, directly readable by the evaluation tooling's ``u32`` corpus format.
"""

from pathlib import Path

import numpy as np

from .errors import TokenizationError


def export_tokenized_corpus(text_file, tokenizer_dir, out_tokens) -> int:
    """Encode a UTF-8 text file and write little-endian u32 token ids.

    Returns the number of tokens written.  No special tokens are added, so
    tokenising a file twice (or in the source framework) yields identical ids.
    """
    from transformers import AutoTokenizer

    raw = Path(text_file).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise TokenizationError(
            f"{text_file}: invalid UTF-8 at byte offset {e.start}: {e.reason}"
        ) from None

    ids: list = []
    if text:
        tokenizer = AutoTokenizer.from_pretrained(tokenizer_dir)
        ids = tokenizer.encode(text, add_special_tokens=False)
        bad = [i for i in ids if i < 0 or i > 0xFFFFFFFF]
        if bad:
            raise TokenizationError(f"token id {bad[0]} does not fit an unsigned 32-bit integer")
    Path(out_tokens).write_bytes(np.asarray(ids, dtype="<u4").tobytes())
    return len(ids)
