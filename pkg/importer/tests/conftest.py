import pytest

from srcfactory import make_source


@pytest.fixture(scope="session")
def source_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("opt_src")
    make_source(d)
    return d


@pytest.fixture(scope="session")
def tokenizer_dir(tmp_path_factory):
    """Minimal word-level tokenizer saved as a local directory."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from transformers import PreTrainedTokenizerFast

    vocab = {w: i for i, w in enumerate(["<unk>", "the", "quick", "brown", "fox", "dog", "."])}
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = Whitespace()
    d = tmp_path_factory.mktemp("tok")
    PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="<unk>").save_pretrained(d)
    return d
