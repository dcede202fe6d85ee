from __future__ import annotations

import numpy as np
import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import WhitespaceSplit
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

from layer_bridge.model import LayerScorer

VOCAB_SIZE = 101
N_LAYERS = 4


def _build_tokenizer() -> PreTrainedTokenizerFast:
    words = [f"w{i:02d}" for i in range(96)] + [".", ",", "!"]
    vocab = {w: i for i, w in enumerate(words)}
    vocab["<bos>"] = 99
    vocab["<unk>"] = 100
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = WhitespaceSplit()
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="<unk>", bos_token="<bos>"
    )


def _build_model() -> GPT2LMHeadModel:
    config = GPT2Config(
        vocab_size=VOCAB_SIZE,
        n_positions=64,
        n_embd=32,
        n_layer=N_LAYERS,
        n_head=4,
        bos_token_id=99,
        eos_token_id=99,
    )
    torch.manual_seed(7)
    return GPT2LMHeadModel(config)


@pytest.fixture(scope="session")
def tiny_tokenizer() -> PreTrainedTokenizerFast:
    return _build_tokenizer()


@pytest.fixture(scope="session")
def tiny_model() -> GPT2LMHeadModel:
    return _build_model()


@pytest.fixture(scope="session")
def scorer(tiny_model, tiny_tokenizer) -> LayerScorer:
    return LayerScorer(tiny_model, tiny_tokenizer, top_k=16)


@pytest.fixture(scope="session")
def saved_model_dir(tmp_path_factory, tiny_model, tiny_tokenizer):
    path = tmp_path_factory.mktemp("tiny-model")
    tiny_model.save_pretrained(path)
    tiny_tokenizer.save_pretrained(path)
    return path


def jsd_bits(p: np.ndarray, q: np.ndarray) -> float:
    """Independent base-2 Jensen-Shannon divergence for oracle checks."""
    m = 0.5 * (p + q)

    def kl(a: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    return 0.5 * (kl(p) + kl(q))
