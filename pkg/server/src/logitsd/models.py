"""Model adapters: anything with a tokenizer pair and a next-token logits call.

Built-ins:

* ``tiny[:seed]``         - a small causal transformer over printable ASCII,
                            randomly initialized from the seed. Zero downloads,
                            fully deterministic, loads in well under a second.
* ``tiny-seq2seq[:seed]`` - a small randomly initialized T5 with the same
                            character tokenizer, exercising the
                            encoder-decoder request shape (decoder_ids).
* ``hf:<model_id>``         - any causal LM from the transformers hub/cache.
* ``hf-seq2seq:<model_id>`` - any seq2seq LM from the transformers hub/cache.

Every adapter returns the full dense logit vector for the final position;
the client-side ensemble needs all entries, so top-k is never an option.
"""
from __future__ import annotations

import string
import threading

import numpy as np
import torch
from torch import nn

PRINTABLE = string.printable  # 100 characters, includes whitespace


class CharTokenizer:
    """Printable-ASCII character tokenizer with unk, eos and pad specials.

    Normalization is "drop characters outside printable ASCII": tokenize maps
    unknown characters to unk, detokenize renders unk (and the other
    specials) as the empty string, so one round trip reaches a fixed point.
    """

    def __init__(self):
        self.unk_id = len(PRINTABLE)
        self.eos_id = len(PRINTABLE) + 1
        self.pad_id = len(PRINTABLE) + 2
        self.vocab_size = len(PRINTABLE) + 3
        self._char_to_id = {c: i for i, c in enumerate(PRINTABLE)}

    def tokenize(self, text: str) -> list[int]:
        return [self._char_to_id.get(c, self.unk_id) for c in text]

    def detokenize(self, ids: list[int]) -> str:
        return "".join(PRINTABLE[i] for i in ids if 0 <= i < len(PRINTABLE))


class _Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model), nn.GELU(), nn.Linear(4 * d_model, d_model)
        )

    def forward(self, x, mask):
        h = self.ln1(x)
        attn_out, _ = self.attn(h, h, h, attn_mask=mask, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.ln2(x))


class TinyCharLM(nn.Module):
    """Seeded random-weight causal transformer over the character vocabulary."""

    def __init__(self, seed: int = 0, d_model: int = 64, n_heads: int = 4,
                 n_layers: int = 2, max_context: int = 512):
        super().__init__()
        torch.manual_seed(seed)
        self.tokenizer = CharTokenizer()
        vocab = self.tokenizer.vocab_size
        self.max_context = max_context
        self.tok_emb = nn.Embedding(vocab, d_model)
        self.pos_emb = nn.Embedding(max_context, d_model)
        self.blocks = nn.ModuleList(_Block(d_model, n_heads) for _ in range(n_layers))
        self.ln_f = nn.LayerNorm(d_model)
        self.head = nn.Linear(d_model, vocab)
        self.eval()

    @torch.no_grad()
    def final_logits(self, ids: list[int]) -> torch.Tensor:
        if not ids:
            ids = [self.tokenizer.pad_id]
        x = torch.tensor([ids], dtype=torch.long)
        positions = torch.arange(x.shape[1]).unsqueeze(0)
        h = self.tok_emb(x) + self.pos_emb(positions)
        mask = torch.triu(torch.full((x.shape[1], x.shape[1]), float("-inf")), diagonal=1)
        for block in self.blocks:
            h = block(h, mask)
        return self.head(self.ln_f(h))[0, -1]


class ModelAdapter:
    """Uniform surface the HTTP layer talks to."""

    model_id: str
    architecture: str  # decoder-only | encoder-decoder
    vocab_size: int
    eos_id: int
    max_context: int

    def tokenize(self, text: str) -> list[int]:
        raise NotImplementedError

    def detokenize(self, ids: list[int]) -> str:
        raise NotImplementedError

    def logits(self, ids: list[int], decoder_ids: list[int] | None = None) -> list[float]:
        raise NotImplementedError


class TinyAdapter(ModelAdapter):
    architecture = "decoder-only"

    def __init__(self, seed: int = 0, max_context: int = 512):
        self._model = TinyCharLM(seed=seed, max_context=max_context)
        tok = self._model.tokenizer
        self.model_id = f"tiny-char-lm-seed{seed}"
        self.vocab_size = tok.vocab_size
        self.eos_id = tok.eos_id
        self.max_context = max_context
        # forward passes serialized: correctness under concurrency, not speedup
        self._lock = threading.Lock()

    def tokenize(self, text):
        return self._model.tokenizer.tokenize(text)

    def detokenize(self, ids):
        return self._model.tokenizer.detokenize(ids)

    def logits(self, ids, decoder_ids=None):
        if decoder_ids:
            raise ValueError("decoder_ids not supported by a decoder-only model")
        with self._lock:
            vec = self._model.final_logits(ids)
        return [float(v) for v in vec.double()]


class TinySeq2SeqAdapter(ModelAdapter):
    """Randomly initialized T5 over the character vocabulary.

    Exists to exercise the encoder-decoder request shape: the prompt rides as
    encoder input, the generated prefix as decoder_ids.
    """

    architecture = "encoder-decoder"

    def __init__(self, seed: int = 0, max_context: int = 512):
        from transformers import T5Config, T5ForConditionalGeneration

        self._tokenizer = CharTokenizer()
        torch.manual_seed(seed)
        config = T5Config(
            vocab_size=self._tokenizer.vocab_size,
            d_model=64,
            d_kv=16,
            d_ff=128,
            num_layers=2,
            num_heads=4,
            decoder_start_token_id=self._tokenizer.pad_id,
            pad_token_id=self._tokenizer.pad_id,
            eos_token_id=self._tokenizer.eos_id,
            dropout_rate=0.0,
        )
        self._model = T5ForConditionalGeneration(config)
        self._model.eval()
        self.model_id = f"tiny-char-t5-seed{seed}"
        self.vocab_size = self._tokenizer.vocab_size
        self.eos_id = self._tokenizer.eos_id
        self.max_context = max_context
        self._lock = threading.Lock()

    def tokenize(self, text):
        return self._tokenizer.tokenize(text)

    def detokenize(self, ids):
        return self._tokenizer.detokenize(ids)

    @torch.no_grad()
    def logits(self, ids, decoder_ids=None):
        encoder_ids = ids if ids else [self._tokenizer.pad_id]
        decoder_input = [self._model.config.decoder_start_token_id] + list(decoder_ids or [])
        with self._lock:
            out = self._model(
                input_ids=torch.tensor([encoder_ids], dtype=torch.long),
                decoder_input_ids=torch.tensor([decoder_input], dtype=torch.long),
            )
        return [float(v) for v in out.logits[0, -1].double()]


class HFCausalAdapter(ModelAdapter):
    architecture = "decoder-only"

    def __init__(self, model_id: str, device: str = "cpu", max_context: int | None = None):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForCausalLM.from_pretrained(model_id).to(device)
        self._model.eval()
        self._device = device
        self.model_id = model_id
        self.vocab_size = self._model.get_output_embeddings().weight.shape[0]
        self.eos_id = int(self._tokenizer.eos_token_id)
        declared = getattr(self._model.config, "max_position_embeddings", None)
        self.max_context = max_context or declared or 4096
        self._lock = threading.Lock()

    def tokenize(self, text):
        return self._tokenizer.encode(text, add_special_tokens=False)

    def detokenize(self, ids):
        return self._tokenizer.decode(ids, skip_special_tokens=True)

    @torch.no_grad()
    def logits(self, ids, decoder_ids=None):
        if decoder_ids:
            raise ValueError("decoder_ids not supported by a decoder-only model")
        if not ids:
            ids = [self.eos_id]
        with self._lock:
            out = self._model(input_ids=torch.tensor([ids], device=self._device))
        return [float(v) for v in out.logits[0, -1].double().cpu()]


class HFSeq2SeqAdapter(ModelAdapter):
    architecture = "encoder-decoder"

    def __init__(self, model_id: str, device: str = "cpu", max_context: int | None = None):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForSeq2SeqLM.from_pretrained(model_id).to(device)
        self._model.eval()
        self._device = device
        self.model_id = model_id
        self.vocab_size = self._model.get_output_embeddings().weight.shape[0]
        self.eos_id = int(self._tokenizer.eos_token_id)
        self.max_context = max_context or 4096
        self._lock = threading.Lock()

    def tokenize(self, text):
        return self._tokenizer.encode(text, add_special_tokens=False)

    def detokenize(self, ids):
        return self._tokenizer.decode(ids, skip_special_tokens=True)

    @torch.no_grad()
    def logits(self, ids, decoder_ids=None):
        if not ids:
            ids = [self.eos_id]
        start = self._model.config.decoder_start_token_id
        decoder_input = [start] + list(decoder_ids or [])
        with self._lock:
            out = self._model(
                input_ids=torch.tensor([ids], device=self._device),
                decoder_input_ids=torch.tensor([decoder_input], device=self._device),
            )
        return [float(v) for v in out.logits[0, -1].double().cpu()]


def load_model(spec: str, device: str = "cpu", max_context: int | None = None) -> ModelAdapter:
    """Resolve a model spec string to a loaded adapter."""
    torch.set_num_threads(1)  # reproducible and well-behaved under concurrency
    kind, _, rest = spec.partition(":")
    if kind == "tiny":
        seed = int(rest) if rest else 0
        return TinyAdapter(seed=seed, max_context=max_context or 512)
    if kind == "tiny-seq2seq":
        seed = int(rest) if rest else 0
        return TinySeq2SeqAdapter(seed=seed, max_context=max_context or 512)
    if kind == "hf":
        return HFCausalAdapter(rest, device=device, max_context=max_context)
    if kind == "hf-seq2seq":
        return HFSeq2SeqAdapter(rest, device=device, max_context=max_context)
    raise ValueError(
        f"unknown model spec {spec!r} (expected tiny[:seed], tiny-seq2seq[:seed], "
        f"hf:<id> or hf-seq2seq:<id>)"
    )
