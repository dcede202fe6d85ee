"""Per-layer next-token distributions from a causal LM.

For each incoming token position a, the scorer runs one forward pass over the
whole sequence and reads the hidden state that predicts token a (the last
model piece of token a-1, or the BOS position for a=0) at every candidate
layer. Early-exit logits reuse the model's final layer norm and vocabulary
head on intermediate hidden states; the last hidden state from the model is
already normalized, so only the head is applied there.

Full-vocabulary vectors are coarsened for the wire: the union of each layer's
top-k indices forms a shared support, everything else is folded into one
rest-mass bucket per layer.
"""

from __future__ import annotations

import sys

import numpy as np
import torch


class SequenceTooLong(ValueError):
    """Request exceeds the serving token budget."""


class TokenizationFailure(ValueError):
    """An incoming token produced no model pieces and no unk exists."""


_FINAL_NORM_PATHS = (
    ("transformer", "ln_f"),  # gpt2-style
    ("model", "norm"),  # llama/mistral-style
    ("gpt_neox", "final_layer_norm"),
    ("transformer", "norm_f"),
)


def _find_final_norm(model) -> torch.nn.Module | None:
    for path in _FINAL_NORM_PATHS:
        node = model
        for name in path:
            node = getattr(node, name, None)
            if node is None:
                break
        if node is not None:
            return node
    return None


class LayerScorer:
    def __init__(
        self,
        model,
        tokenizer,
        candidate_layers: tuple[int, ...] | None = None,
        top_k: int = 256,
        max_tokens: int | None = None,
    ):
        if top_k < 16:
            raise ValueError("top_k must be >= 16")
        self.model = model.eval()
        self.tokenizer = tokenizer
        self.n_layers = int(model.config.num_hidden_layers)
        self.vocab_size = int(model.config.vocab_size)
        if candidate_layers is None:
            candidate_layers = tuple(range(self.n_layers // 2 + 1))
        layers = tuple(sorted(set(int(x) for x in candidate_layers)))
        if layers[0] < 0 or layers[-1] >= self.n_layers:
            raise ValueError("candidate_layers must lie in [0, n_layers)")
        self.candidate_layers = layers
        self.top_k = min(top_k, self.vocab_size)
        limit = getattr(model.config, "max_position_embeddings", None)
        self.max_tokens = max_tokens if max_tokens is not None else (limit or 1024)
        self.final_norm = _find_final_norm(model)
        if self.final_norm is None:
            sys.stderr.write(
                "layer-bridge: no final layer norm found; early exits use raw hidden states\n"
            )
        self.head = model.get_output_embeddings()
        bos = tokenizer.bos_token_id
        if bos is None:
            bos = tokenizer.eos_token_id
        if bos is None:
            sys.stderr.write("layer-bridge: tokenizer has no bos/eos; using id 0\n")
            bos = 0
        self.bos_id = int(bos)

    def handshake(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "vocab_size": self.vocab_size,
            "candidate_layers": list(self.candidate_layers),
        }

    def _encode(self, tokens: list[str]) -> tuple[list[int], list[int]]:
        """Model piece ids plus, per incoming token, its last piece index."""
        ids: list[int] = []
        last_piece: list[int] = []
        if getattr(self.tokenizer, "is_fast", False):
            enc = self.tokenizer(
                list(tokens), is_split_into_words=True, add_special_tokens=False
            )
            word_ids = enc.word_ids()
            piece_ids = enc["input_ids"]
            last = {w: i for i, w in enumerate(word_ids) if w is not None}
            if len(last) != len(tokens):
                missing = [tokens[i] for i in range(len(tokens)) if i not in last]
                raise TokenizationFailure(f"tokens produced no pieces: {missing!r}")
            ids = list(piece_ids)
            last_piece = [last[i] for i in range(len(tokens))]
            return ids, last_piece
        for i, token in enumerate(tokens):
            pieces = self.tokenizer.encode(token, add_special_tokens=False)
            if not pieces:
                if self.tokenizer.unk_token_id is None:
                    raise TokenizationFailure(f"token produced no pieces: {token!r}")
                pieces = [self.tokenizer.unk_token_id]
            ids.extend(pieces)
            last_piece.append(len(ids) - 1)
        return ids, last_piece

    @torch.no_grad()
    def full_distributions(self, tokens: list[str]) -> list[dict[int, np.ndarray]]:
        """Uncoarsened per-layer distributions, one dict per token position."""
        ids, last_piece = self._encode(list(tokens))
        input_ids = [self.bos_id] + ids
        if len(input_ids) > self.max_tokens:
            raise SequenceTooLong(
                f"sequence of {len(input_ids)} pieces exceeds limit {self.max_tokens}"
            )
        out = self.model(
            input_ids=torch.tensor([input_ids]), output_hidden_states=True
        )
        hidden = out.hidden_states  # n_layers + 1 entries, embeddings first
        # Prediction for token a sits at the last piece of token a-1 (BOS for a=0).
        positions = [0] + [1 + p for p in last_piece[:-1]]
        per_token: list[dict[int, np.ndarray]] = []
        for pos in positions:
            dists: dict[int, np.ndarray] = {}
            for layer in (*self.candidate_layers, self.n_layers):
                state = hidden[layer][0, pos]
                if layer != self.n_layers and self.final_norm is not None:
                    state = self.final_norm(state)
                probs = torch.softmax(self.head(state).float(), dim=-1).numpy()
                probs = probs.astype(np.float64)
                dists[layer] = probs / probs.sum()
            per_token.append(dists)
        return per_token

    def score(self, tokens: list[str]) -> list[dict]:
        """Coarsened wire-format entries for every token position."""
        per_token = self.full_distributions(tokens)
        entries = []
        for dists in per_token:
            support = np.zeros(self.vocab_size, dtype=bool)
            for vec in dists.values():
                top = np.argpartition(vec, -self.top_k)[-self.top_k :]
                support[top] = True
            keep = np.nonzero(support)[0]
            entry = {
                "support": [int(i) for i in keep],
                "dists": {},
                "rest_mass": {},
            }
            for layer, vec in dists.items():
                kept = vec[keep]
                entry["dists"][str(layer)] = [float(x) for x in kept]
                entry["rest_mass"][str(layer)] = max(0.0, float(1.0 - kept.sum()))
            entries.append(entry)
        return entries
