"""Latent word inference network p(z|x).

A bidirectional GRU encodes the post; the concatenated final states of
the two directions pass through a tanh layer and a linear layer to give
one logit per vocabulary word.  Reserved ids (PAD/UNK/BOS/EOS) are
masked out of the softmax: a latent word is always a real word.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .corpus import RESERVED_IDS
from .errors import ContractError
from .params import ParameterStore

PARAM_NAMES = (
    "infer.emb",
    "infer.fwd.W", "infer.fwd.U", "infer.fwd.b",
    "infer.bwd.W", "infer.bwd.U", "infer.bwd.b",
    "infer.W1", "infer.b1", "infer.W2", "infer.b2",
)


class InferenceNet:
    """p(z|x) over the vocabulary; owns the "infer.*" names of its store."""

    def __init__(self, store: ParameterStore, vocab_size: int, emb_dim: int,
                 hidden_dim: int, fc_dim: int,
                 rng: np.random.Generator | None = None, init_range: float = 0.1):
        self.store = store
        self.vocab_size = vocab_size
        self.hidden_dim = hidden_dim
        if "infer.emb" not in store:
            if rng is None:
                raise ContractError("inference parameters missing and no rng to create them")
            V, E, H, F = vocab_size, emb_dim, hidden_dim, fc_dim
            store.create("infer.emb", (V, E), rng, init_range)
            for d in ("fwd", "bwd"):
                store.create(f"infer.{d}.W", (3 * H, E), rng, init_range)
                store.create(f"infer.{d}.U", (3 * H, H), rng, init_range)
                store.create(f"infer.{d}.b", (3 * H,), rng, init_range)
            store.create("infer.W1", (F, 2 * H), rng, init_range)
            store.create("infer.b1", (F,), rng, init_range)
            store.create("infer.W2", (V, F), rng, init_range)
            store.create("infer.b2", (V,), rng, init_range)
        if store["infer.W2"].data.shape[0] != vocab_size:
            raise ContractError(
                f"inference output extent {store['infer.W2'].data.shape[0]} "
                f"!= vocabulary size {vocab_size}"
            )

    def _p(self, name: str) -> ad.Tensor:
        return self.store[name].tensor

    def _run_direction(self, x_ids, direction: str) -> list[ad.Tensor]:
        W = self._p(f"infer.{direction}.W")
        U = self._p(f"infer.{direction}.U")
        b = self._p(f"infer.{direction}.b")
        emb = self._p("infer.emb")
        h = ad.zeros((self.hidden_dim,), dtype=self.store.dtype)
        states = []
        ids = x_ids if direction == "fwd" else list(reversed(x_ids))
        for t in ids:
            h = ad.gru_cell(ad.row_lookup(emb, t), h, W, U, b)
            states.append(h)
        if direction == "bwd":
            states.reverse()
        return states

    def encode_post(self, x_ids) -> ad.Tensor:
        """h_x: final forward state concatenated with final backward state."""
        if not x_ids:
            raise ContractError("cannot encode an empty post")
        fwd = self._run_direction(x_ids, "fwd")
        bwd = self._run_direction(x_ids, "bwd")
        return ad.concat([fwd[-1], bwd[0]])

    def latent_logits(self, x_ids) -> ad.Tensor:
        h_x = self.encode_post(x_ids)
        hidden = ad.tanh(ad.linear(self._p("infer.W1"), h_x, self._p("infer.b1")))
        return ad.linear(self._p("infer.W2"), hidden, self._p("infer.b2"))

    def latent_distribution(self, x_ids) -> np.ndarray:
        """p(z|x) over the vocabulary with reserved ids at exactly 0."""
        with ad.no_grad():
            logits = self.latent_logits(x_ids)
        return ad.masked_softmax(logits, RESERVED_IDS)

    def pretrain_loss(self, x_ids, keyword_ids) -> ad.Tensor:
        """Mean negative log-probability of the keyword set under p(z|x)."""
        if not keyword_ids:
            raise ContractError("pretrain_loss needs a non-empty keyword set")
        logits = self.latent_logits(x_ids)
        losses = [ad.masked_cross_entropy(logits, k, RESERVED_IDS) for k in keyword_ids]
        return ad.mean_scalars(losses)

    def restricted_log_prob(self, x_ids, candidates, z_id: int) -> ad.Tensor:
        """log p(z|x) renormalized over the candidate set, as a graph node."""
        idx = candidates.index(z_id)
        sub = ad.gather(self.latent_logits(x_ids), candidates)
        return ad.scale(ad.masked_cross_entropy(sub, idx), -1.0)

    def restricted_probs(self, x_ids, candidates) -> np.ndarray:
        """p(z|x) over the candidate set only (detached, sums to 1)."""
        with ad.no_grad():
            sub = ad.gather(self.latent_logits(x_ids), list(candidates))
        return ad.masked_softmax(sub)
