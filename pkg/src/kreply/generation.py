"""Latent-conditioned generation network.

A bidirectional GRU (separate from the inference network's) encodes the
post into per-position vectors h_x^g(j).  A latent word z maps through
an embedding and a tanh fully connected layer to h_z^g, which attends
over the positions to build the latent context c_z.  The decoder GRU
starts from a tanh-affine image of h_z^g, so the latent word reaches
the decoder directly as well as through c_z, and at each step t
re-attends with its own state h_y(t) to get c_y(t); the output logits
are a linear map of [h_y(t); c_z; c_y(t)].

Per-response loss is the token-mean negative log-likelihood; bag losses
aggregate it by mean (avg mode) or by minimum (min mode, gradients only
through the attaining response, lowest index on ties).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import Bag, BOS, EOS, PAD, UNK
from .errors import ContractError
from .params import ParameterStore
from .search import Hypothesis, beam_search

# never a loss target: padding and the artificial sequence start
NLL_BANNED = (PAD, BOS)
# never emitted when decoding: the above plus the unknown-word placeholder
EMIT_BANNED = (PAD, BOS, UNK)

PARAM_NAMES = (
    "gen.emb",
    "gen.fwd.W", "gen.fwd.U", "gen.fwd.b",
    "gen.bwd.W", "gen.bwd.U", "gen.bwd.b",
    "gen.z_emb", "gen.z_fc.W", "gen.z_fc.b",
    "gen.dec_init.W", "gen.dec_init.b",
    "gen.dec.W", "gen.dec.U", "gen.dec.b",
    "gen.out.W", "gen.out.b",
)


@dataclass
class EncodedPost:
    """Per-position encoder outputs (T, D) and the concatenated final states (D,)."""

    ids: list[int]
    positions: ad.Tensor
    final: ad.Tensor


@dataclass
class AttentionTrace:
    """Attention record of one decoded response."""

    latent: int
    z_weights: list[float]
    step_weights: list[list[float]] = field(default_factory=list)


def _masked_log_probs(logits: np.ndarray, banned) -> np.ndarray:
    """Stable detached log-softmax with banned ids at -inf (64-bit)."""
    out = np.full(logits.shape, -np.inf, dtype=np.float64)
    mask = np.ones(logits.shape[0], dtype=bool)
    mask[list(banned)] = False
    allowed = logits[mask].astype(np.float64)
    shifted = allowed - allowed.max()
    out[mask] = shifted - np.log(np.exp(shifted).sum())
    return out


class GenerationNet:
    """p(y|x,z); owns the "gen.*" names of its store."""

    def __init__(self, store: ParameterStore, vocab_size: int, emb_dim: int,
                 enc_hidden: int, rng: np.random.Generator | None = None,
                 init_range: float = 0.1):
        self.store = store
        self.vocab_size = vocab_size
        self.enc_hidden = enc_hidden
        self.ctx_dim = 2 * enc_hidden  # per-position output, h_z^g, decoder hidden
        if "gen.emb" not in store:
            if rng is None:
                raise ContractError("generation parameters missing and no rng to create them")
            V, E, H, D = vocab_size, emb_dim, enc_hidden, 2 * enc_hidden
            store.create("gen.emb", (V, E), rng, init_range)
            for d in ("fwd", "bwd"):
                store.create(f"gen.{d}.W", (3 * H, E), rng, init_range)
                store.create(f"gen.{d}.U", (3 * H, H), rng, init_range)
                store.create(f"gen.{d}.b", (3 * H,), rng, init_range)
            store.create("gen.z_emb", (V, E), rng, init_range)
            store.create("gen.z_fc.W", (D, E), rng, init_range)
            store.create("gen.z_fc.b", (D,), rng, init_range)
            store.create("gen.dec_init.W", (D, D), rng, init_range)
            store.create("gen.dec_init.b", (D,), rng, init_range)
            store.create("gen.dec.W", (3 * D, E), rng, init_range)
            store.create("gen.dec.U", (3 * D, D), rng, init_range)
            store.create("gen.dec.b", (3 * D,), rng, init_range)
            store.create("gen.out.W", (V, 3 * D), rng, init_range)
            store.create("gen.out.b", (V,), rng, init_range)
        if store["gen.out.W"].data.shape[0] != vocab_size:
            raise ContractError(
                f"generation output extent {store['gen.out.W'].data.shape[0]} "
                f"!= vocabulary size {vocab_size}"
            )

    def _p(self, name: str) -> ad.Tensor:
        return self.store[name].tensor

    def encode(self, x_ids) -> EncodedPost:
        if not x_ids:
            raise ContractError("cannot encode an empty post")
        emb = self._p("gen.emb")
        states: dict[str, list[ad.Tensor]] = {}
        for d in ("fwd", "bwd"):
            W, U, b = self._p(f"gen.{d}.W"), self._p(f"gen.{d}.U"), self._p(f"gen.{d}.b")
            h = ad.zeros((self.enc_hidden,), dtype=self.store.dtype)
            out = []
            ids = x_ids if d == "fwd" else list(reversed(x_ids))
            for t in ids:
                h = ad.gru_cell(ad.row_lookup(emb, t), h, W, U, b)
                out.append(h)
            if d == "bwd":
                out.reverse()
            states[d] = out
        positions = ad.stack([ad.concat([f, b]) for f, b in zip(states["fwd"], states["bwd"])])
        final = ad.concat([states["fwd"][-1], states["bwd"][0]])
        return EncodedPost(ids=list(x_ids), positions=positions, final=final)

    def latent_rep(self, z_id: int) -> ad.Tensor:
        """h_z^g: latent embedding through the tanh fully connected layer."""
        e = ad.row_lookup(self._p("gen.z_emb"), z_id)
        return ad.tanh(ad.linear(self._p("gen.z_fc.W"), e, self._p("gen.z_fc.b")))

    @staticmethod
    def _attend(query: ad.Tensor, enc: EncodedPost) -> tuple[ad.Tensor, ad.Tensor]:
        weights = ad.softmax(ad.matmul(enc.positions, query))
        return ad.matmul(weights, enc.positions), weights

    def latent_context(self, z_id: int, x) -> tuple[ad.Tensor, ad.Tensor]:
        """c_z and its attention weights over the post positions."""
        enc = x if isinstance(x, EncodedPost) else self.encode(x)
        return self._attend(self.latent_rep(z_id), enc)

    def _decoder_init(self, h_z: ad.Tensor) -> ad.Tensor:
        return ad.tanh(ad.linear(self._p("gen.dec_init.W"), h_z,
                                 self._p("gen.dec_init.b")))

    def _decoder_step(self, prev_id: int, h: ad.Tensor, enc: EncodedPost,
                      c_z: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor, ad.Tensor]:
        """One teacher-forcing step: new state, output logits, attention row."""
        x = ad.row_lookup(self._p("gen.emb"), prev_id)
        h = ad.gru_cell(x, h, self._p("gen.dec.W"), self._p("gen.dec.U"),
                        self._p("gen.dec.b"))
        c_y, w = self._attend(h, enc)
        logits = ad.linear(self._p("gen.out.W"), ad.concat([h, c_z, c_y]),
                           self._p("gen.out.b"))
        return h, logits, w

    def response_nll(self, y_ids, x, z_id: int,
                     trace: AttentionTrace | None = None) -> ad.Tensor:
        """Token-mean negative log-likelihood of y given the post and z."""
        if not y_ids:
            raise ContractError("response_nll needs a non-empty response")
        enc = x if isinstance(x, EncodedPost) else self.encode(x)
        h_z = self.latent_rep(z_id)
        c_z, zw = self._attend(h_z, enc)
        if trace is not None:
            trace.latent = z_id
            trace.z_weights = [float(v) for v in zw.data]
        h = self._decoder_init(h_z)
        losses = []
        prev = BOS
        for target in y_ids:
            h, logits, w = self._decoder_step(prev, h, enc, c_z)
            losses.append(ad.masked_cross_entropy(logits, target, NLL_BANNED))
            if trace is not None:
                trace.step_weights.append([float(v) for v in w.data])
            prev = target
        return ad.mean_scalars(losses)

    def bag_loss(self, bag: Bag, z_id: int, mode: str,
                 enc: EncodedPost | None = None) -> ad.Tensor:
        """Mean (avg) or minimum (min) of response_nll over the bag."""
        if mode not in ("avg", "min"):
            raise ContractError(f"unknown bag loss mode {mode!r}")
        if not bag.responses:
            raise ContractError("bag has no responses")
        if enc is None:
            enc = self.encode(bag.post)
        losses = [self.response_nll(y, enc, z_id) for y in bag.responses]
        if mode == "avg":
            return ad.mean_scalars(losses)
        best = 0
        for i in range(1, len(losses)):
            if losses[i].item() < losses[best].item():
                best = i
        return losses[best]

    def greedy_decode(self, x, z_id: int, max_len: int = 30) -> tuple[list[int], AttentionTrace]:
        """Argmax decoding until EOS or max_len; PAD/BOS/UNK never emitted."""
        with ad.no_grad():
            enc = x if isinstance(x, EncodedPost) else self.encode(x)
            h_z = self.latent_rep(z_id)
            c_z, zw = self._attend(h_z, enc)
            trace = AttentionTrace(latent=z_id, z_weights=[float(v) for v in zw.data])
            h = self._decoder_init(h_z)
            out: list[int] = []
            prev = BOS
            for _ in range(max_len):
                h, logits, w = self._decoder_step(prev, h, enc, c_z)
                log_probs = _masked_log_probs(logits.data, EMIT_BANNED)
                tok = int(np.argmax(log_probs))
                out.append(tok)
                trace.step_weights.append([float(v) for v in w.data])
                if tok == EOS:
                    break
                prev = tok
        return out, trace

    def beam_decode(self, x, z_id: int, width: int = 3,
                    max_len: int = 30) -> list[Hypothesis]:
        """Beam search by token-mean log-probability, best hypothesis first."""
        with ad.no_grad():
            enc = x if isinstance(x, EncodedPost) else self.encode(x)
            h_z = self.latent_rep(z_id)
            c_z, _ = self._attend(h_z, enc)
            h0 = self._decoder_init(h_z)

        def step(state):
            prev, h = state
            with ad.no_grad():
                h_new, logits, _ = self._decoder_step(prev, h, enc, c_z)
            log_probs = _masked_log_probs(logits.data, EMIT_BANNED)

            def advance(tok: int):
                return (tok, h_new)

            return log_probs, advance

        return beam_search(step, (BOS, h0), width, max_len, EOS)
