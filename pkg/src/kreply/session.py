"""Wiring layer: configuration + vocabulary + networks + trainer as one unit.

A Session owns everything a command needs: the two parameter stores, the
inference and generation networks bound to them, the trainer with its
epoch counters, and the vocabulary.  Fresh sessions initialize all
parameters from the run seed; checkpointed sessions restore bit-exactly.
"""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from .config import RunConfig, build_config
from .corpus import EOS, Vocabulary, load_bags, load_stopwords
from .errors import ConfigError
from .generation import GenerationNet
from .inference import InferenceNet
from .params import ParameterStore
from .sampling import select_decode_latents
from .training import JointTrainer, derive_seed

log = logging.getLogger(__name__)


class Session:
    def __init__(self, cfg: RunConfig, vocab: Vocabulary,
                 store_w: ParameterStore, store_g: ParameterStore,
                 counters: dict | None = None, run_log=None,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.store_w = store_w
        self.store_g = store_g
        V = len(vocab)
        self.infer = InferenceNet(store_w, V, cfg.emb_dim, cfg.enc_hidden,
                                  cfg.fc_dim, rng=rng, init_range=cfg.init_range)
        self.gen = GenerationNet(store_g, V, cfg.emb_dim, cfg.enc_hidden,
                                 rng=rng, init_range=cfg.init_range)
        self.trainer = JointTrainer(self.infer, self.gen, cfg,
                                    self.stopword_ids(), run_log=run_log)
        if counters:
            self.trainer.counters.update(counters)

    @classmethod
    def fresh(cls, cfg: RunConfig, vocab: Vocabulary, run_log=None) -> "Session":
        rng = np.random.default_rng(derive_seed(cfg.seed, "init"))
        return cls(cfg, vocab, ParameterStore(), ParameterStore(),
                   run_log=run_log, rng=rng)

    @classmethod
    def from_checkpoint(cls, path, run_log=None,
                        expected_vocab_sha: str | None = None) -> "Session":
        meta, stores = ckpt.load_checkpoint(path, expected_vocab_sha)
        cfg = build_config(overrides=meta["config"])
        vocab = Vocabulary(meta["vocab"][4:])  # stored with the reserved prefix
        return cls(cfg, vocab, stores["infer"], stores["gen"],
                   counters=meta["counters"], run_log=run_log)

    def save(self, path) -> None:
        ckpt.save_checkpoint(
            path,
            {"infer": self.store_w, "gen": self.store_g},
            self.cfg.to_dict(),
            self.vocab.tokens,
            self.trainer.counters,
        )

    # -- shared helpers ----------------------------------------------------

    def stopword_ids(self) -> set[int]:
        if not self.cfg.stopwords_path:
            return set()
        words = load_stopwords(self.cfg.stopwords_path)
        ids = {self.vocab.encode_token(w) for w in words}
        return {i for i in ids if i >= 4}

    def load_split(self, path) -> list:
        bags = load_bags(path, self.vocab, self.cfg.min_response_chars,
                         self.cfg.max_len, profile=self.cfg.profile)
        if not bags:
            raise ConfigError(f"corpus {path} yields no usable bags")
        return bags

    def ids_to_text(self, ids) -> str:
        return " ".join(self.vocab.decode([i for i in ids if i != EOS]))

    def select_latents(self, post_ids, post_index: int,
                       n_top: int | None = None, k: int | None = None) -> list[int]:
        """Decode-time diverse latent words for one post."""
        n_top = self.cfg.n_top if n_top is None else n_top
        k = self.cfg.decode_k if k is None else k
        probs = self.infer.latent_distribution(post_ids)
        with ad.no_grad():
            enc = self.gen.encode(post_ids)

        def vector_fn(z: int) -> np.ndarray:
            with ad.no_grad():
                c_z, _ = self.gen.latent_context(z, enc)
            return c_z.data.astype(np.float64)

        n_top = min(n_top, int((probs > 0).sum()))
        k = min(k, n_top)
        return select_decode_latents(
            probs, vector_fn, n_top, k,
            derive_seed(self.cfg.seed, "decode", post_index))

    def respond(self, post_ids, post_index: int, n_top: int | None = None,
                k: int | None = None, beam_width: int | None = None):
        """(latent ids, response id-sequences) for one post."""
        beam_width = self.cfg.beam_width if beam_width is None else beam_width
        latents = self.select_latents(post_ids, post_index, n_top, k)
        responses = []
        for z in latents:
            hyps = self.gen.beam_decode(post_ids, z, beam_width, self.cfg.max_len)
            responses.append(list(hyps[0].tokens))
        return latents, responses
