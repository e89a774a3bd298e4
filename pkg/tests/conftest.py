"""Shared fixtures: one trained synthetic pipeline reused by the slow checks."""

import numpy as np
import pytest

from kreply import autodiff as ad
from kreply import synthetic
from kreply.config import build_config
from kreply.corpus import (Vocabulary, attach_gold, iter_corpus_lines,
                           load_oracle, tokenize)
from kreply.session import Session

# One recipe drives every corpus-level check; collapsing it into the desk
# profile defaults keeps the CLI walkthrough and the tests on the same path.
PIPELINE_SPEC = dict(bags=2000, topic_vocab=50, filler_vocab=100,
                     topics_per_post=3, responses_per_bag=3, seed=0)
PIPELINE_OVERRIDES = dict(seed=0)


def _strip(ids):
    return [t for t in ids if t > 3]


class PipelineRun:
    """Synthetic corpus, the pretrained snapshot, and the RL-trained model."""

    def __init__(self, root):
        spec = synthetic.SynthSpec(**PIPELINE_SPEC)
        self.paths = synthetic.write_corpus_files(spec, root / "data")

        def streams():
            for _ln, post, responses in iter_corpus_lines(self.paths["train"]):
                yield tokenize(post)
                for r in responses:
                    yield tokenize(r)

        self.vocab = Vocabulary.from_streams(streams(), 2000)
        overrides = dict(PIPELINE_OVERRIDES,
                         stopwords_path=str(self.paths["stopwords"]),
                         train_corpus=str(self.paths["train"]),
                         test_corpus=str(self.paths["test"]))
        self.cfg = build_config(overrides=overrides)
        self.session = Session.fresh(self.cfg, self.vocab)
        self.train = self.session.load_split(self.paths["train"])
        self.test = self.session.load_split(self.paths["test"])
        oracle = load_oracle(self.paths["oracle"])
        attach_gold(self.train, oracle, self.vocab)
        attach_gold(self.test, oracle, self.vocab)

        trainer = self.session.trainer
        trainer.pretrain_inference(self.train, self.cfg.pretrain_infer_epochs)
        trainer.pretrain_generation(self.train, self.cfg.pretrain_gen_epochs)
        self.pretrain_ckpt = root / "pretrain.ckpt"
        self.session.save(self.pretrain_ckpt)
        self.rl_stats = trainer.train_rl(self.train, valid_bags=None,
                                         epochs=self.cfg.rl_epochs,
                                         patience=None)
        self.rl_ckpt = root / "rl.ckpt"
        self.session.save(self.rl_ckpt)

        self.rl_responses = self._decode_with(self.session)
        self.rl_latents = [latents for latents, _ in self.rl_responses]
        pretrain_session = Session.from_checkpoint(self.pretrain_ckpt)
        self.pretrain_responses = self._decode_with(pretrain_session)

    def _decode_with(self, session):
        return [session.respond(bag.post, idx)
                for idx, bag in enumerate(self.test)]

    def top1_repeated(self):
        """K copies of the best beam response for the argmax latent word."""
        out = []
        with ad.no_grad():
            for bag in self.test:
                z = int(np.argmax(self.session.infer.latent_distribution(bag.post)))
                hyps = self.session.gen.beam_decode(bag.post, z,
                                                    self.cfg.beam_width,
                                                    self.cfg.max_len)
                resp = _strip(list(hyps[0].tokens))
                out.append([resp] * self.cfg.decode_k)
        return out

    def template_tokens(self, z: int) -> list[str]:
        topic = self.vocab.decode([int(z)])[0]
        return ["re", topic, "s" + topic[1:]]

    def stripped(self, ids) -> list[int]:
        return _strip(ids)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    return PipelineRun(tmp_path_factory.mktemp("pipeline"))
