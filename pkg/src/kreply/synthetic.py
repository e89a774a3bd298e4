"""Synthetic short-text corpus with known latent topic words.

Every post interleaves topic words (t00, t01, ...) with filler words
(f00, f01, ...); every response follows the template

    re <topic> <suffix-of-topic>

so a reader who knows the topic can reconstruct the reply exactly.  The
generator also writes the gold topics per post (the oracle) and a
stopword list covering fillers, the template prefix, and the suffixes,
which leaves the topic words as the only keywords a post/response pair
shares.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from . import corpus as C

TEMPLATE_PREFIX = "re"


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic corpus."""

    bags: int = 2000
    topic_vocab: int = 50
    filler_vocab: int = 100
    topics_per_post: int = 3
    responses_per_bag: int = 3
    seed: int = 0

    def __post_init__(self):
        if min(self.bags, self.topic_vocab, self.filler_vocab,
               self.topics_per_post, self.responses_per_bag) <= 0:
            raise ContractError("all synthetic corpus sizes must be positive")
        if self.topics_per_post > self.topic_vocab:
            raise ContractError(
                f"topics_per_post {self.topics_per_post} exceeds "
                f"topic_vocab {self.topic_vocab}"
            )


def _width(n: int) -> int:
    return max(2, len(str(n - 1)))


def topic_word(i: int, spec: SynthSpec) -> str:
    return f"t{i:0{_width(spec.topic_vocab)}d}"


def filler_word(j: int, spec: SynthSpec) -> str:
    return f"f{j:0{_width(spec.filler_vocab)}d}"


def suffix_word(i: int, spec: SynthSpec) -> str:
    return f"s{i:0{_width(spec.topic_vocab)}d}"


def response_for_topic(i: int, spec: SynthSpec) -> str:
    return f"{TEMPLATE_PREFIX} {topic_word(i, spec)} {suffix_word(i, spec)}"


def generate(spec: SynthSpec) -> list[tuple[str, list[str], list[str]]]:
    """Draw the corpus: (post, responses, gold topic words) per bag.

    Posts interleave fillers around topics (f t f t ... f) so topic words
    never touch, and each response keys on one of the post's topics in
    order.  Fully determined by spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.bags):
        topic_ids = rng.choice(spec.topic_vocab, size=spec.topics_per_post, replace=False)
        filler_ids = rng.integers(0, spec.filler_vocab, size=spec.topics_per_post + 1)
        words = [filler_word(int(filler_ids[0]), spec)]
        for k, t in enumerate(topic_ids):
            words.append(topic_word(int(t), spec))
            words.append(filler_word(int(filler_ids[k + 1]), spec))
        post = " ".join(words)
        responses = [
            response_for_topic(int(topic_ids[k % spec.topics_per_post]), spec)
            for k in range(spec.responses_per_bag)
        ]
        topics = [topic_word(int(t), spec) for t in topic_ids]
        out.append((post, responses, topics))
    return out


def stopwords(spec: SynthSpec) -> list[str]:
    """Everything except the topic words: fillers, prefix, suffixes."""
    words = [filler_word(j, spec) for j in range(spec.filler_vocab)]
    words.append(TEMPLATE_PREFIX)
    words.extend(suffix_word(i, spec) for i in range(spec.topic_vocab))
    return words


def write_corpus_files(spec: SynthSpec, out_dir,
                       split: tuple[float, float] = (0.8, 0.1)) -> dict[str, str]:
    """Write train/valid/test corpora, the oracle, and the stopword list.

    Returns the paths keyed by role.  Split is (train fraction, valid
    fraction); the remainder is the test set.
    """
    if not 0 < split[0] + split[1] < 1:
        raise ContractError(f"train+valid fractions must fall in (0, 1), got {split}")
    os.makedirs(out_dir, exist_ok=True)
    rows = generate(spec)
    n_train = int(round(spec.bags * split[0]))
    n_valid = int(round(spec.bags * split[1]))
    parts = {
        "train": rows[:n_train],
        "valid": rows[n_train:n_train + n_valid],
        "test": rows[n_train + n_valid:],
    }
    paths: dict[str, str] = {}
    for name, part in parts.items():
        path = os.path.join(out_dir, f"{name}.jsonl")
        C.write_corpus(path, [(post, responses) for post, responses, _ in part])
        paths[name] = path

    oracle_path = os.path.join(out_dir, "oracle.jsonl")
    with open(oracle_path, "w", encoding="utf-8") as fh:
        for post, _responses, topics in rows:
            fh.write(json.dumps({"post": post, "topics": topics}, ensure_ascii=False))
            fh.write("\n")
    paths["oracle"] = oracle_path

    stop_path = os.path.join(out_dir, "stopwords.txt")
    with open(stop_path, "w", encoding="utf-8") as fh:
        for w in stopwords(spec):
            fh.write(w + "\n")
    paths["stopwords"] = stop_path
    return paths
