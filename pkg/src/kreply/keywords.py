"""Unsupervised single-word keyword extraction and candidate sets.

RAKE-style scoring restricted to unigrams: candidate phrases are the
maximal stopword-free runs of a sequence, each word in a phrase of
length L gains L co-occurrence degree (itself included), and the final
score is degree(w) / frequency(w).  Extraction supplies both the
pretraining labels for the inference network (keywords of the post
alone) and the per-bag candidate set of latent words (keywords of the
post and of every response).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .corpus import Bag, RESERVED_IDS
from .errors import ContractError

DEFAULT_TOP_M = 10


@dataclass(frozen=True)
class ScoredKeyword:
    token: Hashable
    score: float


@dataclass
class CandidateSet:
    """Restricted latent space of one bag; probabilities filled by the trainer."""

    bag: Bag
    candidates: list[int]
    probs: np.ndarray | None = field(default=None, compare=False)


def extract_keywords(tokens: Sequence[Hashable], stopwords: set,
                     top_m: int = DEFAULT_TOP_M) -> list[ScoredKeyword]:
    """Top-m content words by degree/frequency, ties by first occurrence."""
    phrases: list[list[Hashable]] = []
    run: list[Hashable] = []
    for tok in tokens:
        if tok in stopwords:
            if run:
                phrases.append(run)
                run = []
        else:
            run.append(tok)
    if run:
        phrases.append(run)

    freq: dict[Hashable, int] = {}
    degree: dict[Hashable, int] = {}
    first: dict[Hashable, int] = {}
    pos = 0
    for phrase in phrases:
        for tok in phrase:
            freq[tok] = freq.get(tok, 0) + 1
            degree[tok] = degree.get(tok, 0) + len(phrase)
            if tok not in first:
                first[tok] = pos
            pos += 1

    ranked = sorted(freq, key=lambda t: (-degree[t] / freq[t], first[t]))
    return [ScoredKeyword(t, degree[t] / freq[t]) for t in ranked[:top_m]]


def _id_stop_set(stopword_ids: set[int]) -> set[int]:
    return set(stopword_ids) | set(RESERVED_IDS)


def post_keyword_ids(bag: Bag, stopword_ids: set[int],
                     top_m: int = DEFAULT_TOP_M) -> list[int]:
    """Keyword ids of the post alone (the pretraining labels)."""
    stops = _id_stop_set(stopword_ids)
    return [int(kw.token) for kw in extract_keywords(bag.post, stops, top_m)]


def build_candidate_set(bag: Bag, stopword_ids: set[int],
                        top_m: int = DEFAULT_TOP_M) -> CandidateSet:
    """Candidate latent words: keywords of the post and of every response.

    Falls back to the post's non-stopword tokens when extraction finds
    nothing, then to the post's non-reserved tokens.  A post made solely
    of reserved tokens is malformed.
    """
    stops = _id_stop_set(stopword_ids)
    ids: set[int] = set()
    for seq in [bag.post] + bag.responses:
        ids.update(int(kw.token) for kw in extract_keywords(seq, stops, top_m))
    if not ids:
        ids = {t for t in bag.post if t not in stops}
    if not ids:
        ids = {t for t in bag.post if t not in RESERVED_IDS}
    if not ids:
        raise ContractError("post contains only reserved tokens; no candidates possible")
    return CandidateSet(bag=bag, candidates=sorted(ids))
