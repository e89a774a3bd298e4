"""Tokenization, vocabulary, and 1-to-n bag assembly.

A bag is one post with every reply observed for it.  Corpus files are
UTF-8 JSON Lines, one object per line:

    {"post": "...", "responses": ["...", "..."]}

Oracle files (synthetic corpora only) carry the gold latent words:

    {"post": "...", "topics": ["...", "..."]}

Vocabulary files are plain text, one token per line; line number = id - 4
because ids 0..3 are reserved for PAD/UNK/BOS/EOS.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ContractError, CorpusFormatError

log = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED_IDS = (PAD, UNK, BOS, EOS)
RESERVED_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>")
N_RESERVED = 4

DEFAULT_MAX_LEN = 30

_TERMINAL_PUNCT = frozenset(".!?,;:")
_URL_RE = re.compile(r"https?://\S+|www\.\S+")
_HASHTAG_RE = re.compile(r"#\w+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel terminal punctuation."""
    out: list[str] = []
    for raw in text.lower().split():
        tail: list[str] = []
        while len(raw) > 1 and raw[-1] in _TERMINAL_PUNCT:
            tail.append(raw[-1])
            raw = raw[:-1]
        out.append(raw)
        out.extend(reversed(tail))
    return out


def clean_text(text: str, profile: str = "desk") -> str:
    """Trivial regex cleanup; the "paper" profile strips links and hashtags."""
    if profile == "paper":
        text = _URL_RE.sub(" ", text)
        text = _HASHTAG_RE.sub(" ", text)
    return text


class Vocabulary:
    """Token<->id mapping with reserved ids 0..3; doubles as the latent space."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(RESERVED_TOKENS) + [t for t in tokens if t not in RESERVED_TOKENS]
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ContractError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_streams(cls, streams: Iterable[Sequence[str]], max_size: int) -> "Vocabulary":
        """Keep the most frequent tokens, ties broken by first occurrence."""
        if max_size <= N_RESERVED:
            raise ContractError(f"max_size must exceed {N_RESERVED}, got {max_size}")
        counts: dict[str, int] = {}
        for stream in streams:
            for tok in stream:
                if tok in RESERVED_TOKENS:
                    continue
                counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts, key=lambda t: -counts[t])  # sort is stable: ties keep first-seen order
        return cls(ranked[: max_size - N_RESERVED])

    def encode_token(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._ids.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        """Id sequence back to tokens; PAD is never emitted."""
        out = []
        for i in ids:
            if i == PAD:
                continue
            if not 0 <= i < len(self.tokens):
                raise ContractError(f"id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[i])
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens[N_RESERVED:]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


@dataclass
class Bag:
    """One post with its full reply set, encoded against a vocabulary."""

    post: list[int]
    responses: list[list[int]]
    post_text: str = ""
    response_texts: list[str] = field(default_factory=list)
    gold_latents: list[int] | None = None


def encode_sequence(tokens: Sequence[str], vocab: Vocabulary,
                    max_len: int = DEFAULT_MAX_LEN) -> list[int]:
    """Encode and terminate with EOS; truncate to max_len ids, EOS preserved."""
    ids = vocab.encode(tokens)
    if len(ids) > max_len - 1:
        ids = ids[: max_len - 1]
    ids.append(EOS)
    return ids


def iter_corpus_lines(path):
    """Yield (line_number, post, responses) from a corpus file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict) or "post" not in obj or "responses" not in obj:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected object with 'post' and 'responses'"
                )
            post = obj["post"]
            responses = obj["responses"]
            if not isinstance(post, str) or not isinstance(responses, list) or any(
                not isinstance(r, str) for r in responses
            ):
                raise CorpusFormatError(f"{path}:{lineno}: wrong field types")
            yield lineno, post, responses


def load_bags(path, vocab: Vocabulary, min_response_chars: int = 0,
              max_len: int = DEFAULT_MAX_LEN, profile: str = "desk") -> list[Bag]:
    """Read a corpus file into bags.

    Lines with identical (tokenized) posts merge into one bag; duplicate
    responses are dropped, as are responses whose raw text is shorter than
    min_response_chars.  Bags left with no responses are dropped and
    counted in the log.
    """
    by_post: dict[tuple[int, ...], Bag] = {}
    seen_resp: dict[tuple[int, ...], set[tuple[int, ...]]] = {}
    dropped_short = 0
    for _lineno, post_raw, responses in iter_corpus_lines(path):
        post_tokens = tokenize(clean_text(post_raw, profile))
        post_ids = encode_sequence(post_tokens, vocab, max_len)
        key = tuple(post_ids)
        bag = by_post.get(key)
        if bag is None:
            bag = Bag(post=post_ids, responses=[], post_text=post_raw, response_texts=[])
            by_post[key] = bag
            seen_resp[key] = set()
        for resp_raw in responses:
            if min_response_chars and len(resp_raw) < min_response_chars:
                dropped_short += 1
                continue
            resp_ids = encode_sequence(tokenize(clean_text(resp_raw, profile)), vocab, max_len)
            rkey = tuple(resp_ids)
            if rkey in seen_resp[key]:
                continue
            seen_resp[key].add(rkey)
            bag.responses.append(resp_ids)
            bag.response_texts.append(resp_raw)

    bags = [b for b in by_post.values() if b.responses]
    dropped_empty = len(by_post) - len(bags)
    if dropped_short or dropped_empty:
        log.info(
            "load_bags(%s): dropped %d short responses, %d empty bags",
            path, dropped_short, dropped_empty,
        )
    return bags


def write_corpus(path, records: Iterable[tuple[str, list[str]]]) -> None:
    """Write (post, responses) pairs as a corpus file."""
    with open(path, "w", encoding="utf-8") as fh:
        for post, responses in records:
            fh.write(json.dumps({"post": post, "responses": responses}, ensure_ascii=False))
            fh.write("\n")


def load_oracle(path) -> list[tuple[str, list[str]]]:
    """Read an oracle file into (post, topics) pairs."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if "post" not in obj or "topics" not in obj:
                raise CorpusFormatError(f"{path}:{lineno}: expected 'post' and 'topics'")
            out.append((obj["post"], list(obj["topics"])))
    return out


def attach_gold(bags: Sequence[Bag], oracle: Sequence[tuple[str, list[str]]],
                vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> None:
    """Fill Bag.gold_latents from an oracle file, matching on the post."""
    by_post = {tuple(encode_sequence(tokenize(p), vocab, max_len)): topics
               for p, topics in oracle}
    for bag in bags:
        topics = by_post.get(tuple(bag.post))
        if topics is not None:
            ids = [vocab.encode_token(t) for t in topics]
            bag.gold_latents = [i for i in ids if i not in RESERVED_IDS]


def load_stopwords(path) -> set[str]:
    """Stopword file: plain text, one token per line."""
    with open(path, encoding="utf-8") as fh:
        return {line.strip() for line in fh if line.strip()}


# Small built-in default used when no stopword file is supplied.
DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have i in is it its me my of on
    or our so that the their them they this to was we were what when who will
    with you your don't it's i'm . ! ? , ; :""".split()
)
