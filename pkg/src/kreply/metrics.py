"""Automatic evaluation: multi-reference BLEU and distinct-n, plus reports.

BLEU here is sentence-level with per-reference clipping, epsilon-smoothed
modified precisions (a zero match count enters the geometric mean as
1e-9), and a brevity penalty against the closest reference length.
distinct-n is the fraction of distinct n-grams across the multiset of
one post's K responses.  Reports average per-post rows and scale
everything by 100.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import tokenize
from .errors import ContractError, CorpusFormatError

EPSILON = 1e-9


def ngrams(tokens, n: int) -> list[tuple]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu_n(candidate, references, n: int) -> float:
    """Smoothed sentence BLEU of order n in [0, 1]."""
    if not 1 <= n <= 4:
        raise ContractError(f"BLEU order must be in 1..4, got {n}")
    if not references:
        raise ContractError("BLEU needs at least one reference")
    candidate = list(candidate)
    if not candidate:
        return 0.0

    log_sum = 0.0
    for k in range(1, n + 1):
        cand_counts = Counter(ngrams(candidate, k))
        total = max(len(candidate) - k + 1, 0)
        clip: Counter = Counter()
        for ref in references:
            for gram, cnt in Counter(ngrams(ref, k)).items():
                clip[gram] = max(clip[gram], cnt)
        matched = sum(min(cnt, clip[gram]) for gram, cnt in cand_counts.items())
        numerator = matched if matched > 0 else EPSILON
        log_sum += math.log(numerator / max(total, 1))
    precision = math.exp(log_sum / n)

    c = len(candidate)
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * precision


def distinct_n(responses, n: int) -> float:
    """Distinct n-grams over the pooled responses of one post, in [0, 1]."""
    if not responses:
        raise ContractError("distinct_n needs a non-empty response set")
    seen: set = set()
    total = 0
    for resp in responses:
        grams = ngrams(list(resp), n)
        total += len(grams)
        seen.update(grams)
    return len(seen) / total if total else 0.0


METRIC_KEYS = ("bleu_1", "bleu_2", "bleu_3", "bleu_4", "distinct_1", "distinct_2")

# Worked examples, each value derived by hand from the definitions above.
# Layout: (candidate, references, n, value).
BLEU_HAND_EXAMPLES = (
    # two of three unigrams covered; candidate not shorter, so no penalty
    (("a", "a", "b"), (("a", "b", "c"),), 1, 2.0 / 3.0),
    # p1 = 2/3 and p2 = 1/2; the geometric mean is sqrt(1/3)
    (("a", "b", "a"), (("a", "b"),), 2, (1.0 / 3.0) ** 0.5),
    # perfect unigram precision, length 1 against closest reference 3
    (("x",), (("x", "y", "z"),), 1, math.exp(1.0 - 3.0)),
    # zero overlap: the smoothed precision is exactly the epsilon
    (("q",), (("x",),), 1, EPSILON),
    # clipping takes the per-reference maximum count (2, second reference)
    (("a", "a"), (("a",), ("a", "a", "x")), 1, 1.0),
)

# Layout: (responses, n, value).
DISTINCT_HAND_EXAMPLES = (
    # unigrams a b a c: three distinct of four
    ((("a", "b"), ("a", "c")), 1, 3.0 / 4.0),
    # bigrams ab ba ab: two distinct of three
    ((("a", "b", "a"), ("a", "b")), 2, 2.0 / 3.0),
    # bigrams aa aa: one distinct of two
    ((("a", "a", "a"),), 2, 1.0 / 2.0),
)


@dataclass
class EvalReport:
    means: dict[str, float]
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"means": self.means, "counts": self.counts,
                "config": self.config, "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = ["metric        mean", "-" * 20]
        for key in METRIC_KEYS:
            lines.append(f"{key:<12}{self.means[key]:>8.3f}")
        lines.append("-" * 20)
        lines.append(f"posts evaluated: {self.counts.get('posts', 0)}")
        return "\n".join(lines)


def evaluate_run(results, reference_bags: dict[str, list[str]], top_k: int = 3,
                 config_echo: dict | None = None) -> EvalReport:
    """Score generation results against reference bags.

    results: iterable of {"post": str, "latents": [...], "responses": [str, ...]}
    reference_bags: post string -> list of reference response strings.
    Per post, each of the first top_k responses is BLEU-scored against all
    references and distinct-n is computed over that response set; rows and
    means are scaled by 100.
    """
    rows = []
    missing = []
    for rec in results:
        post = rec["post"]
        refs_raw = reference_bags.get(post)
        if refs_raw is None:
            missing.append(post)
            continue
        refs = [tokenize(r) for r in refs_raw]
        taken = [tokenize(r) for r in rec["responses"][:top_k]]
        if not taken:
            raise ContractError(f"no responses to evaluate for post {post!r}")
        row = {"post": post}
        for n in range(1, 5):
            row[f"bleu_{n}"] = 100.0 * sum(bleu_n(c, refs, n) for c in taken) / len(taken)
        row["distinct_1"] = 100.0 * distinct_n(taken, 1)
        row["distinct_2"] = 100.0 * distinct_n(taken, 2)
        rows.append(row)
    if missing:
        shown = ", ".join(repr(p) for p in missing[:5])
        raise CorpusFormatError(
            f"{len(missing)} result posts have no reference bag: {shown}"
        )
    if not rows:
        raise ContractError("no results to evaluate")
    means = {key: sum(r[key] for r in rows) / len(rows) for key in METRIC_KEYS}
    return EvalReport(means=means, rows=rows, config=config_echo or {},
                      counts={"posts": len(rows), "responses_per_post": top_k})
