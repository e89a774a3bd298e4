"""BLEU, distinct-n, and report assembly against hand and brute-force oracles."""

import math

import numpy as np
import pytest

from kreply.errors import ContractError, CorpusFormatError
from kreply.metrics import (METRIC_KEYS, bleu_n, distinct_n, evaluate_run,
                            ngrams)


def brute_bleu(cand, refs, n):
    """Independent literal transcription of the metric definition."""
    cand = list(cand)
    if not cand:
        return 0.0
    logs = []
    for k in range(1, n + 1):
        grams = [tuple(cand[i:i + k]) for i in range(len(cand) - k + 1)]
        matched = 0
        for g in set(grams):
            best = max(sum(1 for i in range(len(r) - k + 1)
                           if tuple(r[i:i + k]) == g) for r in refs)
            matched += min(grams.count(g), best)
        logs.append(math.log((matched if matched else 1e-9) / max(len(grams), 1)))
    precision = math.exp(sum(logs) / n)
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * precision


class TestBleu:
    def test_two_gram_hand_value(self):
        # p1 = 2/3, p2 = 1/2, BP = 1
        got = bleu_n(["a", "b", "c"], [["a", "b", "d"]], 2)
        assert got == pytest.approx(math.sqrt(2 / 3 * 1 / 2), abs=1e-9)

    def test_exact_match_is_one_for_all_orders(self):
        cand = ["a", "b", "c", "d"]
        for n in range(1, 5):
            assert bleu_n(cand, [["x", "y"], cand], n) == pytest.approx(1.0)

    def test_disjoint_candidate_is_epsilon_level(self):
        assert bleu_n(["x", "y"], [["a", "b"]], 1) < 1e-6

    def test_empty_candidate_is_zero(self):
        assert bleu_n([], [["a"]], 1) == 0.0

    def test_brevity_penalty_hand_value(self):
        # c = 1 against closest reference length 4: BP = e^(1-4), p1 = 1
        got = bleu_n(["a"], [["a", "b", "c", "d"]], 1)
        assert got == pytest.approx(math.exp(-3.0), rel=1e-12)

    def test_closest_reference_length_sets_penalty(self):
        # lengths 1 and 3 tie in distance to c=2; the shorter wins, BP = 1
        got = bleu_n(["a", "b"], [["x"], ["a", "b", "c"]], 2)
        assert got == pytest.approx(1.0)

    def test_clipping_takes_max_over_references(self):
        assert bleu_n(["a", "a", "b"], [["a", "a"], ["a", "b"]], 1) \
            == pytest.approx(1.0)
        assert bleu_n(["a", "a", "b"], [["a", "b"]], 1) == pytest.approx(2 / 3)

    def test_monotone_in_order_while_matches_exist(self):
        cand = ["a", "b", "c", "d"]
        refs = [["a", "b", "c", "x", "d"]]
        scores = [bleu_n(cand, refs, n) for n in (1, 2, 3)]
        assert scores[0] >= scores[1] >= scores[2]

    def test_rejects_bad_order_and_empty_references(self):
        for n in (0, 5):
            with pytest.raises(ContractError):
                bleu_n(["a"], [["a"]], n)
        with pytest.raises(ContractError):
            bleu_n(["a"], [], 1)

    def test_matches_brute_force_on_random_cases(self):
        rng = np.random.default_rng(0)
        alphabet = ["a", "b", "c", "d"]
        for _ in range(200):
            cand = [alphabet[i] for i in rng.integers(0, 4, rng.integers(1, 7))]
            refs = [[alphabet[i] for i in rng.integers(0, 4, rng.integers(1, 7))]
                    for _ in range(rng.integers(1, 4))]
            n = int(rng.integers(1, 5))
            assert bleu_n(cand, refs, n) == pytest.approx(
                brute_bleu(cand, refs, n), rel=1e-12), (cand, refs, n)


class TestDistinct:
    def test_single_repetitive_response(self):
        assert distinct_n([["a", "a", "a"]], 1) == pytest.approx(1 / 3)

    def test_hand_counts_over_two_responses(self):
        resp = [["a", "b"], ["a", "c"]]
        assert distinct_n(resp, 1) == pytest.approx(3 / 4)
        assert distinct_n(resp, 2) == pytest.approx(1.0)

    def test_duplicated_responses_shrink_the_ratio(self):
        assert distinct_n([["a", "b"]] * 3, 1) == pytest.approx(2 / 6)

    def test_all_distinct_tokens_give_one(self):
        assert distinct_n([["a", "b"], ["c", "d"]], 1) == 1.0

    def test_order_invariance(self):
        resp = [["a", "b"], ["c", "a"], ["b", "c"]]
        for n in (1, 2):
            assert distinct_n(resp, n) == distinct_n(list(reversed(resp)), n)

    def test_short_responses_contribute_no_ngrams(self):
        assert distinct_n([["a"]], 2) == 0.0
        # the lone bigram comes from the second response
        assert distinct_n([["a"], ["b", "c"]], 2) == pytest.approx(1.0)

    def test_empty_set_rejected(self):
        with pytest.raises(ContractError):
            distinct_n([], 1)

    def test_ngrams_enumeration(self):
        assert ngrams(["a", "b", "c"], 2) == [("a", "b"), ("b", "c")]
        assert ngrams(["a"], 2) == []


def run_records():
    refs = {
        "hello there": ["good day friend", "hello to you"],
        "how are you": ["i am fine", "doing well now"],
    }
    results = [
        {"post": "hello there", "latents": ["day"],
         "responses": ["good day friend", "hello to you", "good day friend"]},
        {"post": "how are you", "latents": ["fine"],
         "responses": ["i am fine", "i am fine", "i am fine"]},
    ]
    return results, refs


class TestEvaluateRun:
    def test_verbatim_copies_score_bleu_one_hundred(self):
        results, refs = run_records()
        report = evaluate_run(results, refs)
        assert report.means["bleu_1"] == pytest.approx(100.0)

    def test_means_match_rows(self):
        results, refs = run_records()
        report = evaluate_run(results, refs)
        for key in METRIC_KEYS:
            want = sum(r[key] for r in report.rows) / len(report.rows)
            assert report.means[key] == pytest.approx(want, abs=1e-9)
            assert 0.0 <= report.means[key] <= 100.0

    def test_distinct_row_hand_value(self):
        results, refs = run_records()
        report = evaluate_run(results, refs)
        # three copies of a 3-token response: 3 distinct unigrams of 9
        by_post = {r["post"]: r for r in report.rows}
        assert by_post["how are you"]["distinct_1"] == pytest.approx(100 / 3)

    def test_top_k_limits_the_response_set(self):
        results, refs = run_records()
        results[1]["responses"] = ["i am fine"] * 2 + ["doing well now"] * 3
        report = evaluate_run(results, refs, top_k=2)
        by_post = {r["post"]: r for r in report.rows}
        assert by_post["how are you"]["distinct_1"] == pytest.approx(100 / 2)
        assert report.counts["responses_per_post"] == 2

    def test_unmatched_post_is_an_error_naming_it(self):
        results, refs = run_records()
        results.append({"post": "mystery post", "latents": [],
                        "responses": ["zzz"]})
        with pytest.raises(CorpusFormatError, match="mystery post"):
            evaluate_run(results, refs)

    def test_no_results_rejected(self):
        with pytest.raises(ContractError):
            evaluate_run([], {})

    def test_report_text_and_json_shapes(self):
        results, refs = run_records()
        report = evaluate_run(results, refs, config_echo={"seed": 7})
        text = report.to_text()
        for key in METRIC_KEYS:
            assert key in text
        data = report.to_dict()
        assert data["config"] == {"seed": 7}
        assert data["counts"]["posts"] == 2
        assert "posts evaluated: 2" in text
