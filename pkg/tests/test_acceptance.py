"""Acceptance suite: the ten headline checks, one printed verdict line each.

Criteria C5 through C8 share one trained synthetic pipeline (the session
fixture in conftest); everything else runs on throwaway tiny networks.
Tolerances are pinned next to each check.
"""

import math
import time
from collections import Counter

import numpy as np
import pytest

from kreply import autodiff as ad
from kreply.corpus import EOS, Bag
from kreply.generation import GenerationNet
from kreply.inference import InferenceNet
from kreply.metrics import (BLEU_HAND_EXAMPLES, DISTINCT_HAND_EXAMPLES,
                            bleu_n, distinct_n)
from kreply.params import ParameterStore
from kreply.training import policy_gradient_estimate, reward_bag, reward_single

from test_metrics import brute_bleu


def verdict(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[C{num}] {'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    assert ok, line


def tiny_nets(seed: int):
    store_i, store_g = ParameterStore(np.float64), ParameterStore(np.float64)
    rng = np.random.default_rng(seed)
    infer = InferenceNet(store_i, 12, 3, 2, 4, rng=rng)
    gen = GenerationNet(store_g, 12, 3, 2, rng=rng)
    return store_i, infer, store_g, gen


def words(rng, low=4, high=12, min_len=1, max_len=3) -> list[int]:
    return rng.integers(low, high, size=rng.integers(min_len, max_len + 1)).tolist()


def fd_check(store, loss_fn) -> float:
    """Worst relative error between backprop and central differences."""
    leaves = store.tensors()
    store.zero_grad()
    ad.backward(loss_fn())
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in leaves]
    numeric = ad.finite_difference_gradients(lambda: loss_fn().item(), leaves,
                                             step=1e-3)
    return max(ad.gradient_error(a, n) for a, n in zip(analytic, numeric))


def test_c01_gradient_correctness():
    # 20 seeds, four losses, hidden 2 <= 8, vocab 12; rel err < 1e-4, < 60 s
    start = time.monotonic()
    worst = 0.0
    for seed in range(20):
        _, infer, store_g, gen = tiny_nets(seed)
        store_i = infer.store
        rng = np.random.default_rng(1000 + seed)
        post = words(rng, min_len=2, max_len=4)
        keywords = words(rng, min_len=1, max_len=2)
        bag = Bag(post=post,
                  responses=[words(rng) + [EOS], words(rng) + [EOS]])
        z = int(rng.integers(4, 12))

        checks = [
            (store_i, lambda: infer.pretrain_loss(post, keywords)),
            (store_g, lambda: gen.response_nll(bag.responses[0], post, z)),
            (store_g, lambda: gen.bag_loss(bag, z, "avg")),
            (store_g, lambda: gen.bag_loss(bag, z, "min")),
        ]
        for store, loss_fn in checks:
            worst = max(worst, fd_check(store, loss_fn))
    elapsed = time.monotonic() - start
    ok = worst < 1e-4 and elapsed < 60.0
    verdict(1, "gradient correctness", ok,
            f"max rel err {worst:.2e} over 20 seeds x 4 losses "
            f"(limit 1e-4), {elapsed:.1f}s")


def test_c02_reinforce_unbiasedness():
    # 5 candidates, fixed rewards; 50k-sample mean within 3 SE of the exact
    # expectation on every component; < 60 s
    start = time.monotonic()
    _, infer, _, _ = tiny_nets(3)
    post = [4, 7, 5]
    candidates = [4, 5, 6, 7, 8]
    table = {4: 1.0, 5: 0.5, 6: -1.0, 7: 0.25, 8: 0.0}
    reward_fn = table.__getitem__

    exact = policy_gradient_estimate(infer, post, candidates, reward_fn,
                                     n_samples=0, seed=0, exact=True)
    mc, se = policy_gradient_estimate(infer, post, candidates, reward_fn,
                                      n_samples=50_000, seed=12345,
                                      return_se=True)
    worst_z = 0.0
    n_components = 0
    ok = True
    for name in exact:
        diff = np.abs(mc[name] - exact[name])
        dead = se[name] == 0.0
        ok = ok and bool(np.all(diff[dead] < 1e-12))
        live = ~dead
        if live.any():
            z = diff[live] / se[name][live]
            worst_z = max(worst_z, float(z.max()))
        n_components += diff.size
    elapsed = time.monotonic() - start
    ok = ok and worst_z < 3.0 and elapsed < 60.0
    verdict(2, "policy-gradient unbiasedness", ok,
            f"max |mc-exact|/se {worst_z:.2f} over {n_components} components "
            f"(limit 3), {elapsed:.1f}s")


def test_c03_reward_contract():
    # 10k random pairs: range, 1.0 iff equal multisets, -1 iff no overlap,
    # and the max-mode bag reward never below the avg-mode one
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    specials = (0, 2, 3)
    ones = negs = 0
    for i in range(10_000):
        y = words(rng, max_len=5)
        kind = i % 4
        if kind == 0:
            y_hat = [int(t) for t in rng.permutation(y)]
        elif kind == 1:
            y = words(rng, high=8, max_len=5)
            y_hat = words(rng, low=8, max_len=5)
        else:
            y_hat = words(rng, max_len=5)
        if kind == 3:  # specials must not affect the score
            y_hat = y_hat + [3]
            y = [2] + y

        r = reward_single(y, y_hat)
        assert r == -1.0 or 0.0 <= r <= 1.0, (y, y_hat, r)
        a = Counter(t for t in y if t not in specials)
        b = Counter(t for t in y_hat if t not in specials)
        equal = a == b
        overlap = sum((a & b).values()) > 0
        assert (r == 1.0) == equal, (y, y_hat, r)
        assert (r == -1.0) == (not overlap), (y, y_hat, r)
        ones += r == 1.0
        negs += r == -1.0

        bag = [words(rng, max_len=5) for _ in range(rng.integers(1, 5))]
        probe = words(rng, max_len=5)
        avg = reward_bag(bag, probe, "avg")
        top = reward_bag(bag, probe, "max")
        assert top >= avg - 1e-12, (bag, probe, avg, top)
    elapsed = time.monotonic() - start
    ok = ones >= 1000 and negs >= 1000 and elapsed < 30.0
    verdict(3, "reward contract", ok,
            f"10000 pairs, {ones} exact matches, {negs} disjoint, "
            f"max >= avg throughout, {elapsed:.1f}s")


def test_c04_bag_loss_ordering():
    # 1k random bags: L_min <= L_avg, equal on single-response bags
    start = time.monotonic()
    worst_gap = -np.inf
    singles = 0
    with ad.no_grad():
        for i in range(1000):
            if i % 50 == 0:
                _, _, _, gen = tiny_nets(100 + i)
            rng = np.random.default_rng(5000 + i)
            bag = Bag(post=words(rng, min_len=2, max_len=4),
                      responses=[words(rng) + [EOS]
                                 for _ in range(rng.integers(1, 5))])
            z = int(rng.integers(4, 12))
            lo = gen.bag_loss(bag, z, "min").item()
            hi = gen.bag_loss(bag, z, "avg").item()
            worst_gap = max(worst_gap, lo - hi)
            if len(bag.responses) == 1:
                singles += 1
                assert lo == pytest.approx(hi, rel=1e-12), (i, lo, hi)
            else:
                assert lo <= hi + 1e-9, (i, lo, hi)
    elapsed = time.monotonic() - start
    ok = singles >= 100 and worst_gap <= 1e-9 and elapsed < 60.0
    verdict(4, "bag-loss ordering", ok,
            f"1000 bags, max(L_min - L_avg) {worst_gap:.2e} (limit 1e-9), "
            f"{singles} single-response equalities, {elapsed:.1f}s")


def brute_distinct(responses, n):
    """Literal n-gram enumeration with list-based dedup."""
    grams = []
    for resp in responses:
        resp = list(resp)
        for i in range(len(resp) - n + 1):
            grams.append(tuple(resp[i:i + n]))
    uniq = []
    for g in grams:
        if g not in uniq:
            uniq.append(g)
    return len(uniq) / len(grams) if grams else 0.0


def test_c09_metric_oracles():
    # hand-computed values to 1e-9; 1k random cases against brute force
    start = time.monotonic()
    for cand, refs, n, value in BLEU_HAND_EXAMPLES:
        got = bleu_n(list(cand), [list(r) for r in refs], n)
        assert got == pytest.approx(value, abs=1e-9), (cand, refs, n, got)
    for responses, n, value in DISTINCT_HAND_EXAMPLES:
        got = distinct_n([list(r) for r in responses], n)
        assert got == pytest.approx(value, abs=1e-9), (responses, n, got)

    rng = np.random.default_rng(99)
    alphabet = list("abcde")
    for case in range(1000):
        cand = [alphabet[i] for i in rng.integers(0, 5, size=rng.integers(0, 7))]
        refs = [[alphabet[i] for i in rng.integers(0, 5, size=rng.integers(1, 7))]
                for _ in range(rng.integers(1, 4))]
        n = int(rng.integers(1, 5))
        assert bleu_n(cand, refs, n) == pytest.approx(
            brute_bleu(cand, refs, n), rel=1e-12), (case, cand, refs, n)
        assert distinct_n(refs, n) == pytest.approx(
            brute_distinct(refs, n), rel=1e-12), (case, refs, n)
    elapsed = time.monotonic() - start
    ok = elapsed < 30.0
    verdict(9, "metric oracles", ok,
            f"{len(BLEU_HAND_EXAMPLES) + len(DISTINCT_HAND_EXAMPLES)} hand "
            f"examples exact, 1000 brute-force agreements, {elapsed:.1f}s")
