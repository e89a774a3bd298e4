"""Pretraining, joint reinforcement training, and the bounded reward.

The inference network is pretrained on post keywords, the generation
network on the top inferred latent word with the avg bag loss.  Joint
training then alternates, per sampled latent word z: reward the greedy
response against the bag (bounded multiset F1), push the inference
network by REINFORCE on the candidate-restricted log-probability, and
push the generation network by backprop on the bag loss.  Both networks
step with Adam, per trial, mini-batched across bags.

Every random draw derives from (root seed, purpose, epoch, bag index),
so runs are reproducible and resumable from the epoch counters alone.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .corpus import Bag, BOS, EOS, PAD, RESERVED_IDS
from .errors import ContractError
from .generation import GenerationNet
from .inference import InferenceNet
from .keywords import build_candidate_set, post_keyword_ids
from .sampling import sample_training_latents

log = logging.getLogger(__name__)

_PURPOSE = {
    "init": 0,
    "pretrain_infer": 1,
    "pretrain_gen": 2,
    "rl_order": 3,
    "rl_sample": 4,
    "decode": 5,
}


def derive_seed(root: int, purpose: str, *indices: int) -> np.random.SeedSequence:
    """Named deterministic seed stream."""
    return np.random.SeedSequence([root, _PURPOSE[purpose], *indices])


def strip_special(ids) -> list[int]:
    return [i for i in ids if i not in (PAD, BOS, EOS)]


def reward_single(y, y_hat) -> float:
    """Bounded bag-of-tokens F1: -1 on zero overlap, else 2o/(|y|+|y_hat|)."""
    a = strip_special(y)
    b = strip_special(y_hat)
    ca, cb = Counter(a), Counter(b)
    o = sum(min(n, cb[w]) for w, n in ca.items() if w in cb)
    if o == 0:
        return -1.0
    return 2.0 * o / (len(a) + len(b))


def reward_bag(responses, y_hat, mode: str) -> float:
    """Mean (avg mode) or maximum (max mode) of reward_single over the bag."""
    if mode not in ("avg", "max"):
        raise ContractError(f"unknown reward mode {mode!r}")
    if not responses:
        raise ContractError("reward over an empty bag")
    rs = [reward_single(y, y_hat) for y in responses]
    return float(np.mean(rs)) if mode == "avg" else float(max(rs))


@dataclass
class EpochStats:
    epoch: int
    mean_reward: float
    mean_bag_loss: float
    mean_entropy: float
    wall_time: float

    def to_dict(self) -> dict:
        return asdict(self)


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def policy_gradient_estimate(infer: InferenceNet, x_ids, candidates, reward_fn,
                             n_samples: int, seed, exact: bool = False,
                             return_se: bool = False):
    """Gradient of E[R(z)] w.r.t. the inference parameters.

    Monte-Carlo form: mean over n_samples draws z ~ p(z|x) restricted to
    the candidates of R(z) * grad log p(z|x).  With exact=True the full
    expectation is enumerated instead.  return_se adds the per-component
    standard error of the Monte-Carlo mean.
    """
    candidates = list(candidates)
    probs = infer.restricted_probs(x_ids, candidates)
    rewards = np.array([reward_fn(z) for z in candidates], dtype=np.float64)

    names = [n for n in infer.store.names() if n.startswith("infer.")]
    per_cand: list[dict[str, np.ndarray]] = []
    for z in candidates:
        infer.store.zero_grad()
        ad.backward(infer.restricted_log_prob(x_ids, candidates, z))
        per_cand.append({
            n: (infer.store[n].grad.copy() if infer.store[n].grad is not None
                else np.zeros_like(infer.store[n].data))
            for n in names
        })
    infer.store.zero_grad()

    if exact:
        return {
            n: sum(probs[j] * rewards[j] * per_cand[j][n]
                   for j in range(len(candidates)))
            for n in names
        }

    counts = np.random.default_rng(seed).multinomial(n_samples, probs)
    estimate = {
        n: sum(counts[j] * rewards[j] * per_cand[j][n]
               for j in range(len(candidates))) / n_samples
        for n in names
    }
    if not return_se:
        return estimate
    se = {}
    for n in names:
        second = sum(counts[j] * (rewards[j] * per_cand[j][n]) ** 2
                     for j in range(len(candidates))) / n_samples
        var = np.maximum(second - estimate[n] ** 2, 0.0)
        se[n] = np.sqrt(var / n_samples)
    return estimate, se


class JointTrainer:
    """Drives both networks through pretraining and the joint RL loop."""

    def __init__(self, infer: InferenceNet, gen: GenerationNet, config,
                 stopword_ids: set[int], run_log=None):
        self.infer = infer
        self.gen = gen
        self.cfg = config
        self.stopword_ids = set(stopword_ids)
        self.run_log = run_log
        self.counters = {"pretrain_infer": 0, "pretrain_gen": 0, "align": 0,
                         "rl": 0}
        self._baseline = 0.0

    # -- pretraining ------------------------------------------------------

    def _pretrain_labels(self, bag: Bag) -> list[int]:
        """Post keywords, falling back to content then non-reserved tokens."""
        ids = post_keyword_ids(bag, self.stopword_ids, self.cfg.top_m)
        if not ids:
            stops = self.stopword_ids | set(RESERVED_IDS)
            ids = sorted({t for t in bag.post if t not in stops})
        if not ids:
            ids = sorted({t for t in bag.post if t not in RESERVED_IDS})
        return ids

    def _batches(self, n: int, order: np.ndarray):
        bs = self.cfg.batch_size
        for start in range(0, n, bs):
            yield order[start:start + bs]

    def pretrain_inference(self, bags, epochs: int) -> list[dict]:
        """Minimize mean keyword NLL with Adam; returns per-epoch stats."""
        if not bags:
            raise ContractError("cannot pretrain on an empty corpus")
        labels = [self._pretrain_labels(b) for b in bags]
        usable = [i for i, kw in enumerate(labels) if kw]
        if len(usable) < len(bags):
            log.info("pretrain_inference: skipping %d bags without labels",
                     len(bags) - len(usable))
        if not usable:
            raise ContractError("no bag yields pretraining keywords")
        stats = []
        for _ in range(epochs):
            epoch = self.counters["pretrain_infer"]
            t0 = time.perf_counter()
            rng = np.random.default_rng(derive_seed(self.cfg.seed, "pretrain_infer", epoch))
            order = rng.permutation(usable)
            total, count = 0.0, 0
            for batch in self._batches(len(order), order):
                losses = [self.infer.pretrain_loss(bags[i].post, labels[i])
                          for i in batch]
                loss = ad.mean_scalars(losses)
                ad.backward(loss)
                self.infer.store.adam_step(self.cfg.lr)
                total += loss.item() * len(batch)
                count += len(batch)
            stats.append({"epoch": epoch, "loss": total / count,
                          "wall_time": time.perf_counter() - t0})
            log.info("pretrain-infer epoch %d: loss %.4f", epoch, total / count)
            self.counters["pretrain_infer"] += 1
        return stats

    def inference_holdout_loss(self, bags) -> float:
        """Mean keyword NLL without updating anything."""
        vals = []
        with ad.no_grad():
            for bag in bags:
                kw = self._pretrain_labels(bag)
                if kw:
                    vals.append(self.infer.pretrain_loss(bag.post, kw).item())
        if not vals:
            raise ContractError("no bag yields pretraining keywords")
        return float(np.mean(vals))

    def _argmax_latents(self, bags) -> list[int]:
        return [int(np.argmax(self.infer.latent_distribution(b.post))) for b in bags]

    def pretrain_generation(self, bags, epochs: int) -> list[dict]:
        """Minimize avg bag loss at z = argmax p(z|x); inference net is frozen."""
        if not bags:
            raise ContractError("cannot pretrain on an empty corpus")
        zs = self._argmax_latents(bags)
        stats = []
        for _ in range(epochs):
            epoch = self.counters["pretrain_gen"]
            t0 = time.perf_counter()
            rng = np.random.default_rng(derive_seed(self.cfg.seed, "pretrain_gen", epoch))
            order = rng.permutation(len(bags))
            total, count = 0.0, 0
            for batch in self._batches(len(order), order):
                losses = [self.gen.bag_loss(bags[i], zs[i], "avg") for i in batch]
                loss = ad.mean_scalars(losses)
                ad.backward(loss)
                self.gen.store.adam_step(self.cfg.lr)
                total += loss.item() * len(batch)
                count += len(batch)
            stats.append({"epoch": epoch, "loss": total / count,
                          "wall_time": time.perf_counter() - t0})
            log.info("pretrain-gen epoch %d: loss %.4f", epoch, total / count)
            self.counters["pretrain_gen"] += 1
        return stats

    def generation_holdout_loss(self, bags) -> float:
        """Mean avg-mode bag loss at z = argmax p(z|x), no updates."""
        zs = self._argmax_latents(bags)
        with ad.no_grad():
            return float(np.mean([self.gen.bag_loss(b, z, "avg").item()
                                  for b, z in zip(bags, zs)]))

    def _label_index(self, response) -> int | None:
        """Position of a response's first content token; None when nothing qualifies."""
        stops = self.stopword_ids | set(RESERVED_IDS)
        for i, t in enumerate(response):
            if t not in stops:
                return i
        for i, t in enumerate(response):
            if t not in RESERVED_IDS:
                return i
        return None

    def align_generation(self, bags, epochs: int) -> list[dict]:
        """Condition each response opening on its own keyword.

        Bag-level pretraining leaves the generator free to ignore the latent
        word: averaging over members makes the optimal conditional identical
        for every latent, so the joint loop starts with nothing routing
        through the latent context and sharpens a latent-blind decoder
        instead. Pairing each response with the keyword extracted from it
        (the same extraction that labels inference pretraining) makes the
        target depend on the latent, which seeds the routing that min-mode
        bag loss then reinforces.

        Only the prefix up to and including the keyword is trained: routing
        needs the decoder to open with the right word, while everything
        after the keyword is the joint loop's job. config.align_batches
        caps each epoch at that many batches for the same reason; 0 means
        a full pass.
        """
        if not bags:
            raise ContractError("cannot align on an empty corpus")
        pairs = []
        for bi, bag in enumerate(bags):
            for ri, resp in enumerate(bag.responses):
                i = self._label_index(resp)
                if i is not None:
                    pairs.append((bi, ri, i))
        if not pairs:
            raise ContractError("no response yields an alignment keyword")
        stats = []
        for _ in range(epochs):
            epoch = self.counters["align"]
            t0 = time.perf_counter()
            # index 1 keeps these shuffles off the pretraining streams
            rng = np.random.default_rng(derive_seed(self.cfg.seed, "pretrain_gen",
                                                    epoch, 1))
            order = rng.permutation(len(pairs))
            cap = getattr(self.cfg, "align_batches", 0)
            total, count = 0.0, 0
            for step, batch in enumerate(self._batches(len(order), order)):
                if cap and step >= cap:
                    break
                encoded = {}
                losses = []
                for j in batch:
                    bi, ri, i = pairs[j]
                    resp = bags[bi].responses[ri]
                    if bi not in encoded:
                        encoded[bi] = self.gen.encode(bags[bi].post)
                    losses.append(self.gen.response_nll(
                        resp[:i + 1], encoded[bi], int(resp[i])))
                loss = ad.mean_scalars(losses)
                ad.backward(loss)
                self.gen.store.adam_step(self.cfg.lr)
                total += loss.item() * len(batch)
                count += len(batch)
            stats.append({"epoch": epoch, "loss": total / count,
                          "wall_time": time.perf_counter() - t0})
            log.info("align epoch %d: loss %.4f", epoch, total / count)
            self.counters["align"] += 1
        return stats

    # -- joint RL ---------------------------------------------------------

    def _bag_plan(self, bag: Bag, bag_index: int, epoch: int):
        """Candidates, restricted probs, entropy, and the trial latents of one bag."""
        cand = build_candidate_set(bag, self.stopword_ids, self.cfg.top_m).candidates
        with ad.no_grad():
            logits = self.infer.latent_logits(bag.post)
            enc = self.gen.encode(bag.post)
            vecs = np.stack([
                self.gen.latent_context(z, enc)[0].data.astype(np.float64)
                for z in cand
            ])
        full = ad.masked_softmax(logits, RESERVED_IDS)
        restricted = ad.masked_softmax(ad.gather(logits, cand))
        zs = sample_training_latents(
            cand, vecs, restricted, self.cfg.k_trials,
            derive_seed(self.cfg.seed, "rl_sample", epoch, bag_index),
            self.cfg.kmeans_k)
        return cand, restricted, _entropy(full), zs

    def rl_epoch(self, bags, update: bool = True,
                 epoch_index: int | None = None) -> EpochStats:
        """One pass of the joint loop; update=False scores without touching Θ."""
        if not bags:
            raise ContractError("cannot train on an empty corpus")
        epoch = self.counters["rl"] if epoch_index is None else epoch_index
        t0 = time.perf_counter()
        rng = np.random.default_rng(derive_seed(self.cfg.seed, "rl_order", epoch))
        order = rng.permutation(len(bags))
        rewards: list[float] = []
        bag_losses: list[float] = []
        entropies: list[float] = []
        skipped = 0
        for batch in self._batches(len(order), order):
            plans = {}
            for i in batch:
                try:
                    plans[i] = self._bag_plan(bags[i], int(i), epoch)
                except ContractError:
                    skipped += 1
            if not plans:
                continue
            entropies.extend(p[2] for p in plans.values())
            max_trials = max(len(p[3]) for p in plans.values())
            for k in range(max_trials):
                active = [i for i in plans if len(plans[i][3]) > k]
                if not active:
                    break
                terms = []
                batch_rewards = []
                for i in active:
                    cand, _probs, _ent, zs = plans[i]
                    z = zs[k]
                    if update:
                        enc = self.gen.encode(bags[i].post)
                    else:
                        with ad.no_grad():
                            enc = self.gen.encode(bags[i].post)
                    y_hat, _ = self.gen.greedy_decode(enc, z, self.cfg.max_len)
                    r = reward_bag(bags[i].responses, y_hat, self.cfg.reward_mode)
                    batch_rewards.append(r)
                    if update:
                        advantage = r - self._baseline if self.cfg.reward_baseline else r
                        log_p = self.infer.restricted_log_prob(bags[i].post, cand, z)
                        b_loss = self.gen.bag_loss(bags[i], z, self.cfg.loss_mode, enc=enc)
                        terms.append(ad.add(ad.scale(log_p, -advantage / len(active)),
                                            ad.scale(b_loss, 1.0 / len(active))))
                    else:
                        with ad.no_grad():
                            b_loss = self.gen.bag_loss(bags[i], z, self.cfg.loss_mode, enc=enc)
                    bag_losses.append(b_loss.item())
                rewards.extend(batch_rewards)
                if update:
                    ad.backward(ad.add_n(terms))
                    self.infer.store.adam_step(self.cfg.lr)
                    self.gen.store.adam_step(self.cfg.lr)
                    if self.cfg.reward_baseline:
                        self._baseline = 0.9 * self._baseline + 0.1 * float(np.mean(batch_rewards))
        if skipped:
            log.info("rl epoch %d: skipped %d degenerate bags", epoch, skipped)
        stats = EpochStats(
            epoch=epoch,
            mean_reward=float(np.mean(rewards)) if rewards else 0.0,
            mean_bag_loss=float(np.mean(bag_losses)) if bag_losses else 0.0,
            mean_entropy=float(np.mean(entropies)) if entropies else 0.0,
            wall_time=time.perf_counter() - t0,
        )
        if update:
            self.counters["rl"] += 1
            if self.run_log is not None:
                import json
                with open(self.run_log, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(stats.to_dict(), sort_keys=True) + "\n")
        log.info("rl epoch %d: reward %.4f loss %.4f entropy %.4f (%.1fs)",
                 epoch, stats.mean_reward, stats.mean_bag_loss,
                 stats.mean_entropy, stats.wall_time)
        return stats

    def train_rl(self, train_bags, valid_bags=None, epochs: int | None = None,
                 patience: int | None = None) -> list[EpochStats]:
        """RL epochs with optional early stopping on validation mean reward."""
        epochs = self.cfg.rl_epochs if epochs is None else epochs
        patience = self.cfg.patience if patience is None else patience
        remaining = self.cfg.align_epochs - self.counters.get("align", 0)
        if remaining > 0:
            self.align_generation(train_bags, remaining)
        stats = []
        best = -np.inf
        bad = 0
        for _ in range(epochs):
            stats.append(self.rl_epoch(train_bags, update=True))
            if valid_bags:
                val = self.rl_epoch(valid_bags, update=False,
                                    epoch_index=self.counters["rl"] - 1)
                log.info("valid reward %.4f", val.mean_reward)
                if val.mean_reward > best:
                    best = val.mean_reward
                    bad = 0
                else:
                    bad += 1
                    if patience is not None and bad > patience:
                        log.info("early stop: no validation gain for %d epochs", bad)
                        break
        return stats
