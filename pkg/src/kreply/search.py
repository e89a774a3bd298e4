"""Beam search over a stepwise token model.

Decoupled from any network: the caller supplies a step function

    step(state) -> (log_probs, advance)

where log_probs is a 1-D float array over the vocabulary (banned tokens
at -inf) and advance(token_id) returns the state after emitting that
token.  Hypotheses are scored by token-mean log-probability, so short
and long sequences compete on the same scale.  Width 1 reduces exactly
to greedy decoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError

StepFn = Callable[[object], tuple[np.ndarray, Callable[[int], object]]]


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    score: float  # token-mean log-probability


def beam_search(step: StepFn, initial_state, width: int, max_len: int,
                eos_id: int) -> list[Hypothesis]:
    """Ranked hypotheses, best first; every hypothesis ends with EOS or at max_len."""
    if width < 1:
        raise ContractError(f"beam width must be >= 1, got {width}")
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")

    # live beam entries: (tokens, summed log-prob, state)
    live: list[tuple[tuple[int, ...], float, object]] = [((), 0.0, initial_state)]
    done: list[Hypothesis] = []

    for _ in range(max_len):
        if not live:
            break
        expansions: list[tuple[float, float, tuple[int, ...], int, int]] = []
        advances: list[Callable[[int], object]] = []
        for i, (toks, total, state) in enumerate(live):
            log_probs, advance = step(state)
            advances.append(advance)
            finite = np.flatnonzero(np.isfinite(log_probs))
            n = len(toks) + 1
            for tok in finite:
                new_total = total + float(log_probs[tok])
                expansions.append((new_total / n, new_total, toks, i, int(tok)))
        # deterministic order: score desc, then beam index, then token id
        expansions.sort(key=lambda e: (-e[0], e[3], e[4]))
        next_live = []
        for mean, total, toks, i, tok in expansions[: width]:
            new_toks = toks + (tok,)
            if tok == eos_id:
                done.append(Hypothesis(new_toks, mean))
            else:
                next_live.append((new_toks, total, advances[i](tok)))
        live = next_live

    for toks, total, _state in live:
        done.append(Hypothesis(toks, total / len(toks)))
    done.sort(key=lambda h: (-h.score, h.tokens))
    return done[: width]
