"""Collapse function and inference-time decoding over emission matrices.

The collapse B(.) merges adjacent duplicate labels and then deletes
blanks, so a frame-level path [a, a, -, -, b, -, b] becomes [a, b, b].
Decoding inverts the emission model approximately: `greedy_decode` takes
the per-frame argmax path and collapses it; `beam_decode` runs a prefix
beam search that sums the probability mass of every path collapsing to
the same label sequence, which is the quantity a summary should maximize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import NEG_INF, check_prob_matrix

BLANK = 0


@dataclass
class DecodeResult:
    labels: list[int]
    score: float  # log-probability, <= 0
    method: str  # "greedy" or "beam"


def collapse(path) -> list[int]:
    """Map a frame-level path to its label sequence.

    Adjacent equal labels are merged first, then blanks are deleted, so
    two identical labels separated by a blank survive as two labels.
    Order of the survivors is preserved.
    """
    out: list[int] = []
    prev = -1
    for raw in path:
        label = int(raw)
        if label == prev:
            continue
        prev = label
        if label != BLANK:
            out.append(label)
    return out


def greedy_decode(y) -> DecodeResult:
    """Collapse the per-frame argmax path.

    Ties break toward the lowest label id, so a fully uncertain frame
    decodes to blank (id 0): an uncertain frame is treated as irrelevant.
    The score is the log-probability of the argmax path itself.
    """
    y = check_prob_matrix(y)
    path = np.argmax(y, axis=1)
    best = y[np.arange(y.shape[0]), path]
    with np.errstate(divide="ignore"):
        score = float(np.log(best).sum())
    return DecodeResult(labels=collapse(path), score=score, method="greedy")


def beam_decode(y, beam_width: int = 8) -> DecodeResult:
    """Prefix beam search over collapsed label sequences.

    Each beam entry is a collapsed prefix carrying two log-masses: paths
    ending in blank and paths ending in the prefix's last label.  Keeping
    them separate is what lets a repeated label (a, -, a) be told apart
    from a merged one (a, a).  With beam_width >= the number of reachable
    prefixes the search is exact; beam_width=1 maximizes a different
    objective than `greedy_decode` and may disagree with it.
    """
    y = check_prob_matrix(y)
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    T, n_labels = y.shape
    with np.errstate(divide="ignore"):
        log_y = np.log(y)

    # prefix -> (log mass ending in blank, log mass ending in non-blank)
    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG_INF)}

    for t in range(T):
        row = log_y[t].tolist()
        lp_blank = row[BLANK]
        nxt: dict[tuple[int, ...], tuple[float, float]] = {}
        for prefix, (pb, pnb) in beams.items():
            total = _logadd(pb, pnb)
            # emit blank: prefix unchanged, mass moves to the blank bucket
            b, nb = nxt.get(prefix, (NEG_INF, NEG_INF))
            nxt[prefix] = (_logadd(b, total + lp_blank), nb)
            last = prefix[-1] if prefix else -1
            for c in range(1, n_labels):
                lp = row[c]
                if lp == NEG_INF:
                    continue
                if c == last:
                    # repeat frame extends the same prefix; only paths that
                    # passed through a blank start a new occurrence
                    b, nb = nxt.get(prefix, (NEG_INF, NEG_INF))
                    nxt[prefix] = (b, _logadd(nb, pnb + lp))
                    grown = prefix + (c,)
                    b, nb = nxt.get(grown, (NEG_INF, NEG_INF))
                    nxt[grown] = (b, _logadd(nb, pb + lp))
                else:
                    grown = prefix + (c,)
                    b, nb = nxt.get(grown, (NEG_INF, NEG_INF))
                    nxt[grown] = (b, _logadd(nb, total + lp))
        if len(nxt) > beam_width:
            ranked = sorted(nxt.items(), key=lambda kv: -_logadd(*kv[1]))
            nxt = dict(ranked[:beam_width])
        beams = nxt

    best_prefix, (pb, pnb) = max(beams.items(), key=lambda kv: _logadd(*kv[1]))
    return DecodeResult(labels=list(best_prefix), score=_logadd(pb, pnb), method="beam")


def blank_saliency(y) -> list[float]:
    """Per-frame relevance score 1 - P(blank at t).

    A frame whose mass sits on blank carries information the model deems
    irrelevant to the summary; this exposes that judgement for diagnostics.
    """
    y = check_prob_matrix(y)
    return [float(v) for v in 1.0 - y[:, BLANK]]


def _logadd(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))
