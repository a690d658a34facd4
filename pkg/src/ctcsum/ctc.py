"""CTC loss: forward-backward over the blank-extended target, in log domain.

A target Z = [z_1 .. z_U] over real labels (ids 1..L, blank is 0) is
extended to 2U+1 slots [-, z_1, -, z_2, ..., z_U, -].  The total
probability of all frame paths collapsing to Z is accumulated over that
lattice with the standard three-way recursion: stay, step from the
previous slot, or skip the blank between two different labels.  All mass
is kept as log-probabilities; -inf is the exact zero.

`ctc_log_prob_bruteforce` is the definitional oracle: it enumerates every
path, collapses it, and sums the matching products.  It exists so the
dynamic program can be checked against the definition rather than against
itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .decode import BLANK, collapse
from .errors import (
    DivergenceError,
    InfeasibleTargetError,
    InvalidTargetError,
    OutOfVocabularyError,
    SizeGuardError,
)
from .numerics import NEG_INF, check_prob_matrix, softmax_rows

# Test-only hook: setting this to "skip_rule" makes the lattice accept the
# blank-skip transition unconditionally, which is wrong whenever the skip
# would land on a blank or cross equal labels.  Used by the self-check
# harness to prove the oracle suite can catch a broken recursion.
_FAULT: str | None = None


@dataclass
class CtcResult:
    loss: float  # -log P(Z|X), >= 0
    grad_logits: np.ndarray  # T x L', gradient w.r.t. pre-softmax logits
    log_prob: float


def extend_target(target) -> list[int]:
    """Interleave blanks around and between the target labels."""
    labels = _check_target(target)
    ext = [BLANK]
    for z in labels:
        ext.append(z)
        ext.append(BLANK)
    return ext


def min_frames(target) -> int:
    """Fewest frames that can carry the target: U plus one per adjacent equal pair."""
    labels = _check_target(target)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def ctc_log_prob(y, target) -> float:
    """log P(target | y) via the forward recursion.

    Infeasible targets (more labels than the frames can carry) have
    probability exactly zero and return -inf.
    """
    y = check_prob_matrix(y)
    labels = _check_target(target, n_labels=y.shape[1])
    if min_frames(labels) > y.shape[0]:
        return NEG_INF
    with np.errstate(divide="ignore"):
        log_y = np.log(y)
    alpha = _forward_lattice(log_y, extend_target(labels))
    return _final_mass(alpha[-1])


def ctc_loss_and_grad(logits, target) -> CtcResult:
    """CTC loss and its exact gradient w.r.t. pre-softmax logits.

    With y = softmax_rows(logits) and P = P(target|y), the gradient is

        dL/du[t,k] = y[t,k] - (1/P) * sum over slots s with label k of
                     alpha[t,s] * beta[t,s] / y[t,k]

    which is the usual combined softmax+CTC form; rows of the gradient sum
    to zero.  Infeasible targets raise InfeasibleTargetError so a training
    loop can skip and count them instead of propagating an infinite loss.
    """
    logits = np.asarray(logits, dtype=np.float64)
    y = softmax_rows(logits)
    labels = _check_target(target, n_labels=y.shape[1])
    T = y.shape[0]
    if min_frames(labels) > T:
        raise InfeasibleTargetError(
            f"target needs at least {min_frames(labels)} frames, emission has {T}"
        )
    ext = np.asarray(extend_target(labels), dtype=np.intp)
    with np.errstate(divide="ignore"):
        log_y = np.log(y)
    alpha = _forward_lattice(log_y, ext)
    beta = _backward_lattice(log_y, ext)
    log_p = _final_mass(alpha[-1])
    if log_p == NEG_INF:
        # the target fits but the softmax has underflowed to an exact zero
        # somewhere along every alignment: numerically diverged, not infeasible
        raise DivergenceError("feasible target has zero probability (saturated emissions)")

    # occupancy[t,k] = log sum over slots with label k of alpha*beta/y
    slot_emit = log_y[:, ext]  # T x S
    with np.errstate(invalid="ignore"):
        terms = alpha + beta - slot_emit
    terms[slot_emit == NEG_INF] = NEG_INF  # 0-probability slot contributes nothing
    occupancy = np.full_like(y, NEG_INF)
    for t in range(T):
        np.logaddexp.at(occupancy[t], ext, terms[t])
    grad = y - np.exp(occupancy - log_p)
    return CtcResult(loss=-log_p, grad_logits=grad, log_prob=log_p)


def ctc_log_prob_bruteforce(y, target) -> float:
    """Definitional oracle: enumerate all L'^T paths and sum matching products.

    Guarded to L'^T <= 1e7.  Path probabilities are plain products of the
    per-frame emissions; the matching criterion is collapse equality.
    """
    y = check_prob_matrix(y)
    T, n_labels = y.shape
    if n_labels**T > 10_000_000:
        raise SizeGuardError(f"{n_labels}^{T} paths exceed the brute-force guard")
    labels = _check_target(target, n_labels=n_labels)
    rows = y.tolist()
    total = 0.0
    for path in itertools.product(range(n_labels), repeat=T):
        if collapse(path) != labels:
            continue
        p = 1.0
        for t in range(T):
            p *= rows[t][path[t]]
        total += p
    return math.log(total) if total > 0.0 else NEG_INF


def _check_target(target, n_labels: int | None = None) -> list[int]:
    labels = [int(z) for z in target]
    for z in labels:
        if z == BLANK:
            raise InvalidTargetError("target sequences must not contain the blank id 0")
        if z < 0:
            raise InvalidTargetError(f"negative label id {z} in target")
        if n_labels is not None and z >= n_labels:
            raise OutOfVocabularyError(f"label id {z} out of range for L' = {n_labels}")
    return labels


def _forward_lattice(log_y: np.ndarray, ext) -> np.ndarray:
    """alpha[t,s]: log mass of all partial paths ending in slot s at time t."""
    ext = np.asarray(ext, dtype=np.intp)
    T = log_y.shape[0]
    S = len(ext)
    can_skip = np.zeros(S, dtype=bool)
    if S > 2:
        can_skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    if _FAULT == "skip_rule":
        can_skip[2:] = True
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = log_y[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_y[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        step = np.logaddexp(prev[1:], prev[:-1])
        trans = np.concatenate((prev[:1], step))
        skip = np.logaddexp(trans[2:], prev[:-2])
        trans[2:] = np.where(can_skip[2:], skip, trans[2:])
        alpha[t] = trans + log_y[t, ext]
    return alpha


def _backward_lattice(log_y: np.ndarray, ext) -> np.ndarray:
    """beta[t,s]: log mass of all path completions from slot s at time t (inclusive)."""
    ext = np.asarray(ext, dtype=np.intp)
    T = log_y.shape[0]
    S = len(ext)
    can_skip_from = np.zeros(S, dtype=bool)
    if S > 2:
        can_skip_from[:-2] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    if _FAULT == "skip_rule":
        can_skip_from[:-2] = True
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = log_y[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = log_y[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        step = np.logaddexp(nxt[:-1], nxt[1:])
        trans = np.concatenate((step, nxt[-1:]))
        skip = np.logaddexp(trans[:-2], nxt[2:])
        trans[:-2] = np.where(can_skip_from[:-2], skip, trans[:-2])
        beta[t] = trans + log_y[t, ext]
    return beta


def _final_mass(last_alpha: np.ndarray) -> float:
    if len(last_alpha) == 1:
        return float(last_alpha[0])
    return float(np.logaddexp(last_alpha[-1], last_alpha[-2]))
