"""Embedded oracle suites: the package re-verifies its own numerics on demand.

Each suite draws seeded random instances and compares an efficient
implementation against an independent definitional oracle: the CTC
dynamic program against full path enumeration, analytic gradients against
central finite differences, the iterative LCS against a memoized
recursion, and beam decoding against exhaustive argmax over collapsed
sequences.  A failure reports the suite, the property, and the instance
seed so the case can be replayed.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ctc
from .decode import beam_decode, collapse
from .errors import SizeGuardError
from .metrics import lcs_length
from .numerics import NEG_INF, derive_rng


@dataclass
class SuiteResult:
    name: str
    passed: bool
    n_instances: int
    detail: str = ""


def lcs_length_memoized(a, b) -> int:
    """Independent LCS oracle: plain memoized recursion on index pairs."""
    a = tuple(a)
    b = tuple(b)

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * (len(a) + len(b)) + 100))
    try:
        return rec(0, 0)
    finally:
        sys.setrecursionlimit(old_limit)


def exhaustive_target_distribution(y) -> dict[tuple[int, ...], float]:
    """P(Z|X) for every collapsed sequence Z, by enumerating all paths."""
    y = np.asarray(y, dtype=np.float64)
    T, n_labels = y.shape
    if n_labels**T > 2_000_000:
        raise SizeGuardError(f"{n_labels}^{T} paths exceed the enumeration guard")
    rows = y.tolist()
    dist: dict[tuple[int, ...], float] = {}
    for path in itertools.product(range(n_labels), repeat=T):
        p = 1.0
        for t in range(T):
            p *= rows[t][path[t]]
        key = tuple(collapse(path))
        dist[key] = dist.get(key, 0.0) + p
    return dist


def random_emissions(rng: np.random.Generator, T: int, n_labels: int) -> np.ndarray:
    """Strictly positive random emission rows (Dirichlet)."""
    return rng.dirichlet(np.ones(n_labels), size=T)


def random_target(rng: np.random.Generator, n_labels: int, max_len: int) -> list[int]:
    u = int(rng.integers(0, max_len + 1))
    return [int(rng.integers(1, n_labels)) for _ in range(u)] if n_labels > 1 else []


def suite_ctc_oracle(seed: int, n_instances: int = 200) -> SuiteResult:
    """Dynamic program vs. brute-force path enumeration, |diff| <= 1e-9."""
    for i in range(n_instances):
        rng = derive_rng(seed, f"ctc_oracle:{i}")
        T = int(rng.integers(1, 7))
        n_labels = int(rng.integers(2, 5))  # L' = L + 1, L <= 3
        y = random_emissions(rng, T, n_labels)
        target = random_target(rng, n_labels, 3)
        got = ctc.ctc_log_prob(y, target)
        want = ctc.ctc_log_prob_bruteforce(y, target)
        if got == NEG_INF and want == NEG_INF:
            continue
        if not abs(got - want) <= 1e-9:
            return SuiteResult(
                "ctc_oracle",
                False,
                n_instances,
                f"dp={got!r} bruteforce={want!r} on instance {i} (seed={seed})",
            )
    return SuiteResult("ctc_oracle", True, n_instances)


def suite_gradient_fd(seed: int, n_instances: int = 30) -> SuiteResult:
    """Analytic CTC gradient vs. central finite differences (step 1e-5)."""
    step = 1e-5
    for i in range(n_instances):
        rng = derive_rng(seed, f"gradient_fd:{i}")
        T = int(rng.integers(2, 6))
        n_labels = int(rng.integers(2, 5))
        max_u = min(3, T)
        target = random_target(rng, n_labels, max_u)
        while ctc.min_frames(target) > T:
            target = random_target(rng, n_labels, max_u)
        logits = rng.normal(0.0, 1.5, size=(T, n_labels))
        result = ctc.ctc_loss_and_grad(logits, target)
        for t in range(T):
            for k in range(n_labels):
                bumped = logits.copy()
                bumped[t, k] += step
                up = ctc.ctc_loss_and_grad(bumped, target).loss
                bumped[t, k] -= 2 * step
                down = ctc.ctc_loss_and_grad(bumped, target).loss
                fd = (up - down) / (2 * step)
                analytic = result.grad_logits[t, k]
                rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-8)
                if not rel <= 1e-5:
                    return SuiteResult(
                        "gradient_fd",
                        False,
                        n_instances,
                        f"grad[{t},{k}]: analytic={analytic!r} fd={fd!r} rel={rel:.2e} "
                        f"on instance {i} (seed={seed})",
                    )
    return SuiteResult("gradient_fd", True, n_instances)


def suite_lcs_oracle(seed: int, n_instances: int = 300) -> SuiteResult:
    """Iterative LCS vs. memoized recursive oracle on random token lists."""
    for i in range(n_instances):
        rng = derive_rng(seed, f"lcs_oracle:{i}")
        la = int(rng.integers(0, 15))
        lb = int(rng.integers(0, 15))
        a = rng.integers(0, 5, size=la).tolist()
        b = rng.integers(0, 5, size=lb).tolist()
        got = lcs_length(a, b)
        want = lcs_length_memoized(a, b)
        if got != want:
            return SuiteResult(
                "lcs_oracle", False, n_instances, f"lcs={got} oracle={want} on instance {i} (seed={seed})"
            )
    return SuiteResult("lcs_oracle", True, n_instances)


def suite_beam_exhaustive(seed: int, n_instances: int = 60) -> SuiteResult:
    """Wide beam vs. exhaustive argmax over collapsed sequences, tiny instances."""
    for i in range(n_instances):
        rng = derive_rng(seed, f"beam_exhaustive:{i}")
        T = int(rng.integers(1, 5))
        n_labels = int(rng.integers(2, 4))
        y = random_emissions(rng, T, n_labels)
        dist = exhaustive_target_distribution(y)
        best_target, best_p = max(dist.items(), key=lambda kv: kv[1])
        result = beam_decode(y, beam_width=64)
        got_p = dist[tuple(result.labels)]
        if tuple(result.labels) != best_target and abs(got_p - best_p) > 1e-12:
            return SuiteResult(
                "beam_exhaustive",
                False,
                n_instances,
                f"beam={result.labels} p={got_p!r}, exhaustive={list(best_target)} p={best_p!r} "
                f"on instance {i} (seed={seed})",
            )
    return SuiteResult("beam_exhaustive", True, n_instances)


def run_all(seed: int = 20240501) -> list[SuiteResult]:
    return [
        suite_ctc_oracle(seed),
        suite_gradient_fd(seed),
        suite_lcs_oracle(seed),
        suite_beam_exhaustive(seed),
    ]
