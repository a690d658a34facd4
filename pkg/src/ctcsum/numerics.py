"""Dense float64 matrices and numerically stable log-domain primitives.

Matrices are plain 2-D numpy arrays in row-major float64; no wrapper class.
Log-domain probabilities are floats in [-inf, 0], with -inf standing for an
exact probability of zero.  All probability arithmetic elsewhere in the
package goes through the helpers here so the -inf conventions stay in one
place.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ShapeError

NEG_INF = float("-inf")

_SEED_MASK = 0xFFFFFFFFFFFFFFFF


def log_sum_exp(values) -> float:
    """Return log(sum(exp(values))) computed with max subtraction.

    An empty input has zero total mass and returns -inf, as does an input
    of all -inf.  NaN inputs are a contract violation (debug-checked).
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return NEG_INF
    if __debug__ and np.isnan(arr).any():
        raise AssertionError("NaN passed to log_sum_exp")
    m = float(arr.max())
    if m == NEG_INF:
        return NEG_INF
    return m + float(np.log(np.exp(arr - m).sum()))


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax of a 2-D array of finite logits.

    Subtracts the per-row maximum before exponentiating, so rows of
    arbitrary magnitude (including |u| ~ 1e3) normalize without overflow.
    """
    a = np.asarray(logits, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("softmax_rows requires finite logits")
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check naming both operands."""
    am = np.asarray(a, dtype=np.float64)
    bm = np.asarray(b, dtype=np.float64)
    if am.ndim != 2 or bm.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {am.shape} and {bm.shape}")
    if am.shape[1] != bm.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {am.shape} x {bm.shape}")
    return am @ bm


def check_prob_matrix(y, tol: float = 1e-9) -> np.ndarray:
    """Validate an emission matrix: 2-D, T >= 1, rows are distributions.

    Returns the validated float64 array.  Every row must be non-negative
    and sum to 1 within `tol`.
    """
    a = np.asarray(y, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"emission matrix must be 2-D with T >= 1, got shape {a.shape}")
    if (a < 0).any():
        raise ValueError("emission matrix has negative entries")
    sums = a.sum(axis=1)
    if not np.all(np.abs(sums - 1.0) <= tol):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"emission row {worst} sums to {sums[worst]!r}, expected 1 +/- {tol}")
    return a


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 stream for a 64-bit seed.

    The same seed yields the same draws on every platform and run.  A
    stream is single-owner: concurrent users must derive their own via
    `derive_rng`.
    """
    return np.random.Generator(np.random.PCG64(seed & _SEED_MASK))


def derive_rng(seed: int, purpose: str) -> np.random.Generator:
    """Split an independent child stream off `seed` for a named purpose.

    The purpose string is hashed (blake2b) into the seed material, so
    ("init", "shuffle", "data", ...) give unrelated but reproducible
    streams for the same base seed.
    """
    tag = int.from_bytes(hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest(), "little")
    ss = np.random.SeedSequence([seed & _SEED_MASK, tag])
    return np.random.Generator(np.random.PCG64(ss))
