"""Long-document inference: sliding windows, candidate selection, summarization.

A long document is scanned with a fixed-length window shifted by a fixed
stride (defaults 55 and 5, up to 20 windows, so the scan covers the first
150 input elements).  Each window is decoded independently; the candidate
sharing the most tokens with the document prefix wins.  Overlap counting
is multiset intersection: each headline token consumes at most one
matching document token, so a degenerate repeated-character candidate
cannot score above its actual support.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from . import model as model_mod
from .decode import beam_decode, blank_saliency, greedy_decode
from .text import k_fold


@dataclass
class WindowConfig:
    window_len: int = 55
    stride: int = 5
    max_windows: int = 20
    scan_len: int = 150

    def __post_init__(self):
        if self.window_len < 1 or self.stride < 1 or self.max_windows < 1:
            raise ValueError("window_len, stride, and max_windows must be >= 1")
        if self.scan_len < self.window_len:
            raise ValueError("scan_len must be >= window_len")


def windows(document_ids, cfg: WindowConfig) -> list[list]:
    """Window slices at offsets 0, stride, 2*stride, ...

    A window reaching past the end of the document is truncated; offsets
    at or past the end produce nothing.  At most max_windows windows.
    """
    doc = list(document_ids)
    if not doc:
        raise ValueError("cannot window an empty document")
    out = []
    start = 0
    while start < len(doc) and len(out) < cfg.max_windows:
        out.append(doc[start : start + cfg.window_len])
        start += cfg.stride
    return out


def multiset_overlap(a, b) -> int:
    """Size of the multiset intersection: sum over tokens of min(count_a, count_b)."""
    ca = Counter(a)
    cb = Counter(b)
    return sum(min(n, cb[tok]) for tok, n in ca.items() if tok in cb)


def select_headline(candidates, document_prefix) -> tuple[list, int]:
    """Pick the candidate sharing the most tokens with the document prefix.

    Ties go to the earliest window.  If every candidate is empty the
    result is the empty headline with overlap 0.
    """
    cands = [list(c) for c in candidates]
    if not cands:
        raise ValueError("select_headline requires at least one candidate")
    best_idx = 0
    best_overlap = -1
    for idx, cand in enumerate(cands):
        overlap = multiset_overlap(cand, document_prefix)
        if overlap > best_overlap:
            best_idx = idx
            best_overlap = overlap
    return cands[best_idx], best_overlap


@dataclass
class SummaryResult:
    headline: list[int]
    overlap: int
    winner: int  # index of the winning window
    window_offsets: list[int]
    candidates: list[list[int]]
    overlaps: list[int]
    saliency: list[float] = field(default_factory=list)  # per frame of the winning window


def summarize_document(
    params: model_mod.ModelParams,
    document_ids,
    cfg: WindowConfig,
    method: str = "greedy",
    beam_width: int = 8,
    k: int = 1,
) -> SummaryResult:
    """Decode every window and keep the candidate with the best prefix overlap.

    Windows are cut from the raw (unfolded) input elements; k-fold
    duplication is applied per window right before the model, matching how
    the training corpus was folded.  Diagnostics cover all candidates and
    the blank-saliency profile of the winning window.
    """
    doc = [int(i) for i in document_ids]
    if not doc:
        raise ValueError("cannot summarize an empty document")
    if method not in ("greedy", "beam"):
        raise ValueError(f"unknown decode method {method!r}")
    slices = windows(doc, cfg)
    offsets = [i * cfg.stride for i in range(len(slices))]
    candidates: list[list[int]] = []
    emission_cache = []
    for piece in slices:
        emissions, _ = model_mod.forward(params, k_fold(piece, k))
        emission_cache.append(emissions)
        if method == "beam":
            result = beam_decode(emissions, beam_width)
        else:
            result = greedy_decode(emissions)
        candidates.append(result.labels)
    prefix = doc[: cfg.scan_len]
    overlaps = [multiset_overlap(c, prefix) for c in candidates]
    headline, overlap = select_headline(candidates, prefix)
    winner = overlaps.index(overlap)
    return SummaryResult(
        headline=headline,
        overlap=overlap,
        winner=winner,
        window_offsets=offsets,
        candidates=candidates,
        overlaps=overlaps,
        saliency=blank_saliency(emission_cache[winner]),
    )
