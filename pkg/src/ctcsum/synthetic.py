"""Synthetic extraction tasks for end-to-end verification.

The character task emits fixed-length documents over a small symbol
alphabet in which a handful of positions carry "salient" symbols; the
reference headline is exactly those symbols in document order.  A model
that learns the task demonstrates order-preserving compression without
needing any external corpus.  The word task is the same game with
two-character word units, which makes single-pass emission tight enough
that k-fold input duplication visibly helps.
"""

from __future__ import annotations

import numpy as np

# CJK ideographs: never tag-substituted by the tokenizer, one char per symbol
_SYMBOLS = [chr(0x4E00 + i) for i in range(64)]

DOC_LEN = 20
MIN_SALIENT = 3
MAX_SALIENT = 8

# the word task is deliberately tight: up to 10 two-character words in a
# 12-word document means the headline can hold more characters than the
# unfolded input has frames, which is exactly the regime where k-fold
# duplication pays off
WORD_DOC_LEN = 12
WORD_MIN_SALIENT = 5
WORD_MAX_SALIENT = 10


def char_task_symbols(n_symbols: int = 20, n_salient: int = 6) -> tuple[list[str], list[str]]:
    """(alphabet, salient subset) for the character task."""
    alphabet = _SYMBOLS[:n_symbols]
    return alphabet, alphabet[:n_salient]


def word_task_words(n_words: int = 20, n_salient: int = 6) -> tuple[list[str], list[str]]:
    """(word list, salient subset) for the word task; words are disjoint bigrams."""
    words = ["".join(_SYMBOLS[2 * i : 2 * i + 2]) for i in range(n_words)]
    return words, words[:n_salient]


def _draw_salient(rng: np.random.Generator, pool: list[str], count: int) -> list[str]:
    # no immediately repeated salient symbol: keeps the target free of
    # adjacent duplicates, so every pair is CTC-learnable without blank
    # gymnastics between equal labels
    out: list[str] = []
    while len(out) < count:
        pick = pool[int(rng.integers(len(pool)))]
        if out and out[-1] == pick:
            continue
        out.append(pick)
    return out


def generate_char_task(n_pairs: int, rng: np.random.Generator, n_symbols: int = 20, n_salient: int = 6):
    """Documents of DOC_LEN symbols, 3..8 salient; headline = salient in order."""
    alphabet, salient = char_task_symbols(n_symbols, n_salient)
    fillers = alphabet[n_salient:]
    pairs = []
    for idx in range(n_pairs):
        n_sal = int(rng.integers(MIN_SALIENT, MAX_SALIENT + 1))
        positions = sorted(rng.choice(DOC_LEN, size=n_sal, replace=False).tolist())
        chosen = _draw_salient(rng, salient, n_sal)
        doc = [fillers[int(rng.integers(len(fillers)))] for _ in range(DOC_LEN)]
        for pos, sym in zip(positions, chosen):
            doc[pos] = sym
        pairs.append({"id": str(idx), "document": "".join(doc), "headline": "".join(chosen)})
    return pairs


def generate_word_task(n_pairs: int, rng: np.random.Generator, n_words: int = 20, n_salient: int = 6):
    """Same game over two-character words; documents are space-separated words.

    The headline spells out each salient word's characters, so with k=1
    one input frame has to account for two output labels and the model is
    forced to borrow neighboring frames; k=2 removes that pressure.
    """
    words, salient = word_task_words(n_words, n_salient)
    fillers = words[n_salient:]
    pairs = []
    for idx in range(n_pairs):
        n_sal = int(rng.integers(WORD_MIN_SALIENT, WORD_MAX_SALIENT + 1))
        positions = sorted(rng.choice(WORD_DOC_LEN, size=n_sal, replace=False).tolist())
        chosen = _draw_salient(rng, salient, n_sal)
        doc = [fillers[int(rng.integers(len(fillers)))] for _ in range(WORD_DOC_LEN)]
        for pos, word in zip(positions, chosen):
            doc[pos] = word
        pairs.append({"id": str(idx), "document": " ".join(doc), "headline": "".join(chosen)})
    return pairs
