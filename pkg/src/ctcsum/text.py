"""Tokenization, tag substitution, vocabularies, k-fold input, corpus files.

Character mode splits text into Unicode scalar values, collapsing runs of
ASCII digits into a single "<num>" tag and runs of ASCII Latin letters
into "<foreign>"; whitespace is dropped.  Word mode expects whitespace
pre-segmented text and applies the same substitutions per token.  Every
vocabulary reserves ids 0..3 for blank, unknown, number, and foreign; the
blank id never appears in encoded corpora.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusFormatError, InvalidTargetError, OutOfVocabularyError

BLANK_ID = 0
UNK_ID = 1
NUM_ID = 2
FOREIGN_ID = 3

BLANK_TOKEN = "<blank>"
UNK_TOKEN = "<unk>"
NUM_TOKEN = "<num>"
FOREIGN_TOKEN = "<foreign>"

RESERVED_TOKENS = (BLANK_TOKEN, UNK_TOKEN, NUM_TOKEN, FOREIGN_TOKEN)
_RESERVED_SET = frozenset(RESERVED_TOKENS)

_ASCII_DIGITS = frozenset("0123456789")
_ASCII_LETTERS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")

MODES = ("character", "word")


def tokenize(text: str, mode: str = "character") -> list[str]:
    """Split text into surface tokens with number/foreign tag substitution."""
    if mode == "character":
        out: list[str] = []
        run = None  # current tag run: "num", "foreign", or None
        for ch in text:
            if ch.isspace():
                run = None
                continue
            if ch in _ASCII_DIGITS:
                if run != "num":
                    out.append(NUM_TOKEN)
                    run = "num"
                continue
            if ch in _ASCII_LETTERS:
                if run != "foreign":
                    out.append(FOREIGN_TOKEN)
                    run = "foreign"
                continue
            run = None
            out.append(ch)
        return out
    if mode == "word":
        out = []
        for tok in text.split():
            if all(c in _ASCII_DIGITS for c in tok):
                out.append(NUM_TOKEN)
            elif all(c in _ASCII_LETTERS for c in tok):
                out.append(FOREIGN_TOKEN)
            else:
                out.append(tok)
        return out
    raise ValueError(f"unknown tokenize mode {mode!r}")


@dataclass
class Vocabulary:
    """Bijection between surface tokens and label ids; ids 0..3 are reserved."""

    id_to_token: list[str]
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.id_to_token) < len(RESERVED_TOKENS) or tuple(
            self.id_to_token[: len(RESERVED_TOKENS)]
        ) != RESERVED_TOKENS:
            raise CorpusFormatError(f"vocabulary must start with the reserved tokens {RESERVED_TOKENS}")
        self.token_to_id = {}
        for idx, token in enumerate(self.id_to_token):
            if token in self.token_to_id:
                raise CorpusFormatError(f"duplicate token {token!r} in vocabulary")
            self.token_to_id[token] = idx

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id_of(self, token: str) -> int:
        """Token id, with UNK as the out-of-vocabulary fallback (blank is unreachable)."""
        idx = self.token_to_id.get(token, UNK_ID)
        return UNK_ID if idx == BLANK_ID else idx

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.id_to_token):
            raise OutOfVocabularyError(f"id {idx} outside vocabulary of size {len(self.id_to_token)}")
        return self.id_to_token[idx]


def build_vocab(texts, mode: str = "character", min_count: int = 1) -> Vocabulary:
    """Frequency-descending vocabulary over the tokenized texts.

    Tokens seen fewer than min_count times are left out and will encode to
    UNK.  Ties in frequency are broken by first occurrence, which makes
    the construction order (and the serialized file) stable across runs.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    position = 0
    for text in texts:
        for token in tokenize(text, mode):
            if token in _RESERVED_SET:
                continue
            if token not in counts:
                counts[token] = 0
                first_seen[token] = position
            counts[token] += 1
            position += 1
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], first_seen[t]))
    return Vocabulary(id_to_token=list(RESERVED_TOKENS) + kept)


def encode(tokens, vocab: Vocabulary) -> list[int]:
    """Map surface tokens to ids; unknown tokens become UNK, never blank."""
    return [vocab.id_of(t) for t in tokens]


def decode_ids(ids, vocab: Vocabulary, sep: str = "") -> str:
    """Render ids back to a string; reserved tags render literally.

    The blank id must never reach this function: decoding happens after
    collapse, which removes all blanks.
    """
    toks = []
    for idx in ids:
        idx = int(idx)
        if idx == BLANK_ID:
            raise InvalidTargetError("blank id 0 in decode_ids input")
        toks.append(vocab.token_of(idx))
    return sep.join(toks)


def k_fold(input_ids, k: int) -> list:
    """Repeat every element k times in place: [a, b] with k=2 -> [a, a, b, b]."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return [x for x in input_ids for _ in range(k)]


def save_vocab(vocab: Vocabulary, path):
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocab.id_to_token:
            fh.write(token + "\n")


def load_vocab(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().splitlines()
    if len(tokens) < len(RESERVED_TOKENS):
        raise CorpusFormatError(f"vocabulary file {path} has fewer than {len(RESERVED_TOKENS)} lines")
    return Vocabulary(id_to_token=tokens)


@dataclass
class RawPair:
    pair_id: str
    document: str
    headline: str


@dataclass
class CorpusPair:
    pair_id: str
    document: list[int]  # input-side ids, already truncated and k-folded
    headline: list[int]  # output-side character ids


def read_corpus_jsonl(path) -> list[RawPair]:
    """Read a UTF-8 JSON Lines corpus with "document" and "headline" fields."""
    pairs: list[RawPair] = []
    with open(path, "r", encoding="utf-8") as fh:
        index = 0
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}: line {lineno}: expected a JSON object")
            for key in ("document", "headline"):
                if key not in obj:
                    raise CorpusFormatError(f"{path}: line {lineno}: missing \"{key}\" field")
                if not isinstance(obj[key], str):
                    raise CorpusFormatError(f"{path}: line {lineno}: \"{key}\" must be a string")
            pair_id = str(obj["id"]) if "id" in obj else str(index)
            pairs.append(RawPair(pair_id=pair_id, document=obj["document"], headline=obj["headline"]))
            index += 1
    return pairs


@dataclass
class EncodeStats:
    n_pairs: int
    oov_rate: float
    infeasible: int
    dropped_oov_headline: int
    dropped_empty_document: int


def encode_corpus(
    raw_pairs,
    vocab_in: Vocabulary,
    vocab_out: Vocabulary,
    mode: str,
    k: int = 1,
    truncate: int = 0,
) -> tuple[list[CorpusPair], EncodeStats]:
    """Tokenize, truncate, k-fold, and encode raw pairs.

    Pairs whose headline contains an out-of-vocabulary character are
    dropped (headlines must stay reserved-id-free apart from NUM/FOREIGN),
    as are pairs with an empty tokenized document.  CTC-infeasible pairs
    are kept but counted, so the training loop can skip them explicitly.
    """
    from . import ctc  # late import: ctc pulls in decode, not needed for pure text work

    pairs: list[CorpusPair] = []
    total_tokens = 0
    oov_tokens = 0
    infeasible = 0
    dropped_oov = 0
    dropped_empty = 0
    for raw in raw_pairs:
        doc_tokens = tokenize(raw.document, mode)
        if truncate:
            doc_tokens = doc_tokens[:truncate]
        if not doc_tokens:
            dropped_empty += 1
            continue
        doc_ids = k_fold(encode(doc_tokens, vocab_in), k)
        head_ids = encode(tokenize(raw.headline, "character"), vocab_out)
        if UNK_ID in head_ids:
            dropped_oov += 1
            continue
        total_tokens += len(doc_ids)
        oov_tokens += sum(1 for i in doc_ids if i == UNK_ID)
        if ctc.min_frames(head_ids) > len(doc_ids):
            infeasible += 1
        pairs.append(CorpusPair(pair_id=raw.pair_id, document=doc_ids, headline=head_ids))
    stats = EncodeStats(
        n_pairs=len(pairs),
        oov_rate=oov_tokens / total_tokens if total_tokens else 0.0,
        infeasible=infeasible,
        dropped_oov_headline=dropped_oov,
        dropped_empty_document=dropped_empty,
    )
    return pairs, stats


# ---------------------------------------------------------------------------
# Encoded corpus container (magic "CTCC"): little-endian, JSON metadata block
# with both vocabularies inline, then u32 id/doc/headline records per pair.
# ---------------------------------------------------------------------------

CORPUS_MAGIC = b"CTCC"
CORPUS_VERSION = 1


def save_encoded_corpus(path, pairs, meta: dict, vocab_in: Vocabulary, vocab_out: Vocabulary):
    header = {
        "meta": meta,
        "input_tokens": vocab_in.id_to_token,
        "output_tokens": vocab_out.id_to_token,
    }
    meta_bytes = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CORPUS_MAGIC)
        fh.write(struct.pack("<I", CORPUS_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(pairs)))
        for pair in pairs:
            pid = pair.pair_id.encode("utf-8")
            fh.write(struct.pack("<I", len(pid)))
            fh.write(pid)
            fh.write(struct.pack("<I", len(pair.document)))
            fh.write(np.asarray(pair.document, dtype="<u4").tobytes())
            fh.write(struct.pack("<I", len(pair.headline)))
            fh.write(np.asarray(pair.headline, dtype="<u4").tobytes())


def load_encoded_corpus(path) -> tuple[list[CorpusPair], dict, Vocabulary, Vocabulary]:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    off = 0

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise CorpusFormatError(f"{path}: encoded corpus is truncated")
        chunk = view[off : off + n]
        off += n
        return chunk

    if bytes(take(4)) != CORPUS_MAGIC:
        raise CorpusFormatError(f"{path}: bad magic, not an encoded corpus")
    (version,) = struct.unpack("<I", take(4))
    if version != CORPUS_VERSION:
        raise CorpusFormatError(f"{path}: unsupported corpus version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    try:
        header = json.loads(bytes(take(meta_len)).decode("utf-8"))
        meta = dict(header["meta"])
        vocab_in = Vocabulary(id_to_token=list(header["input_tokens"]))
        vocab_out = Vocabulary(id_to_token=list(header["output_tokens"]))
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise CorpusFormatError(f"{path}: invalid corpus metadata: {exc}") from exc
    (n_pairs,) = struct.unpack("<I", take(4))
    pairs = []
    for _ in range(n_pairs):
        (id_len,) = struct.unpack("<I", take(4))
        pid = bytes(take(id_len)).decode("utf-8")
        (doc_len,) = struct.unpack("<I", take(4))
        doc = np.frombuffer(take(4 * doc_len), dtype="<u4").astype(int).tolist()
        (head_len,) = struct.unpack("<I", take(4))
        head = np.frombuffer(take(4 * head_len), dtype="<u4").astype(int).tolist()
        pairs.append(CorpusPair(pair_id=pid, document=doc, headline=head))
    if off != len(view):
        raise CorpusFormatError(f"{path}: {len(view) - off} trailing bytes")
    return pairs, meta, vocab_in, vocab_out


def read_embedding_table(path) -> tuple[int, dict[str, np.ndarray]]:
    """Read an external embedding table: "count dim" header, then token + reals per line."""
    table: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusFormatError(f"{path}: first line must be \"count dim\"")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise CorpusFormatError(f"{path}: first line must be \"count dim\"") from exc
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != dim + 1:
                raise CorpusFormatError(f"{path}: line {lineno}: expected token + {dim} values")
            try:
                table[fields[0]] = np.array([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: bad float") from exc
    if len(table) != count:
        raise CorpusFormatError(f"{path}: header says {count} vectors, found {len(table)}")
    return dim, table
