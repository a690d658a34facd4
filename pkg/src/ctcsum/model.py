"""Emission network: embedding, stacked bidirectional LSTM, linear projection.

The network maps a sequence of input ids to one emission row per input
element, which is the structural contract the CTC loss relies on.  All
arithmetic is float64 and implemented directly in numpy, including full
backpropagation through time, so gradients can be validated against
finite differences without framework noise.  Checkpoints are stored in a
little-endian binary format (magic "CTCH") with a CRC-64 over the payload
and float32 tensor storage.

Gate packing convention: the four LSTM gates are concatenated along the
last weight axis in the order (input, forget, output, cell candidate),
so the three sigmoid gates form one contiguous block.  The training loop
batches same-length examples through vectorized twins of the single
sequence routines; both paths compute the same recurrences.
"""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ctc
from .errors import (
    CheckpointFormatError,
    DivergenceError,
    InfeasibleTargetError,
    OutOfVocabularyError,
    ShapeError,
)
from .numerics import derive_rng, softmax_rows

INIT_RANGE = 0.08  # uniform weight init half-width
FORGET_BIAS = 1.0


@dataclass
class ModelConfig:
    vocab_in: int
    n_labels: int  # output labels including blank (L')
    d_emb: int = 32
    d_hidden: int = 64
    n_layers: int = 2

    def __post_init__(self):
        for name in ("vocab_in", "n_labels", "d_emb", "d_hidden", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"ModelConfig.{name} must be positive")


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 5
    clip_norm: float = 5.0
    seed: int = 0
    optimizer: str = "adam"
    d_emb: int = 32
    d_hidden: int = 64
    n_layers: int = 2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.d_emb < 1 or self.d_hidden < 1 or self.n_layers < 1:
            raise ValueError("model dimensions must be positive")


@dataclass
class EpochReport:
    epoch: int
    mean_loss: float
    skipped: int
    steps: int
    wall_time: float


@dataclass
class ForwardCache:
    params: ModelParams
    input_ids: np.ndarray
    layer_caches: list
    top: np.ndarray  # T x 2*d_hidden, input to the projection
    logits: np.ndarray  # T x n_labels


def tensor_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor name -> shape map; order is the checkpoint declaration order."""
    h = config.d_hidden
    shapes: dict[str, tuple[int, ...]] = {"embed": (config.vocab_in, config.d_emb)}
    d_in = config.d_emb
    for layer in range(config.n_layers):
        for direction in ("fwd", "bwd"):
            shapes[f"lstm{layer}.{direction}.w_x"] = (d_in, 4 * h)
            shapes[f"lstm{layer}.{direction}.w_h"] = (h, 4 * h)
            shapes[f"lstm{layer}.{direction}.b"] = (4 * h,)
        d_in = 2 * h
    shapes["proj.w"] = (2 * h, config.n_labels)
    shapes["proj.b"] = (config.n_labels,)
    return shapes


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform [-0.08, 0.08] weights; forget-gate bias 1.0, other biases 0."""
    h = config.d_hidden
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_shapes(config).items():
        if name.endswith(".b") or name == "proj.b":
            t = np.zeros(shape)
            if name.endswith(".b") and name != "proj.b":
                t[h : 2 * h] = FORGET_BIAS
        else:
            t = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        tensors[name] = t
    return ModelParams(config=config, tensors=tensors)


def apply_embedding_table(params: ModelParams, tokens: list[str], table: dict[str, np.ndarray]) -> int:
    """Overwrite embedding rows for tokens present in an external table.

    Returns the number of rows replaced.  Vector length must equal d_emb.
    """
    embed = params.tensors["embed"]
    hits = 0
    for idx, token in enumerate(tokens):
        vec = table.get(token)
        if vec is None:
            continue
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (params.config.d_emb,):
            raise ShapeError(
                f"embedding for {token!r} has dim {vec.shape}, model wants ({params.config.d_emb},)"
            )
        embed[idx] = vec
        hits += 1
    return hits


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # clip keeps exp() in range; sigmoid is saturated to machine precision past +/-60
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _lstm_dir_forward(x: np.ndarray, w_x, w_h, b) -> dict:
    """One LSTM direction over a (T, d_in) input; states start at zero."""
    T = x.shape[0]
    h_dim = w_h.shape[0]
    pre = x @ w_x + b
    gates = np.empty((T, 3 * h_dim))  # sigmoid block: input, forget, output
    gc = np.empty((T, h_dim))
    cell = np.empty((T, h_dim))
    tanh_c = np.empty((T, h_dim))
    out = np.empty((T, h_dim))
    h = np.zeros(h_dim)
    c = np.zeros(h_dim)
    for t in range(T):
        z = pre[t] + h @ w_h
        s = _sigmoid(z[: 3 * h_dim])
        g = np.tanh(z[3 * h_dim :])
        c = s[h_dim : 2 * h_dim] * c + s[:h_dim] * g
        tc = np.tanh(c)
        h = s[2 * h_dim :] * tc
        gates[t] = s
        gc[t] = g
        cell[t] = c
        tanh_c[t] = tc
        out[t] = h
    return {"x": x, "s": gates, "g": gc, "c": cell, "tc": tanh_c, "h": out}


def _lstm_dir_backward(cache: dict, w_x, w_h, d_out: np.ndarray):
    gates, gc = cache["s"], cache["g"]
    cell, tanh_c, x = cache["c"], cache["tc"], cache["x"]
    T = gc.shape[0]
    h_dim = gc.shape[-1]
    d_z = np.empty((T, 4 * h_dim))
    dh = np.zeros(h_dim)
    dc = np.zeros(h_dim)
    for t in range(T - 1, -1, -1):
        dht = d_out[t] + dh
        s, g, tc = gates[t], gc[t], tanh_c[t]
        i, f, o = s[:h_dim], s[h_dim : 2 * h_dim], s[2 * h_dim :]
        do = dht * tc
        dct = dht * o * (1.0 - tc * tc) + dc
        di = dct * g
        dg = dct * i
        c_prev = cell[t - 1] if t > 0 else 0.0
        df = dct * c_prev
        d_z[t, :h_dim] = di * i * (1.0 - i)
        d_z[t, h_dim : 2 * h_dim] = df * f * (1.0 - f)
        d_z[t, 2 * h_dim : 3 * h_dim] = do * o * (1.0 - o)
        d_z[t, 3 * h_dim :] = dg * (1.0 - g * g)
        dh = d_z[t] @ w_h.T
        dc = dct * f
    d_x = d_z @ w_x.T
    d_wx = x.T @ d_z
    h_prev = np.vstack([np.zeros((1, h_dim)), cache["h"][:-1]])
    d_wh = h_prev.T @ d_z
    d_b = d_z.sum(axis=0)
    return d_x, d_wx, d_wh, d_b


def _lstm_dir_forward_batch(x: np.ndarray, w_x, w_h, b) -> dict:
    """Vectorized twin of _lstm_dir_forward over (B, T, d_in) inputs."""
    B, T, d_in = x.shape
    h_dim = w_h.shape[0]
    pre = (x.reshape(B * T, d_in) @ w_x).reshape(B, T, 4 * h_dim) + b
    gates = np.empty((B, T, 3 * h_dim))
    gc = np.empty((B, T, h_dim))
    cell = np.empty((B, T, h_dim))
    tanh_c = np.empty((B, T, h_dim))
    out = np.empty((B, T, h_dim))
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    for t in range(T):
        z = pre[:, t] + h @ w_h
        s = _sigmoid(z[:, : 3 * h_dim])
        g = np.tanh(z[:, 3 * h_dim :])
        c = s[:, h_dim : 2 * h_dim] * c + s[:, :h_dim] * g
        tc = np.tanh(c)
        h = s[:, 2 * h_dim :] * tc
        gates[:, t] = s
        gc[:, t] = g
        cell[:, t] = c
        tanh_c[:, t] = tc
        out[:, t] = h
    return {"x": x, "s": gates, "g": gc, "c": cell, "tc": tanh_c, "h": out}


def _lstm_dir_backward_batch(cache: dict, w_x, w_h, d_out: np.ndarray):
    """Vectorized twin of _lstm_dir_backward; weight grads are summed over the batch."""
    gates, gc = cache["s"], cache["g"]
    cell, tanh_c, x = cache["c"], cache["tc"], cache["x"]
    B, T, h_dim = gc.shape
    d_in = x.shape[-1]
    d_z = np.empty((B, T, 4 * h_dim))
    dh = np.zeros((B, h_dim))
    dc = np.zeros((B, h_dim))
    for t in range(T - 1, -1, -1):
        dht = d_out[:, t] + dh
        s, g, tc = gates[:, t], gc[:, t], tanh_c[:, t]
        i, f, o = s[:, :h_dim], s[:, h_dim : 2 * h_dim], s[:, 2 * h_dim :]
        do = dht * tc
        dct = dht * o * (1.0 - tc * tc) + dc
        di = dct * g
        dg = dct * i
        c_prev = cell[:, t - 1] if t > 0 else 0.0
        df = dct * c_prev
        d_z[:, t, :h_dim] = di * i * (1.0 - i)
        d_z[:, t, h_dim : 2 * h_dim] = df * f * (1.0 - f)
        d_z[:, t, 2 * h_dim : 3 * h_dim] = do * o * (1.0 - o)
        d_z[:, t, 3 * h_dim :] = dg * (1.0 - g * g)
        dh = d_z[:, t] @ w_h.T
        dc = dct * f
    flat_dz = d_z.reshape(B * T, 4 * h_dim)
    d_x = (flat_dz @ w_x.T).reshape(B, T, d_in)
    d_wx = x.reshape(B * T, d_in).T @ flat_dz
    h_prev = np.concatenate([np.zeros((B, 1, h_dim)), cache["h"][:, :-1]], axis=1)
    d_wh = h_prev.reshape(B * T, h_dim).T @ flat_dz
    d_b = flat_dz.sum(axis=(0))
    return d_x, d_wx, d_wh, d_b


def forward(params: ModelParams, input_ids) -> tuple[np.ndarray, ForwardCache]:
    """Emission matrix (T x L', rows softmax-normalized) plus the BPTT cache.

    The backward direction runs over the reversed input, so only the first
    layer's forward-direction states are pure functions of the prefix;
    deeper layers mix both directions through their inputs.
    """
    ids = np.asarray(input_ids, dtype=np.intp)
    if ids.ndim != 1 or ids.size < 1:
        raise ShapeError(f"input_ids must be a non-empty 1-D sequence, got shape {ids.shape}")
    if (ids < 0).any() or (ids >= params.config.vocab_in).any():
        bad = int(ids[(ids < 0) | (ids >= params.config.vocab_in)][0])
        raise OutOfVocabularyError(f"input id {bad} outside vocabulary of size {params.config.vocab_in}")
    tensors = params.tensors
    x = tensors["embed"][ids]
    layer_caches = []
    for layer in range(params.config.n_layers):
        fc = _lstm_dir_forward(
            x, tensors[f"lstm{layer}.fwd.w_x"], tensors[f"lstm{layer}.fwd.w_h"], tensors[f"lstm{layer}.fwd.b"]
        )
        bc = _lstm_dir_forward(
            x[::-1], tensors[f"lstm{layer}.bwd.w_x"], tensors[f"lstm{layer}.bwd.w_h"], tensors[f"lstm{layer}.bwd.b"]
        )
        x = np.concatenate([fc["h"], bc["h"][::-1]], axis=1)
        layer_caches.append((fc, bc))
    logits = x @ tensors["proj.w"] + tensors["proj.b"]
    emissions = softmax_rows(logits)
    cache = ForwardCache(params=params, input_ids=ids, layer_caches=layer_caches, top=x, logits=logits)
    return emissions, cache


def backward(cache: ForwardCache, grad_logits) -> dict[str, np.ndarray]:
    """Exact BPTT gradients for the loss whose logit gradient is grad_logits."""
    params = cache.params
    tensors = params.tensors
    gl = np.asarray(grad_logits, dtype=np.float64)
    if gl.shape != cache.logits.shape:
        raise ShapeError(f"grad_logits shape {gl.shape} does not match logits {cache.logits.shape}")
    h = params.config.d_hidden
    grads: dict[str, np.ndarray] = {}
    grads["proj.w"] = cache.top.T @ gl
    grads["proj.b"] = gl.sum(axis=0)
    d_x = gl @ tensors["proj.w"].T
    for layer in range(params.config.n_layers - 1, -1, -1):
        fc, bc = cache.layer_caches[layer]
        dxf, dwxf, dwhf, dbf = _lstm_dir_backward(
            fc, tensors[f"lstm{layer}.fwd.w_x"], tensors[f"lstm{layer}.fwd.w_h"], d_x[:, :h]
        )
        dxb, dwxb, dwhb, dbb = _lstm_dir_backward(
            bc, tensors[f"lstm{layer}.bwd.w_x"], tensors[f"lstm{layer}.bwd.w_h"], d_x[:, h:][::-1]
        )
        grads[f"lstm{layer}.fwd.w_x"] = dwxf
        grads[f"lstm{layer}.fwd.w_h"] = dwhf
        grads[f"lstm{layer}.fwd.b"] = dbf
        grads[f"lstm{layer}.bwd.w_x"] = dwxb
        grads[f"lstm{layer}.bwd.w_h"] = dwhb
        grads[f"lstm{layer}.bwd.b"] = dbb
        d_x = dxf + dxb[::-1]
    d_embed = np.zeros_like(tensors["embed"])
    np.add.at(d_embed, cache.input_ids, d_x)
    grads["embed"] = d_embed
    return grads


def _forward_batch(params: ModelParams, ids: np.ndarray):
    """Batched logits for same-length sequences; returns (logits B x T x L', cache)."""
    tensors = params.tensors
    x = tensors["embed"][ids]  # B x T x d_emb
    layer_caches = []
    for layer in range(params.config.n_layers):
        fc = _lstm_dir_forward_batch(
            x, tensors[f"lstm{layer}.fwd.w_x"], tensors[f"lstm{layer}.fwd.w_h"], tensors[f"lstm{layer}.fwd.b"]
        )
        bc = _lstm_dir_forward_batch(
            x[:, ::-1], tensors[f"lstm{layer}.bwd.w_x"], tensors[f"lstm{layer}.bwd.w_h"], tensors[f"lstm{layer}.bwd.b"]
        )
        x = np.concatenate([fc["h"], bc["h"][:, ::-1]], axis=2)
        layer_caches.append((fc, bc))
    B, T, top_dim = x.shape
    logits = (x.reshape(B * T, top_dim) @ tensors["proj.w"]).reshape(B, T, -1) + tensors["proj.b"]
    return logits, {"ids": ids, "layers": layer_caches, "top": x, "params": params}


def _backward_batch(cache: dict, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Batch-summed parameter gradients; zero grad_logits rows contribute nothing."""
    params = cache["params"]
    tensors = params.tensors
    h = params.config.d_hidden
    top = cache["top"]
    B, T, top_dim = top.shape
    gl = grad_logits.reshape(B * T, -1)
    grads: dict[str, np.ndarray] = {}
    grads["proj.w"] = top.reshape(B * T, top_dim).T @ gl
    grads["proj.b"] = gl.sum(axis=0)
    d_x = (gl @ tensors["proj.w"].T).reshape(B, T, top_dim)
    for layer in range(params.config.n_layers - 1, -1, -1):
        fc, bc = cache["layers"][layer]
        dxf, dwxf, dwhf, dbf = _lstm_dir_backward_batch(
            fc, tensors[f"lstm{layer}.fwd.w_x"], tensors[f"lstm{layer}.fwd.w_h"], d_x[:, :, :h]
        )
        dxb, dwxb, dwhb, dbb = _lstm_dir_backward_batch(
            bc, tensors[f"lstm{layer}.bwd.w_x"], tensors[f"lstm{layer}.bwd.w_h"], d_x[:, :, h:][:, ::-1]
        )
        grads[f"lstm{layer}.fwd.w_x"] = dwxf
        grads[f"lstm{layer}.fwd.w_h"] = dwhf
        grads[f"lstm{layer}.fwd.b"] = dbf
        grads[f"lstm{layer}.bwd.w_x"] = dwxb
        grads[f"lstm{layer}.bwd.w_h"] = dwhb
        grads[f"lstm{layer}.bwd.b"] = dbb
        d_x = dxf + dxb[:, ::-1]
    d_embed = np.zeros_like(tensors["embed"])
    np.add.at(d_embed, cache["ids"].ravel(), d_x.reshape(B * T, -1))
    grads["embed"] = d_embed
    return grads


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is <= max_norm.

    Returns the pre-clip norm.
    """
    sq = 0.0
    for g in grads.values():
        sq += float((g * g).sum())
    norm = math.sqrt(sq)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class _OptState:
    kind: str
    lr: float
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def _opt_step(params: ModelParams, grads: dict[str, np.ndarray], state: _OptState):
    if state.kind == "sgd":
        for name, g in grads.items():
            params.tensors[name] -= state.lr * g
        return
    b1, b2, eps = 0.9, 0.999, 1e-8
    state.t += 1
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        m_hat = m / (1.0 - b1**state.t)
        v_hat = v / (1.0 - b2**state.t)
        params.tensors[name] -= state.lr * m_hat / (np.sqrt(v_hat) + eps)


def train(
    pairs,
    cfg: TrainConfig,
    vocab_in: int,
    n_labels: int,
    initial_params: ModelParams | None = None,
    epoch_callback=None,
) -> tuple[ModelParams, list[EpochReport]]:
    """Mini-batch training of the BiLSTM emission model under the CTC loss.

    Per-example losses are averaged within a batch, the summed gradient is
    clipped to cfg.clip_norm by global norm, and CTC-infeasible pairs are
    skipped and counted.  Given the same seed (and a single thread) the
    run is bit-deterministic: init, shuffling, and reduction order are all
    fixed.  epoch_callback, if given, receives (params, EpochReport) after
    every epoch.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("training corpus is empty")
    feasible = sum(1 for p in pairs if ctc.min_frames(p.headline) <= len(p.document))
    if feasible == 0:
        raise InfeasibleTargetError(f"all {len(pairs)} training pairs are CTC-infeasible")

    config = ModelConfig(
        vocab_in=vocab_in,
        n_labels=n_labels,
        d_emb=cfg.d_emb,
        d_hidden=cfg.d_hidden,
        n_layers=cfg.n_layers,
    )
    params = initial_params if initial_params is not None else init_params(config, derive_rng(cfg.seed, "init"))
    if params.config.vocab_in < vocab_in or params.config.n_labels != n_labels:
        raise ShapeError("initial_params do not match the corpus vocabularies")
    opt = _OptState(kind=cfg.optimizer, lr=cfg.learning_rate)
    shuffle_rng = derive_rng(cfg.seed, "shuffle")

    reports: list[EpochReport] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.monotonic()
        order = shuffle_rng.permutation(len(pairs))
        loss_sum = 0.0
        n_seen = 0
        skipped = 0
        epoch_steps = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc: dict[str, np.ndarray] | None = None
            n_eff = 0
            batch_loss = 0.0
            # same-length groups run through the vectorized LSTM path;
            # group order follows the shuffled batch for determinism
            groups: dict[int, list[int]] = {}
            for idx in batch:
                groups.setdefault(len(pairs[idx].document), []).append(idx)
            for length in sorted(groups):
                members = groups[length]
                ids = np.array([pairs[idx].document for idx in members], dtype=np.intp)
                logits, fwd_cache = _forward_batch(params, ids)
                grad_logits = np.zeros_like(logits)
                for row, idx in enumerate(members):
                    try:
                        result = ctc.ctc_loss_and_grad(logits[row], pairs[idx].headline)
                    except InfeasibleTargetError:
                        skipped += 1
                        continue
                    except DivergenceError as exc:
                        raise DivergenceError(f"optimizer step {step + 1}: {exc}") from exc
                    grad_logits[row] = result.grad_logits
                    batch_loss += result.loss
                    n_eff += 1
                grads = _backward_batch(fwd_cache, grad_logits)
                if acc is None:
                    acc = grads
                else:
                    for name, g in grads.items():
                        acc[name] += g
            if n_eff == 0:
                continue
            step += 1
            epoch_steps += 1
            if not math.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at optimizer step {step}")
            for g in acc.values():
                g /= n_eff
            clip_global_norm(acc, cfg.clip_norm)
            _opt_step(params, acc, opt)
            loss_sum += batch_loss
            n_seen += n_eff
        report = EpochReport(
            epoch=epoch,
            mean_loss=loss_sum / max(n_seen, 1),
            skipped=skipped,
            steps=epoch_steps,
            wall_time=time.monotonic() - t0,
        )
        reports.append(report)
        if epoch_callback is not None:
            epoch_callback(params, report)
    return params, reports


# ---------------------------------------------------------------------------
# Checkpoint serialization
#
# Layout (all little-endian):
#   4 bytes  magic "CTCH"
#   u32      version (currently 1)
#   u64      CRC-64 of everything after this field
#   u32      metadata length, then that many bytes of UTF-8 JSON
#   tensors in declaration order: u32 rank, u32 dims..., float32 values
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"CTCH"
CKPT_VERSION = 1

_CRC64_POLY = 0xC96C5795D7870F42  # ECMA-182, reflected (CRC-64/XZ)


def _crc64_table() -> list[int]:
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC64_TABLE = _crc64_table()


def crc64(data: bytes) -> int:
    """CRC-64/XZ; check value for b"123456789" is 0x995DC9BBDF1939FA."""
    crc = 0xFFFFFFFFFFFFFFFF
    table = _CRC64_TABLE
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


@dataclass
class Checkpoint:
    params: ModelParams
    input_tokens: list[str]
    output_tokens: list[str]
    step: int
    meta: dict


def save_checkpoint(ckpt: Checkpoint, path):
    header_meta = {
        "config": asdict(ckpt.params.config),
        "input_tokens": ckpt.input_tokens,
        "output_tokens": ckpt.output_tokens,
        "step": ckpt.step,
        "meta": ckpt.meta,
    }
    meta_bytes = json.dumps(header_meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<I", len(meta_bytes)), meta_bytes]
    expected = tensor_shapes(ckpt.params.config)
    for name, shape in expected.items():
        t = ckpt.params.tensors[name]
        if t.shape != shape:
            raise ShapeError(f"tensor {name} has shape {t.shape}, config implies {shape}")
        arr = np.ascontiguousarray(t, dtype="<f4")
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    payload = b"".join(parts)
    header = CKPT_MAGIC + struct.pack("<I", CKPT_VERSION) + struct.pack("<Q", crc64(payload))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise CheckpointFormatError("checkpoint file is truncated (no header)")
    if blob[:4] != CKPT_MAGIC:
        raise CheckpointFormatError(f"bad magic {blob[:4]!r}, not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CKPT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (stored_crc,) = struct.unpack_from("<Q", blob, 8)
    payload = blob[16:]
    actual = crc64(payload)
    if actual != stored_crc:
        raise CheckpointFormatError(
            f"payload checksum mismatch: stored {stored_crc:#018x}, computed {actual:#018x}"
        )
    view = memoryview(payload)
    off = 0

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise CheckpointFormatError("checkpoint payload is truncated")
        chunk = view[off : off + n]
        off += n
        return chunk

    (meta_len,) = struct.unpack("<I", take(4))
    try:
        header_meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
        config = ModelConfig(**header_meta["config"])
        input_tokens = list(header_meta["input_tokens"])
        output_tokens = list(header_meta["output_tokens"])
        step_no = int(header_meta["step"])
        meta = dict(header_meta.get("meta", {}))
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"invalid checkpoint metadata: {exc}") from exc
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_shapes(config).items():
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        if dims != shape:
            raise CheckpointFormatError(f"tensor {name}: stored shape {dims}, config implies {shape}")
        count = int(np.prod(dims)) if dims else 1
        raw = take(4 * count)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float64)
    if off != len(view):
        raise CheckpointFormatError(f"{len(view) - off} trailing bytes after last tensor")
    params = ModelParams(config=config, tensors=tensors)
    return Checkpoint(
        params=params, input_tokens=input_tokens, output_tokens=output_tokens, step=step_no, meta=meta
    )
