import io
import json
import os
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from ctcsum import cli, model, synthetic, text
from ctcsum.numerics import derive_rng

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
GOLDEN_DIR = os.path.join(DATA_DIR, "golden")


def run_cli(argv) -> tuple[int, str, str]:
    """Invoke the CLI in-process, returning (exit code, stdout, stderr)."""
    out = io.StringIO()
    err = io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        rc = cli.main(list(argv))
    return rc, out.getvalue(), err.getvalue()


def build_golden(out_dir: str) -> dict[str, str]:
    """Deterministic prepare/train/summarize pipeline behind the golden files.

    Returns the paths of the regenerable artifacts.  Committed goldens in
    tests/data/golden were produced by exactly this recipe.
    """
    corpus = os.path.join(DATA_DIR, "corpus_tiny.jsonl")
    docs = os.path.join(DATA_DIR, "golden_input.jsonl")
    steps = [
        ["prepare", "--corpus", corpus, "--mode", "character", "--out-dir", out_dir],
        ["train", "--corpus", os.path.join(out_dir, "corpus.bin"), "--out-dir", out_dir,
         "--epochs", "2", "--batch-size", "2", "--seed", "2024", "--d-emb", "8", "--d-hidden", "8"],
        ["summarize", "--checkpoint", os.path.join(out_dir, "model.ctch"), "--input", docs,
         "--output", os.path.join(out_dir, "preds.jsonl"),
         "--window-len", "8", "--stride", "3", "--max-windows", "5", "--scan-len", "20",
         "--diagnostics"],
    ]
    for argv in steps:
        rc, out, err = run_cli(argv)
        assert rc == 0, f"golden step {argv[0]} failed: {out}{err}"
    return {
        "checkpoint": os.path.join(out_dir, "model.ctch"),
        "predictions": os.path.join(out_dir, "preds.jsonl"),
        "vocab_in": os.path.join(out_dir, "vocab.in.txt"),
        "vocab_out": os.path.join(out_dir, "vocab.out.txt"),
    }


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def random_emissions(rng: np.random.Generator, T: int, n_labels: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_labels), size=T)


@pytest.fixture(scope="session")
def tiny_trained():
    """A small model trained to convergence on a 400-pair char task.

    Session-scoped: several decoding and windowing tests want a model whose
    emissions actually mean something.
    """
    rng = derive_rng(414, "data")
    raw = [text.RawPair(r["id"], r["document"], r["headline"]) for r in synthetic.generate_char_task(700, rng)]
    vocab_in = text.build_vocab((p.document for p in raw), "character")
    vocab_out = text.build_vocab((p.headline for p in raw), "character")
    pairs, _ = text.encode_corpus(raw, vocab_in, vocab_out, "character", k=1, truncate=0)
    cfg = model.TrainConfig(epochs=25, batch_size=8, seed=414, d_emb=16, d_hidden=32, learning_rate=5e-3)
    params, reports = model.train(pairs, cfg, len(vocab_in), len(vocab_out))
    return {
        "params": params,
        "vocab_in": vocab_in,
        "vocab_out": vocab_out,
        "pairs": pairs,
        "final_loss": reports[-1].mean_loss,
    }
