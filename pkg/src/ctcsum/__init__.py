"""ctcsum: abstractive headline generation with a BiLSTM emission model and CTC.

Train a recurrent emission network under the CTC loss, decode summaries
by blank collapse (greedy or prefix beam search), run sliding-window
inference over long documents, and evaluate with ROUGE and LCS order
scores.  Every numerical core ships with an independent brute-force
oracle; see `ctcsum.selfcheck` or `ctcsum selfcheck` on the command line.
"""

from .ctc import CtcResult, ctc_log_prob, ctc_log_prob_bruteforce, ctc_loss_and_grad, extend_target
from .decode import DecodeResult, beam_decode, blank_saliency, collapse, greedy_decode
from .headline import SummaryResult, WindowConfig, select_headline, summarize_document, windows
from .metrics import RougeReport, lcs_order_score, rouge_l, rouge_n, split_by_lcs
from .model import (
    Checkpoint,
    ModelConfig,
    ModelParams,
    TrainConfig,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .numerics import derive_rng, log_sum_exp, matmul, seeded_rng, softmax_rows
from .text import CorpusPair, Vocabulary, build_vocab, decode_ids, encode, k_fold, tokenize

__version__ = "0.1.0"

__all__ = [
    "CtcResult", "ctc_log_prob", "ctc_log_prob_bruteforce", "ctc_loss_and_grad", "extend_target",
    "DecodeResult", "beam_decode", "blank_saliency", "collapse", "greedy_decode",
    "SummaryResult", "WindowConfig", "select_headline", "summarize_document", "windows",
    "RougeReport", "lcs_order_score", "rouge_l", "rouge_n", "split_by_lcs",
    "Checkpoint", "ModelConfig", "ModelParams", "TrainConfig",
    "backward", "forward", "init_params", "load_checkpoint", "save_checkpoint", "train",
    "derive_rng", "log_sum_exp", "matmul", "seeded_rng", "softmax_rows",
    "CorpusPair", "Vocabulary", "build_vocab", "decode_ids", "encode", "k_fold", "tokenize",
    "__version__",
]
