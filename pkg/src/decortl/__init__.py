"""Contrastive, syntax-aware decoding for Verilog generation.

The pieces compose left to right: a backend supplies next-token logits
and token embeddings, a decoding strategy turns each step's distribution
into an emitted token, and the analysis/evaluation layers consume the
step traces the decode loop records.
"""

from .backend import (
    EmbeddingTable,
    MockBackend,
    Vocabulary,
    load_backend,
    load_mock_spec,
    write_mock_spec,
)
from .decoding import (
    Contrastive,
    ContrastiveTA,
    DecodeConfig,
    DecodeResult,
    Greedy,
    Nucleus,
    SelfClass,
    TopK,
    TopKTA,
    TransitionTablePolicy,
    adapt_temperature,
    contrastive_rerank,
    decode,
    entropy,
    read_trace,
    softmax_with_temperature,
    strategy_label,
    top_k_candidates,
    write_trace,
)
from .verilog import Lexicon, TokenClass, classify, lex, load_lexicon

__version__ = "0.1.0"

__all__ = [
    "Contrastive",
    "ContrastiveTA",
    "DecodeConfig",
    "DecodeResult",
    "EmbeddingTable",
    "Greedy",
    "Lexicon",
    "MockBackend",
    "Nucleus",
    "SelfClass",
    "TokenClass",
    "TopK",
    "TopKTA",
    "TransitionTablePolicy",
    "Vocabulary",
    "adapt_temperature",
    "classify",
    "contrastive_rerank",
    "decode",
    "entropy",
    "lex",
    "load_backend",
    "load_lexicon",
    "load_mock_spec",
    "read_trace",
    "softmax_with_temperature",
    "strategy_label",
    "top_k_candidates",
    "write_mock_spec",
    "write_trace",
    "__version__",
]
