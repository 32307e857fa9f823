"""trident: three-branch contrastive decoding for retrieval-augmented QA.

The engine ensembles next-token logits from a parametric branch (question
only), a relevant-context branch and an irrelevant-context branch, with a
fixed or confidence-driven mixing weight, and ships the retrieval, context
selection, prompting, evaluation and knowledge-conflict tooling around it.
"""

__version__ = "0.1.0"

from trident.decoding import (
    DecodeStrategy,
    combine_cad,
    combine_contrastive,
    dynamic_alpha,
    softmax,
)

__all__ = [
    "DecodeStrategy",
    "combine_cad",
    "combine_contrastive",
    "dynamic_alpha",
    "softmax",
    "__version__",
]
