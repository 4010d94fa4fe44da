"""tunsent: sentiment analysis for Latin-script Arabic dialect text.

Subword skipgram embeddings (hashed character n-grams or BPE subunits) feed
a from-scratch histogram gradient-boosted tree classifier, with optional
class rebalancing and a cross-validated grid-search protocol.
"""

from . import balancing, corpus, embeddings, evaluation, gbdt, pipeline

__version__ = "0.1.0"

__all__ = [
    "balancing",
    "corpus",
    "embeddings",
    "evaluation",
    "gbdt",
    "pipeline",
    "__version__",
]
