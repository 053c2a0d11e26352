"""wordspot: attribute-CNN word spotting for handwritten document images.

String embeddings (PHOC, SPOC, DCToW), a small deterministic tensor
engine with hand-written backward passes, loss functions, optimizers,
image augmentation, retrieval protocols with significance testing, a
synthetic corpus generator, and a command-line interface tying the
pieces into a train/embed/spot/evaluate pipeline.
"""

from wordspot.errors import ConfigError, DataError, NumericError, WordspotError

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "WordspotError",
    "ConfigError",
    "DataError",
    "NumericError",
]
