"""Semi-supervised text classification with paraphrase-based consistency training."""

__version__ = "0.1.0"
