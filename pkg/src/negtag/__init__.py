"""Joint clinical entity and negation tagging with a shared BiLSTM encoder."""

__version__ = "0.1.0"
