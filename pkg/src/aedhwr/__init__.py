"""Offline handwriting recognition with a DenseNet encoder and an attention LSTM decoder."""

__version__ = "0.1.0"
