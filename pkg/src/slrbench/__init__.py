"""Isolated sign language recognition benchmark: landmark preprocessing, ConvLSTM and
Transformer classifiers, the training protocol and signer-independent evaluation."""

__version__ = "0.1.0"
