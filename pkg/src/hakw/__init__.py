"""Kinyarwanda speech-command toolkit.

Corpus ingestion and QC, MFCC/spectrogram features, waveform augmentation,
CNN/LSTM training with fine-tuning, int8 quantization, streaming keyword
detection, and an HTTP collection service, behind one `hakw` CLI.
"""

__version__ = "0.1.0"
