"""Static-analysis malware family classification pipeline.

Disassembly parsing (asm-lite grammar), opcode and key-API sequence
extraction, GloVe embedding training, feature fusion, a hybrid
LSTM + gated-CNN classifier (MCC_RCNN) with hand-written backprop,
classic-ML baselines, evaluation metrics, and a reproducible
experiment harness.
"""

__version__ = "0.1.0"
