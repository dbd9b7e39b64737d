"""Toy-scale CTC trainer producing engine-loadable quantized models."""

from .data import load_dataset, make_dataset, save_dataset
from .export import apply_weight_quantization, export_model, quantize_weights
from .network import AcousticNetwork, QuantAwareLstmCell
from .quant import fake_quantize
from .train import TrainConfig, TrainResult, per_frame_ctc_loss, train_toy

__version__ = "0.1.0"
