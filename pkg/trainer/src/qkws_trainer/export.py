"""Post-training weight quantization and QKWS model file export.

Writes the engine's model format directly (magic "QKWS", version 1):
header, frontend configuration block, phone table, then named tensor
records. Weights are clipped to [-8, +8] and coded as int8 on the next
power-of-two range; float export writes f32 tensors instead.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .network import GATES, AcousticNetwork

MODEL_MAGIC = b"QKWS"
MODEL_VERSION = 1
FLAG_QUANTIZED = 1

_FRONTEND_FMT = "<IddIIIdddII"
_DTYPE_F32 = 0
_DTYPE_INT8 = 1

WEIGHT_CLIP = 8.0
EXPONENT_MIN = -10
EXPONENT_MAX = 3


@dataclass(frozen=True)
class FrontendDefaults:
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    n_mels: int = 40
    n_mfcc: int = 20
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    stack: int = 5
    skip: int = 3


def round_half_away(values):
    arr = np.asarray(values, dtype=np.float64)
    return np.copysign(np.floor(np.abs(arr) + 0.5), arr)


def weight_exponent(max_abs: float) -> int:
    if max_abs <= 2.0 ** EXPONENT_MIN:
        return EXPONENT_MIN
    frac, exp = math.frexp(max_abs)
    e = exp - 1 if frac == 0.5 else exp
    return min(max(e, EXPONENT_MIN), EXPONENT_MAX)


def quantize_weights(weights) -> tuple[np.ndarray, int]:
    """(int8 codes, range exponent) for one tensor, engine rules."""
    clipped = np.clip(np.asarray(weights, dtype=np.float64), -WEIGHT_CLIP, WEIGHT_CLIP)
    exponent = weight_exponent(float(np.max(np.abs(clipped))) if clipped.size else 0.0)
    scale = 128.0 / 2.0 ** exponent
    codes = np.clip(round_half_away(clipped * scale), -128, 127).astype(np.int8)
    return codes, exponent


def dequantize(codes: np.ndarray, exponent: int) -> np.ndarray:
    return codes.astype(np.float64) * (2.0 ** exponent / 128.0)


def _model_tensors(model: AcousticNetwork, frontend: FrontendDefaults):
    n_mfcc = frontend.n_mfcc
    yield "norm.mean", np.zeros(n_mfcc)
    yield "norm.std", np.ones(n_mfcc)
    yield "proj.w", model.proj_w.detach().numpy()
    yield "proj.b", model.proj_b.detach().numpy()
    for i, cell in enumerate(model.cells):
        for g in GATES:
            yield f"lstm{i}.w_{g}x", getattr(cell, f"w_{g}x").detach().numpy()
            yield f"lstm{i}.w_{g}h", getattr(cell, f"w_{g}h").detach().numpy()
        for g in GATES:
            yield f"lstm{i}.b_{g}", getattr(cell, f"b_{g}").detach().numpy()
    yield "out.w", model.out_w.detach().numpy()
    yield "out.b", model.out_b.detach().numpy()


def _tensor_record(name: str, payload: bytes, dtype: int, shape) -> bytes:
    encoded = name.encode("utf-8")
    parts = [
        struct.pack("<H", len(encoded)),
        encoded,
        struct.pack("<BB", dtype, len(shape)),
        struct.pack(f"<{len(shape)}I", *shape),
        payload,
    ]
    return b"".join(parts)


def export_model(
    model: AcousticNetwork,
    path,
    phones: list[str],
    quantized: bool = True,
    frontend: FrontendDefaults | None = None,
) -> dict:
    """Write the model file; returns the quantized tensors by name.

    Normalization stats are written as identity (the toy data is already
    in network input space), and unless a frontend block is supplied one
    is derived so the engine's stacked feature width matches the network
    input. Raises if the phone table does not match the output width.
    """
    if len(phones) != model.num_classes:
        raise ValueError(
            f"phone table has {len(phones)} entries, network outputs "
            f"{model.num_classes}"
        )
    if frontend is None:
        # toy features are consumed directly: one base frame per input
        frontend = FrontendDefaults(
            n_mfcc=model.input_size,
            n_mels=max(40, model.input_size),
            stack=1,
            skip=1,
        )
    if frontend.stack * frontend.n_mfcc != model.input_size:
        raise ValueError("frontend stacked width does not match the network input")
    parts = [
        MODEL_MAGIC,
        struct.pack("<II", MODEL_VERSION, FLAG_QUANTIZED if quantized else 0),
        struct.pack(
            _FRONTEND_FMT,
            frontend.sample_rate,
            frontend.window_ms,
            frontend.hop_ms,
            frontend.fft_size,
            frontend.n_mels,
            frontend.n_mfcc,
            frontend.fmin,
            frontend.fmax,
            frontend.log_floor,
            frontend.stack,
            frontend.skip,
        ),
        struct.pack("<I", len(phones)),
    ]
    for phone in phones:
        parts.append(phone.encode("utf-8") + b"\x00")

    tensors = list(_model_tensors(model, frontend))
    parts.append(struct.pack("<I", len(tensors)))
    exported = {}
    for name, array in tensors:
        if name.startswith("norm.") or not quantized:
            payload = np.asarray(array, dtype="<f4").tobytes()
            parts.append(_tensor_record(name, payload, _DTYPE_F32, array.shape))
        else:
            codes, exponent = quantize_weights(array)
            exported[name] = (codes, exponent)
            payload = struct.pack("<b", exponent) + codes.tobytes()
            parts.append(_tensor_record(name, payload, _DTYPE_INT8, codes.shape))
    with open(path, "wb") as f:
        f.write(b"".join(parts))
    return exported


def apply_weight_quantization(model: AcousticNetwork) -> AcousticNetwork:
    """Replace every parameter value by its quantized-grid value in place.

    Running the result with quantize_activations=True reproduces the
    engine's integer inference on the exported file.
    """
    with torch.no_grad():
        for param in model.parameters():
            codes, exponent = quantize_weights(param.detach().numpy())
            param.copy_(torch.as_tensor(dequantize(codes, exponent)))
    return model
