"""Symmetric power-of-two 8-bit quantization.

Every quantized value lives on a grid ``code * 2**e / 128`` with ``code``
an int8 in [-128, 127] and ``e`` the range exponent: the representable
interval is [-2**e, +2**e). Because all scales are powers of two, moving a
value between scales is an exact bit shift, which is what lets the integer
inference path reproduce the floating-point reference bit for bit.

Rounding is round-half-away-from-zero everywhere, on both the float and
the integer side.
"""

import math
from dataclasses import dataclass

import numpy as np

CODE_MIN = -128
CODE_MAX = 127

# Range exponents are bounded: activations use 0 / 2 / 4 (Q1, Q4, Q16),
# weight matrices may need scales down to 2**-10 for near-zero tensors.
EXPONENT_MIN = -10
EXPONENT_MAX = 4

# Weights are clipped to [-8, +8] before quantization, so their range
# exponent never exceeds 3 (2**3 = 8).
WEIGHT_CLIP = 8.0
WEIGHT_EXPONENT_MAX = 3


def round_half_away(values):
    """Round to the nearest integer with ties going away from zero."""
    arr = np.asarray(values, dtype=np.float64)
    return np.copysign(np.floor(np.abs(arr) + 0.5), arr)


@dataclass(frozen=True)
class QuantRange:
    """Symmetric quantization range [-2**exponent, +2**exponent)."""

    exponent: int

    def __post_init__(self):
        if not EXPONENT_MIN <= self.exponent <= EXPONENT_MAX:
            raise ValueError(
                f"range exponent {self.exponent} outside "
                f"[{EXPONENT_MIN}, {EXPONENT_MAX}]"
            )

    @property
    def bound(self) -> float:
        return float(2.0 ** self.exponent)

    @property
    def step(self) -> float:
        """Value of one quantization step (the LSB)."""
        return self.bound / 128.0

    @property
    def step_exponent(self) -> int:
        """log2 of the step: value = code * 2**step_exponent."""
        return self.exponent - 7


Q1 = QuantRange(0)
Q4 = QuantRange(2)
Q16 = QuantRange(4)


@dataclass(frozen=True)
class QuantizedTensor:
    """Int8 codes plus the power-of-two range they are scaled by."""

    codes: np.ndarray
    qrange: QuantRange

    def __post_init__(self):
        if self.codes.dtype != np.int8:
            raise ValueError(f"codes must be int8, got {self.codes.dtype}")

    @property
    def shape(self):
        return self.codes.shape

    @property
    def size(self) -> int:
        return self.codes.size

    def dequantize(self) -> np.ndarray:
        """Real values represented by the codes (exact in float64)."""
        return self.codes.astype(np.float64) * self.qrange.step


def quantize_codes(values, qrange: QuantRange) -> np.ndarray:
    """Int8 codes of the nearest grid points of ``qrange``."""
    scaled = np.asarray(values, dtype=np.float64) * (128.0 / qrange.bound)
    return np.clip(round_half_away(scaled), CODE_MIN, CODE_MAX).astype(np.int8)


def fake_quantize(value, qrange: QuantRange):
    """Snap ``value`` onto the int8 grid of ``qrange``, staying in float.

    Scalars come back as float, arrays as float64 arrays. The result is an
    exact grid point, so applying the operator twice is a no-op.
    """
    out = quantize_codes(value, qrange).astype(np.float64) * qrange.step
    if np.ndim(value) == 0:
        return float(out)
    return out


def weight_exponent(max_abs: float) -> int:
    """Smallest allowed range exponent whose bound covers ``max_abs``."""
    if max_abs <= 2.0 ** EXPONENT_MIN:
        return EXPONENT_MIN
    frac, exp = math.frexp(max_abs)  # max_abs = frac * 2**exp, frac in [0.5, 1)
    e = exp - 1 if frac == 0.5 else exp
    return min(max(e, EXPONENT_MIN), WEIGHT_EXPONENT_MAX)


def quantize_weights(weights) -> QuantizedTensor:
    """Post-training weight quantization.

    Weights are clipped to [-8, +8], the range is the next power of two
    above the largest magnitude, and codes are rounded onto that grid. An
    all-zero tensor gets the smallest allowed exponent.
    """
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    clipped = np.clip(w, -WEIGHT_CLIP, WEIGHT_CLIP)
    max_abs = float(np.max(np.abs(clipped))) if clipped.size else 0.0
    qrange = QuantRange(weight_exponent(max_abs))
    return QuantizedTensor(quantize_codes(clipped, qrange), qrange)


@dataclass(frozen=True)
class ActivationLUT:
    """256-entry int8 lookup table for a saturating activation.

    Input codes are interpreted in the Q4 domain (range (-4, +4)), output
    codes in Q1 (range (-1, +1)). One table therefore serves every sigmoid
    and tanh evaluation in the quantized network.
    """

    kind: str
    table: np.ndarray  # int8, indexed by input code + 128

    def __call__(self, codes) -> np.ndarray:
        return self.table[np.asarray(codes, dtype=np.int16) + 128]


def build_lut(kind: str) -> ActivationLUT:
    codes = np.arange(CODE_MIN, CODE_MAX + 1, dtype=np.float64)
    x = codes * Q4.step
    if kind == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-x))
    elif kind == "tanh":
        y = np.tanh(x)
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    table = np.clip(round_half_away(y * 128.0), CODE_MIN, CODE_MAX).astype(np.int8)
    return ActivationLUT(kind, table)


def rescale(acc, from_exponent: int, to_exponent: int):
    """Requantize integer fixed-point values between power-of-two scales.

    ``acc`` holds codes with value ``code * 2**from_exponent``; the result
    holds int8 codes at ``2**to_exponent``. Downscaling rounds half away
    from zero, upscaling is an exact left shift; the output is clamped to
    the int8 range. Equivalent to fake-quantizing the represented real
    value onto the target grid.
    """
    arr = np.asarray(acc, dtype=np.int64)
    shift = to_exponent - from_exponent
    if shift <= 0:
        out = arr << np.int64(-shift)
    else:
        half = np.int64(1) << np.int64(shift - 1)
        mag = (np.abs(arr) + half) >> np.int64(shift)
        out = np.where(arr < 0, -mag, mag)
    out = np.clip(out, CODE_MIN, CODE_MAX).astype(np.int8)
    if np.ndim(acc) == 0:
        return out[()] if isinstance(out, np.ndarray) else out
    return out
