"""Fake quantization with a straight-through gradient.

The forward pass snaps values onto the int8 grid code * 2**e / 128 with
round-half-away-from-zero, matching the engine's quantizer bit for bit in
float64. The backward pass passes gradients through inside the
representable range and zeroes them where the clamp saturated.
"""

import torch

CODE_MIN = -128.0
CODE_MAX = 127.0

Q1_EXPONENT = 0
Q4_EXPONENT = 2
Q16_EXPONENT = 4


def round_half_away(t: torch.Tensor) -> torch.Tensor:
    return torch.floor(t.abs() + 0.5) * torch.sign(t)


class _FakeQuantize(torch.autograd.Function):
    @staticmethod
    def forward(ctx, values, bound):
        scaled = values * (128.0 / bound)
        ctx.save_for_backward((scaled >= CODE_MIN - 0.5) & (scaled <= CODE_MAX + 0.5))
        codes = torch.clamp(round_half_away(scaled), CODE_MIN, CODE_MAX)
        return codes * (bound / 128.0)

    @staticmethod
    def backward(ctx, grad_out):
        (inside,) = ctx.saved_tensors
        return grad_out * inside, None


def fake_quantize(values: torch.Tensor, exponent: int) -> torch.Tensor:
    """Snap onto the int8 grid of the range [-2**exponent, +2**exponent)."""
    return _FakeQuantize.apply(values, float(2.0 ** exponent))
