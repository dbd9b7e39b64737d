"""The trainable acoustic network: projection, LSTM stack, output layer.

Mirrors the engine architecture. Everything runs in float64 so that the
fake-quantized forward pass lands on exactly the same grid points as the
engine's integer path. `quantize_activations` switches the LSTM
recurrences between the plain equations and their quantized form.
"""

import torch
from torch import nn

from .quant import Q1_EXPONENT, Q4_EXPONENT, Q16_EXPONENT, fake_quantize

GATES = ("i", "j", "f", "o")


def _param(rows, cols=None, scale=0.5, generator=None):
    shape = (rows,) if cols is None else (rows, cols)
    fan = rows if cols is None else cols
    data = torch.empty(shape, dtype=torch.float64)
    data.uniform_(-scale / fan**0.5, scale / fan**0.5, generator=generator)
    return nn.Parameter(data)


class QuantAwareLstmCell(nn.Module):
    """LSTM cell with optional fake quantization of every activation."""

    def __init__(self, input_size, units, generator=None):
        super().__init__()
        self.input_size = input_size
        self.units = units
        for g in GATES:
            setattr(self, f"w_{g}x", _param(units, input_size, generator=generator))
            setattr(self, f"w_{g}h", _param(units, units, generator=generator))
            setattr(self, f"b_{g}", _param(units, scale=0.2, generator=generator))

    def _preact(self, name, x, h):
        wx = getattr(self, f"w_{name}x")
        wh = getattr(self, f"w_{name}h")
        b = getattr(self, f"b_{name}")
        return x @ wx.T + h @ wh.T + b

    def forward(self, x, state, quantize_activations=False):
        h, c = state
        if not quantize_activations:
            i = torch.sigmoid(self._preact("i", x, h))
            j = torch.tanh(self._preact("j", x, h))
            f = torch.sigmoid(self._preact("f", x, h))
            c = f * c + i * j
            o = torch.sigmoid(self._preact("o", x, h))
            h = o * torch.tanh(c)
            return h, (h, c)

        def q1(v):
            return fake_quantize(v, Q1_EXPONENT)

        def q4(v):
            return fake_quantize(v, Q4_EXPONENT)

        i = q1(torch.sigmoid(q4(self._preact("i", x, h))))
        j = q1(torch.tanh(q4(self._preact("j", x, h))))
        f = q1(torch.sigmoid(q4(self._preact("f", x, h))))
        c = q4(f * c + i * j)
        o = q1(torch.sigmoid(q4(self._preact("o", x, h))))
        h = q1(o * q1(torch.tanh(c)))
        return h, (h, c)


class AcousticNetwork(nn.Module):
    """Projection with tanh, LSTM stack, affine output; blank at index 0."""

    def __init__(self, input_size, units, layers, num_classes, seed=0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.input_size = input_size
        self.num_classes = num_classes
        self.proj_w = _param(units, input_size, generator=gen)
        self.proj_b = _param(units, scale=0.2, generator=gen)
        self.cells = nn.ModuleList()
        width = units
        for _ in range(layers):
            self.cells.append(QuantAwareLstmCell(width, units, generator=gen))
            width = units
        self.out_w = _param(num_classes, units, generator=gen)
        self.out_b = _param(num_classes, scale=0.2, generator=gen)

    @property
    def units(self) -> int:
        return self.proj_w.shape[0]

    def forward(self, features, quantize_activations=False):
        """features: (T, N, input_size) -> log posteriors (T, N, classes)."""
        steps, batch, _ = features.shape
        h = [
            features.new_zeros(batch, cell.units) for cell in self.cells
        ]
        c = [features.new_zeros(batch, cell.units) for cell in self.cells]
        logits = []
        for t in range(steps):
            x = features[t]
            if quantize_activations:
                x = fake_quantize(x, Q4_EXPONENT)
            x = x @ self.proj_w.T + self.proj_b
            if quantize_activations:
                x = fake_quantize(torch.tanh(fake_quantize(x, Q4_EXPONENT)), Q1_EXPONENT)
            else:
                x = torch.tanh(x)
            for idx, cell in enumerate(self.cells):
                x, (h[idx], c[idx]) = cell(
                    x, (h[idx], c[idx]), quantize_activations=quantize_activations
                )
            z = x @ self.out_w.T + self.out_b
            if quantize_activations:
                z = fake_quantize(z, Q16_EXPONENT)
            logits.append(z)
        return torch.log_softmax(torch.stack(logits), dim=-1)
