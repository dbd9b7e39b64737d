import math

import numpy as np
import pytest
import torch

from qkws.ctc import Posteriorgram, Segment, ctc_forward
from qkws_trainer.network import AcousticNetwork, QuantAwareLstmCell


class TestCell:
    def test_zero_weights_zero_input(self):
        cell = QuantAwareLstmCell(3, 3)
        with torch.no_grad():
            for p in cell.parameters():
                p.zero_()
        x = torch.zeros(1, 3, dtype=torch.float64)
        state = (torch.zeros(1, 3, dtype=torch.float64),) * 2
        for quant in (False, True):
            h, (_, c) = cell(x, state, quantize_activations=quant)
            assert torch.all(h == 0) and torch.all(c == 0)

    def test_quantized_outputs_on_grid(self):
        cell = QuantAwareLstmCell(4, 4, generator=torch.Generator().manual_seed(0))
        x = torch.randn(2, 4, dtype=torch.float64)
        state = (torch.zeros(2, 4, dtype=torch.float64),) * 2
        h, (_, c) = cell(x, state, quantize_activations=True)
        assert torch.all(h * 128 == torch.round(h * 128))
        assert torch.all(c * 32 == torch.round(c * 32))
        assert torch.max(torch.abs(c)) <= 3.96875


class TestNetwork:
    def test_log_probs_normalized(self):
        net = AcousticNetwork(6, 5, 2, 4, seed=0)
        x = torch.randn(7, 3, 6, dtype=torch.float64)
        for quant in (False, True):
            lp = net(x, quantize_activations=quant)
            assert lp.shape == (7, 3, 4)
            sums = torch.exp(lp).sum(-1)
            assert torch.allclose(sums, torch.ones_like(sums))

    def test_quantization_changes_but_keeps_finite(self):
        net = AcousticNetwork(6, 5, 1, 4, seed=1)
        x = torch.randn(5, 2, 6, dtype=torch.float64)
        plain = net(x, quantize_activations=False)
        quant = net(x, quantize_activations=True)
        assert torch.isfinite(quant).all()
        assert not torch.equal(plain, quant)

    def test_gradients_flow_in_quantized_mode(self):
        net = AcousticNetwork(4, 4, 1, 3, seed=2)
        x = torch.randn(6, 1, 4, dtype=torch.float64)
        loss = net(x, quantize_activations=True).sum()
        loss.backward()
        grads = [p.grad for p in net.parameters()]
        assert all(g is not None for g in grads)
        assert any(g.abs().sum() > 0 for g in grads)


class TestCtcLossOracle:
    def test_matches_engine_forward_on_hand_example(self):
        # 4 frames, blank + 2 phones, a fixed posterior table
        probs = np.array(
            [
                [0.6, 0.3, 0.1],
                [0.2, 0.7, 0.1],
                [0.3, 0.2, 0.5],
                [0.8, 0.1, 0.1],
            ]
        )
        target = [1, 2]
        log_probs = torch.log(torch.as_tensor(probs, dtype=torch.float64))
        loss = torch.nn.functional.ctc_loss(
            log_probs.unsqueeze(1),
            torch.tensor([target]),
            torch.tensor([4]),
            torch.tensor([2]),
            blank=0,
            reduction="sum",
        )
        want = -ctc_forward(
            Posteriorgram(probs.astype(np.float32)), Segment(0, 3), target
        )
        assert float(loss) == pytest.approx(want, rel=1e-6)
