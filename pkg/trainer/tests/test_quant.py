import numpy as np
import pytest
import torch

import qkws
from qkws_trainer.quant import Q1_EXPONENT, Q4_EXPONENT, fake_quantize


class TestFakeQuantize:
    def test_hand_values(self):
        v = torch.tensor([0.5, 3.1, -5.0], dtype=torch.float64)
        out = fake_quantize(v, Q4_EXPONENT)
        assert out.tolist() == [0.5, 3.09375, -4.0]

    def test_engine_parity_on_shared_vectors(self, tmp_path):
        rng = np.random.default_rng(123)
        vectors = rng.uniform(-30.0, 30.0, size=100_000)
        path = tmp_path / "vectors.npy"
        np.save(path, vectors)
        shared = np.load(path)
        for exponent in (Q1_EXPONENT, Q4_EXPONENT):
            ours = fake_quantize(
                torch.as_tensor(shared, dtype=torch.float64), exponent
            ).numpy()
            theirs = qkws.fake_quantize(shared, qkws.QuantRange(exponent))
            np.testing.assert_array_equal(ours, theirs)

    def test_straight_through_gradient(self):
        v = torch.tensor([0.2, 0.9, 2.0, -2.0], dtype=torch.float64, requires_grad=True)
        out = fake_quantize(v, Q1_EXPONENT)
        out.sum().backward()
        # inside the range gradients pass; saturated entries are cut
        assert v.grad.tolist() == [1.0, 1.0, 0.0, 0.0]

    def test_idempotent(self):
        v = torch.linspace(-6, 6, 1001, dtype=torch.float64)
        once = fake_quantize(v, Q4_EXPONENT)
        twice = fake_quantize(once, Q4_EXPONENT)
        assert torch.equal(once, twice)


class TestActivationGridParity:
    def test_composed_activation_matches_engine_lut(self):
        # the engine folds Q1[f(Q4 grid)] into a 256-entry table; the
        # trainer composes the same functions in torch. Equal tables mean
        # the two libms agree on every grid point the quantized network
        # can ever evaluate.
        from qkws.quantization import Q4, build_lut

        grid = torch.arange(-128, 128, dtype=torch.float64) * Q4.step
        for kind, fn in (("sigmoid", torch.sigmoid), ("tanh", torch.tanh)):
            ours = fake_quantize(fn(grid), Q1_EXPONENT) * 128.0
            engine = build_lut(kind).table.astype(np.float64)
            np.testing.assert_array_equal(ours.numpy(), engine)
