"""Stack-and-skip LSTM acoustic model.

Three evaluation paths share one architecture (affine projection with
tanh, a stack of unidirectional LSTM layers, an affine output layer,
softmax):

* float: plain float arithmetic, for unquantized models;
* integer: int8 codes, int accumulators, bit-shift rescaling and the
  shared sigmoid/tanh lookup table, for quantized models;
* reference: the integer recurrences replayed in float with fake
  quantization at every grid point.

The integer and reference paths agree bit for bit: products of int8 grid
values and their sums are exact in float64, so the only rounding on
either side happens inside the shared quantizer.
"""

from dataclasses import dataclass

import numpy as np

from .ctc import Posteriorgram
from .frontend import FrontendConfig
from .quantization import (
    Q1,
    Q4,
    Q16,
    ActivationLUT,
    QuantizedTensor,
    QuantRange,
    build_lut,
    fake_quantize,
    quantize_codes,
    quantize_weights,
)
from . import quantization

GATES = ("i", "j", "f", "o")

# Network inputs (normalized features) are quantized to the Q4 range; the
# projection tanh then maps them into Q1 like every other activation.
INPUT_RANGE = Q4
LOGIT_RANGE = Q16


class ModelStructureError(ValueError):
    """Inconsistent shapes or mixed float/quantized tensors."""


def _is_quantized(tensor) -> bool:
    return isinstance(tensor, QuantizedTensor)


def _shape(tensor):
    return tensor.shape


@dataclass
class AffineWeights:
    w: np.ndarray | QuantizedTensor
    b: np.ndarray | QuantizedTensor

    def __post_init__(self):
        if _is_quantized(self.w) != _is_quantized(self.b):
            raise ModelStructureError("affine weight/bias quantization mismatch")
        if len(_shape(self.w)) != 2 or len(_shape(self.b)) != 1:
            raise ModelStructureError("affine weights must be (matrix, vector)")
        if _shape(self.w)[0] != _shape(self.b)[0]:
            raise ModelStructureError("affine bias width mismatch")

    @property
    def quantized(self) -> bool:
        return _is_quantized(self.w)

    @property
    def input_size(self) -> int:
        return _shape(self.w)[1]

    @property
    def output_size(self) -> int:
        return _shape(self.w)[0]

    @property
    def param_count(self) -> int:
        return self.w.size + self.b.size


@dataclass
class LstmLayerWeights:
    w_ix: np.ndarray | QuantizedTensor
    w_ih: np.ndarray | QuantizedTensor
    w_jx: np.ndarray | QuantizedTensor
    w_jh: np.ndarray | QuantizedTensor
    w_fx: np.ndarray | QuantizedTensor
    w_fh: np.ndarray | QuantizedTensor
    w_ox: np.ndarray | QuantizedTensor
    w_oh: np.ndarray | QuantizedTensor
    b_i: np.ndarray | QuantizedTensor
    b_j: np.ndarray | QuantizedTensor
    b_f: np.ndarray | QuantizedTensor
    b_o: np.ndarray | QuantizedTensor

    def __post_init__(self):
        tensors = self.tensors()
        kinds = {_is_quantized(t) for _, t in tensors}
        if len(kinds) != 1:
            raise ModelStructureError("mixed float/quantized tensors in LSTM layer")
        units = _shape(self.w_ix)[0]
        inputs = _shape(self.w_ix)[1]
        for name, t in tensors:
            shape = _shape(t)
            if name.startswith("w_") and name.endswith("x"):
                expect = (units, inputs)
            elif name.startswith("w_"):
                expect = (units, units)
            else:
                expect = (units,)
            if shape != expect:
                raise ModelStructureError(
                    f"LSTM tensor {name} has shape {shape}, expected {expect}"
                )

    def tensors(self):
        return [
            ("w_ix", self.w_ix), ("w_ih", self.w_ih),
            ("w_jx", self.w_jx), ("w_jh", self.w_jh),
            ("w_fx", self.w_fx), ("w_fh", self.w_fh),
            ("w_ox", self.w_ox), ("w_oh", self.w_oh),
            ("b_i", self.b_i), ("b_j", self.b_j),
            ("b_f", self.b_f), ("b_o", self.b_o),
        ]

    def gate(self, name: str):
        """(input matrix, recurrent matrix, bias) for gate i/j/f/o."""
        return (
            getattr(self, f"w_{name}x"),
            getattr(self, f"w_{name}h"),
            getattr(self, f"b_{name}"),
        )

    @property
    def quantized(self) -> bool:
        return _is_quantized(self.w_ix)

    @property
    def units(self) -> int:
        return _shape(self.w_ix)[0]

    @property
    def input_size(self) -> int:
        return _shape(self.w_ix)[1]

    @property
    def param_count(self) -> int:
        return sum(t.size for _, t in self.tensors())


@dataclass
class AcousticModel:
    projection: AffineWeights
    lstm_layers: list[LstmLayerWeights]
    output: AffineWeights
    phones: list[str]  # blank sentinel at index 0
    frontend: FrontendConfig
    norm_mean: np.ndarray
    norm_std: np.ndarray
    quantized: bool

    def __post_init__(self):
        if len(self.phones) < 2:
            raise ModelStructureError("phone table needs blank plus one phone")
        if self.output.output_size != len(self.phones):
            raise ModelStructureError(
                f"output width {self.output.output_size} != "
                f"{len(self.phones)} phone classes"
            )
        if not self.lstm_layers:
            raise ModelStructureError("model needs at least one LSTM layer")
        width = self.projection.output_size
        for i, layer in enumerate(self.lstm_layers):
            if layer.input_size != width:
                raise ModelStructureError(f"LSTM layer {i} input width mismatch")
            width = layer.units
        if self.output.input_size != width:
            raise ModelStructureError("output layer input width mismatch")
        if self.projection.input_size != self.frontend.stacked_size:
            raise ModelStructureError("projection width != stacked feature size")
        parts = [self.projection.quantized, self.output.quantized]
        parts += [l.quantized for l in self.lstm_layers]
        if any(p != self.quantized for p in parts):
            raise ModelStructureError("quantized flag does not match tensors")
        if self.norm_mean.shape != (self.frontend.n_mfcc,) or self.norm_std.shape != (
            self.frontend.n_mfcc,
        ):
            raise ModelStructureError("normalization stats must be n_mfcc wide")

    @property
    def num_classes(self) -> int:
        return len(self.phones)

    @property
    def input_size(self) -> int:
        return self.projection.input_size

    @property
    def units(self) -> list[int]:
        return [l.units for l in self.lstm_layers]

    @property
    def param_count(self) -> int:
        total = self.projection.param_count + self.output.param_count
        return total + sum(l.param_count for l in self.lstm_layers)

    def phone_index(self) -> dict[str, int]:
        """Phone name to class index, excluding the blank at 0."""
        return {name: i for i, name in enumerate(self.phones) if i > 0}


@dataclass
class LstmState:
    h: np.ndarray  # float64 values, or int8 Q1 codes when quantized
    c: np.ndarray  # float64 values, or int8 Q4 codes when quantized


def zero_state(units: int, quantized: bool) -> LstmState:
    dtype = np.int8 if quantized else np.float64
    return LstmState(np.zeros(units, dtype=dtype), np.zeros(units, dtype=dtype))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


# ---------------------------------------------------------------------------
# float path


def lstm_step_float(weights: LstmLayerWeights, x: np.ndarray, state: LstmState):
    i = _sigmoid(weights.w_ix @ x + weights.w_ih @ state.h + weights.b_i)
    j = np.tanh(weights.w_jx @ x + weights.w_jh @ state.h + weights.b_j)
    f = _sigmoid(weights.w_fx @ x + weights.w_fh @ state.h + weights.b_f)
    c = f * state.c + i * j
    o = _sigmoid(weights.w_ox @ x + weights.w_oh @ state.h + weights.b_o)
    h = o * np.tanh(c)
    return h, LstmState(h, c)


# ---------------------------------------------------------------------------
# integer path


def _quantized_affine(terms, bias: QuantizedTensor, out_range: QuantRange):
    """Accumulate int8 matrix products plus bias, requantized to out_range.

    ``terms`` is a list of (QuantizedTensor matrix, int8 code vector,
    operand QuantRange). All addends are aligned onto the finest scale by
    exact left shifts (64-bit temporaries; a single product always fits in
    32 bits), so no rounding happens before the final rescale.
    """
    accs = []
    exps = [bias.qrange.step_exponent]
    for w, codes, in_range in terms:
        accs.append(w.codes.astype(np.int64) @ codes.astype(np.int64))
        exps.append(w.qrange.step_exponent + in_range.step_exponent)
    common = min(exps)
    total = bias.codes.astype(np.int64) << np.int64(exps[0] - common)
    for acc, exp in zip(accs, exps[1:]):
        total = total + (acc << np.int64(exp - common))
    return quantization.rescale(total, common, out_range.step_exponent)


def lstm_step_quantized(
    weights: LstmLayerWeights,
    x_codes: np.ndarray,
    state: LstmState,
    sigmoid_lut: ActivationLUT,
    tanh_lut: ActivationLUT,
):
    """One step of the int8 LSTM; x and h carry Q1 codes, c carries Q4."""
    gates = {}
    for name in GATES:
        wx, wh, b = weights.gate(name)
        pre = _quantized_affine([(wx, x_codes, Q1), (wh, state.h, Q1)], b, Q4)
        gates[name] = (tanh_lut if name == "j" else sigmoid_lut)(pre)
    # cell update: f*c (scale 2^-12) and i*j (scale 2^-14) align exactly
    fc_exp = Q1.step_exponent + Q4.step_exponent
    ij_exp = Q1.step_exponent + Q1.step_exponent
    fc = gates["f"].astype(np.int64) * state.c.astype(np.int64)
    ij = gates["i"].astype(np.int64) * gates["j"].astype(np.int64)
    c = quantization.rescale(
        (fc << np.int64(fc_exp - ij_exp)) + ij, ij_exp, Q4.step_exponent
    )
    tanh_c = tanh_lut(c)
    oh = gates["o"].astype(np.int64) * tanh_c.astype(np.int64)
    h = quantization.rescale(oh, ij_exp, Q1.step_exponent)
    return h, LstmState(h, c)


# ---------------------------------------------------------------------------
# fake-quantized float reference (mirror of the integer path)


def lstm_step_reference(weights: LstmLayerWeights, x: np.ndarray, state: LstmState):
    """Integer-path recurrence replayed in float with fake quantization.

    ``x`` and the state must already be Q1/Q4 grid values; weights must be
    quantized. Serves as the bit-exactness oracle for the integer path.
    """
    if not weights.quantized:
        raise ModelStructureError("reference path needs quantized weights")
    vals = {}
    for name in GATES:
        wx, wh, b = weights.gate(name)
        pre = fake_quantize(
            wx.dequantize() @ x + wh.dequantize() @ state.h + b.dequantize(), Q4
        )
        act = np.tanh(pre) if name == "j" else _sigmoid(pre)
        vals[name] = fake_quantize(act, Q1)
    c = fake_quantize(vals["f"] * state.c + vals["i"] * vals["j"], Q4)
    h = fake_quantize(vals["o"] * fake_quantize(np.tanh(c), Q1), Q1)
    return h, LstmState(h, c)


# ---------------------------------------------------------------------------
# full network


class ModelStream:
    """Streaming forward pass holding per-stream LSTM states.

    step() maps one stacked feature frame to one posterior row; feeding
    frames one at a time reproduces the batch forward() exactly.
    """

    def __init__(self, model: AcousticModel):
        self.model = model
        if model.quantized:
            self._sigmoid_lut = build_lut("sigmoid")
            self._tanh_lut = build_lut("tanh")
        self.reset()

    def reset(self):
        self.states = [
            zero_state(l.units, self.model.quantized) for l in self.model.lstm_layers
        ]

    def step(self, frame: np.ndarray) -> np.ndarray:
        frame = np.asarray(frame, dtype=np.float64)
        if frame.shape != (self.model.input_size,):
            raise ModelStructureError(
                f"frame width {frame.shape} != model input {self.model.input_size}"
            )
        if self.model.quantized:
            return self._step_quantized(frame)
        return self._step_float(frame)

    def _step_float(self, frame):
        model = self.model
        x = np.tanh(model.projection.w @ frame + model.projection.b)
        for idx, layer in enumerate(model.lstm_layers):
            x, self.states[idx] = lstm_step_float(layer, x, self.states[idx])
        logits = model.output.w @ x + model.output.b
        return _softmax(logits)

    def _step_quantized(self, frame):
        model = self.model
        x = quantize_codes(frame, INPUT_RANGE)
        pre = _quantized_affine(
            [(model.projection.w, x, INPUT_RANGE)], model.projection.b, Q4
        )
        x = self._tanh_lut(pre)
        for idx, layer in enumerate(model.lstm_layers):
            x, self.states[idx] = lstm_step_quantized(
                layer, x, self.states[idx], self._sigmoid_lut, self._tanh_lut
            )
        logit_codes = _quantized_affine(
            [(model.output.w, x, Q1)], model.output.b, LOGIT_RANGE
        )
        logits = logit_codes.astype(np.float64) * LOGIT_RANGE.step
        return _softmax(logits)


def forward(model: AcousticModel, frames: np.ndarray) -> Posteriorgram:
    """Posteriors for a whole utterance of stacked feature frames."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ModelStructureError("frames must be a (T, input_size) matrix")
    stream = ModelStream(model)
    if frames.shape[0] == 0:
        return Posteriorgram(np.zeros((0, model.num_classes), dtype=np.float32))
    rows = [stream.step(f) for f in frames]
    return Posteriorgram(np.stack(rows))


def forward_reference(model: AcousticModel, frames: np.ndarray) -> Posteriorgram:
    """Fake-quantized float forward pass (oracle for the integer path)."""
    if not model.quantized:
        raise ModelStructureError("reference forward needs a quantized model")
    frames = np.asarray(frames, dtype=np.float64)
    rows = []
    states = [zero_state(l.units, quantized=False) for l in model.lstm_layers]
    for frame in frames:
        x = fake_quantize(frame, INPUT_RANGE)
        pre = fake_quantize(
            model.projection.w.dequantize() @ x + model.projection.b.dequantize(), Q4
        )
        x = fake_quantize(np.tanh(pre), Q1)
        for idx, layer in enumerate(model.lstm_layers):
            x, states[idx] = lstm_step_reference(layer, x, states[idx])
        logits = fake_quantize(
            model.output.w.dequantize() @ x + model.output.b.dequantize(), LOGIT_RANGE
        )
        rows.append(_softmax(logits))
    if not rows:
        return Posteriorgram(np.zeros((0, model.num_classes), dtype=np.float32))
    return Posteriorgram(np.stack(rows))


# ---------------------------------------------------------------------------
# construction helpers


def quantize_model(model: AcousticModel) -> AcousticModel:
    """Post-training quantization of every weight tensor."""
    if model.quantized:
        return model

    def q_affine(aff):
        return AffineWeights(quantize_weights(aff.w), quantize_weights(aff.b))

    layers = [
        LstmLayerWeights(**{n: quantize_weights(t) for n, t in layer.tensors()})
        for layer in model.lstm_layers
    ]
    return AcousticModel(
        projection=q_affine(model.projection),
        lstm_layers=layers,
        output=q_affine(model.output),
        phones=list(model.phones),
        frontend=model.frontend,
        norm_mean=model.norm_mean.copy(),
        norm_std=model.norm_std.copy(),
        quantized=True,
    )


def build_random_model(
    phones: list[str],
    layers: int = 3,
    units: int = 64,
    frontend: FrontendConfig | None = None,
    seed: int = 0,
    quantized: bool = False,
    weight_scale: float = 0.6,
) -> AcousticModel:
    """Randomly initialized model, mostly for tests and size accounting.

    Weights are drawn uniformly and snapped to float32 so that saving and
    reloading reproduces them exactly.
    """
    cfg = frontend or FrontendConfig()
    rng = np.random.default_rng(seed)

    def mat(rows, cols):
        scale = weight_scale / np.sqrt(cols)
        w = rng.uniform(-scale, scale, size=(rows, cols))
        return w.astype(np.float32).astype(np.float64)

    def vec(n):
        v = rng.uniform(-0.1, 0.1, size=n)
        return v.astype(np.float32).astype(np.float64)

    input_size = cfg.stacked_size
    proj = AffineWeights(mat(units, input_size), vec(units))
    lstm = []
    width = units
    for _ in range(layers):
        kwargs = {}
        for g in GATES:
            kwargs[f"w_{g}x"] = mat(units, width)
            kwargs[f"w_{g}h"] = mat(units, units)
            kwargs[f"b_{g}"] = vec(units)
        lstm.append(LstmLayerWeights(**kwargs))
        width = units
    out = AffineWeights(mat(len(phones), units), vec(len(phones)))
    model = AcousticModel(
        projection=proj,
        lstm_layers=lstm,
        output=out,
        phones=list(phones),
        frontend=cfg,
        norm_mean=np.zeros(cfg.n_mfcc),
        norm_std=np.ones(cfg.n_mfcc),
        quantized=False,
    )
    return quantize_model(model) if quantized else model
