"""Binary file formats: QKWS model files and PGRM matrix files.

Model file layout (little-endian):

    magic "QKWS" | u32 version | u32 flags (bit 0 = quantized)
    frontend block: u32 sample_rate, f64 window_ms, f64 hop_ms,
        u32 fft_size, u32 n_mels, u32 n_mfcc, f64 fmin, f64 fmax,
        f64 log_floor, u32 stack, u32 skip
    phone table: u32 count, then NUL-terminated UTF-8 names
    tensors: u32 count, then per tensor
        u16 name length + bytes | u8 dtype (0 = f32, 1 = int8 quantized)
        u8 rank | u32 dims[rank]
        int8: i8 range exponent + codes; f32: raw values

Matrix files hold one float32 row-major matrix:

    magic "PGRM" | u32 rows | u32 cols | f32 data
"""

import struct

import numpy as np

from . import quantization
from .frontend import FrontendConfig
from .model import AcousticModel, AffineWeights, LstmLayerWeights
from .quantization import QuantizedTensor, QuantRange

MODEL_MAGIC = b"QKWS"
MODEL_VERSION = 1
FLAG_QUANTIZED = 1 << 0

MATRIX_MAGIC = b"PGRM"

_FRONTEND_FMT = "<IddIIIdddII"

_DTYPE_F32 = 0
_DTYPE_INT8 = 1


class FormatError(ValueError):
    """Corrupt or inconsistent model/matrix file."""


def _model_tensors(model: AcousticModel):
    yield "norm.mean", model.norm_mean
    yield "norm.std", model.norm_std
    yield "proj.w", model.projection.w
    yield "proj.b", model.projection.b
    for i, layer in enumerate(model.lstm_layers):
        for name, tensor in layer.tensors():
            yield f"lstm{i}.{name}", tensor
    yield "out.w", model.output.w
    yield "out.b", model.output.b


def _write_tensor(out, name: str, tensor):
    encoded = name.encode("utf-8")
    out.append(struct.pack("<H", len(encoded)))
    out.append(encoded)
    if isinstance(tensor, QuantizedTensor):
        shape = tensor.shape
        out.append(struct.pack("<BB", _DTYPE_INT8, len(shape)))
        out.append(struct.pack(f"<{len(shape)}I", *shape))
        out.append(struct.pack("<b", tensor.qrange.exponent))
        out.append(tensor.codes.tobytes())
    else:
        arr = np.asarray(tensor, dtype="<f4")
        out.append(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())


def save_model(model: AcousticModel, path):
    flags = FLAG_QUANTIZED if model.quantized else 0
    cfg = model.frontend
    parts = [
        MODEL_MAGIC,
        struct.pack("<II", MODEL_VERSION, flags),
        struct.pack(
            _FRONTEND_FMT,
            cfg.sample_rate,
            cfg.window_ms,
            cfg.hop_ms,
            cfg.fft_size,
            cfg.n_mels,
            cfg.n_mfcc,
            cfg.fmin,
            cfg.fmax,
            cfg.log_floor,
            cfg.stack,
            cfg.skip,
        ),
        struct.pack("<I", len(model.phones)),
    ]
    for phone in model.phones:
        parts.append(phone.encode("utf-8") + b"\x00")
    tensors = list(_model_tensors(model))
    parts.append(struct.pack("<I", len(tensors)))
    for name, tensor in tensors:
        _write_tensor(parts, name, tensor)
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated model file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def cstring(self) -> str:
        end = self.data.find(b"\x00", self.pos)
        if end < 0:
            raise FormatError("unterminated string in model file")
        s = self.data[self.pos : end].decode("utf-8")
        self.pos = end + 1
        return s


def _read_tensor(r: _Reader):
    (name_len,) = r.unpack("<H")
    name = r.take(name_len).decode("utf-8")
    dtype, rank = r.unpack("<BB")
    dims = r.unpack(f"<{rank}I") if rank else ()
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if dtype == _DTYPE_INT8:
        (exponent,) = r.unpack("<b")
        if not quantization.EXPONENT_MIN <= exponent <= quantization.EXPONENT_MAX:
            raise FormatError(f"tensor {name}: range exponent {exponent} out of bounds")
        codes = np.frombuffer(r.take(count), dtype=np.int8).reshape(dims)
        return name, QuantizedTensor(codes.copy(), QuantRange(exponent))
    if dtype == _DTYPE_F32:
        raw = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        return name, raw.astype(np.float64)
    raise FormatError(f"tensor {name}: unknown dtype tag {dtype}")


def load_model(path) -> AcousticModel:
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != MODEL_MAGIC:
        raise FormatError("not a QKWS model file (bad magic)")
    version, flags = r.unpack("<II")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    quantized = bool(flags & FLAG_QUANTIZED)
    fe = r.unpack(_FRONTEND_FMT)
    frontend = FrontendConfig(
        sample_rate=fe[0],
        window_ms=fe[1],
        hop_ms=fe[2],
        fft_size=fe[3],
        n_mels=fe[4],
        n_mfcc=fe[5],
        fmin=fe[6],
        fmax=fe[7],
        log_floor=fe[8],
        stack=fe[9],
        skip=fe[10],
    )
    (phone_count,) = r.unpack("<I")
    if phone_count < 2 or phone_count > 10_000:
        raise FormatError(f"implausible phone count {phone_count}")
    phones = [r.cstring() for _ in range(phone_count)]
    (tensor_count,) = r.unpack("<I")
    tensors = {}
    for _ in range(tensor_count):
        name, tensor = _read_tensor(r)
        if name in tensors:
            raise FormatError(f"duplicate tensor {name}")
        tensors[name] = tensor
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after last tensor")

    def grab(name, want_float=False):
        if name not in tensors:
            raise FormatError(f"missing tensor {name}")
        t = tensors.pop(name)
        if want_float and isinstance(t, QuantizedTensor):
            raise FormatError(f"tensor {name} must be float")
        if not want_float and quantized != isinstance(t, QuantizedTensor):
            raise FormatError(f"tensor {name} does not match the quantized flag")
        return t

    norm_mean = grab("norm.mean", want_float=True)
    norm_std = grab("norm.std", want_float=True)
    projection = AffineWeights(grab("proj.w"), grab("proj.b"))
    layers = []
    i = 0
    while f"lstm{i}.w_ix" in tensors:
        kwargs = {}
        for name, _ in LstmLayerWeights.__dataclass_fields__.items():
            kwargs[name] = grab(f"lstm{i}.{name}")
        layers.append(LstmLayerWeights(**kwargs))
        i += 1
    output = AffineWeights(grab("out.w"), grab("out.b"))
    if tensors:
        raise FormatError(f"unexpected tensors: {sorted(tensors)}")
    try:
        return AcousticModel(
            projection=projection,
            lstm_layers=layers,
            output=output,
            phones=phones,
            frontend=frontend,
            norm_mean=norm_mean,
            norm_std=norm_std,
            quantized=quantized,
        )
    except ValueError as exc:
        raise FormatError(f"inconsistent model file: {exc}") from exc


def write_matrix(path, matrix):
    """Write one float32 matrix in the exchange format."""
    arr = np.asarray(matrix, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError("matrix files hold 2-D data")
    with open(path, "wb") as f:
        f.write(MATRIX_MAGIC)
        f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MATRIX_MAGIC:
        raise FormatError("not a PGRM matrix file (bad magic)")
    if len(data) < 12:
        raise FormatError("truncated matrix file")
    rows, cols = struct.unpack("<II", data[4:12])
    expect = 12 + 4 * rows * cols
    if len(data) != expect:
        raise FormatError(f"matrix file size {len(data)} != expected {expect}")
    return np.frombuffer(data[12:], dtype="<f4").reshape(rows, cols).copy()
