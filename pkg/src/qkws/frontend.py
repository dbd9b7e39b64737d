"""Audio frontend: MFCC extraction and stack-5/skip-3 frame assembly.

Each base frame is computed from its own window of samples, so chunked
streaming input produces bit-identical features to one-shot processing.
"""

import functools
import wave
from dataclasses import dataclass

import numpy as np


class FrontendError(ValueError):
    """Unusable audio or inconsistent frontend configuration."""


@dataclass(frozen=True)
class FrontendConfig:
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

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise FrontendError("sample rate must be positive")
        if self.stack < 1 or self.skip < 1:
            raise FrontendError("stack and skip must be >= 1")
        if self.n_mfcc > self.n_mels:
            raise FrontendError("n_mfcc cannot exceed n_mels")
        if self.fft_size < self.window_samples:
            raise FrontendError("fft_size smaller than the analysis window")
        if self.log_floor <= 0.0:
            raise FrontendError("log floor must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def stacked_size(self) -> int:
        return self.stack * self.n_mfcc

    @property
    def frame_seconds(self) -> float:
        """Duration covered by one stacked-frame hop."""
        return self.skip * self.hop_ms / 1000.0


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray  # int16, mono
    sample_rate: int

    def __post_init__(self):
        if self.samples.dtype != np.int16 or self.samples.ndim != 1:
            raise FrontendError("audio must be 1-D int16 PCM")


def read_wav(path) -> AudioBuffer:
    """Read a RIFF PCM16 mono file."""
    with wave.open(str(path), "rb") as wav:
        if wav.getcomptype() != "NONE":
            raise FrontendError(f"{path}: compressed WAV is not supported")
        if wav.getsampwidth() != 2:
            raise FrontendError(f"{path}: expected 16-bit PCM")
        if wav.getnchannels() != 1:
            raise FrontendError(f"{path}: expected mono audio")
        rate = wav.getframerate()
        data = wav.readframes(wav.getnframes())
    return AudioBuffer(np.frombuffer(data, dtype="<i2"), rate)


def write_wav(path, audio: AudioBuffer):
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(audio.sample_rate)
        wav.writeframes(audio.samples.astype("<i2").tobytes())


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FrontendConfig) -> np.ndarray:
    """Triangular mel filters over the power-spectrum bins."""
    n_bins = config.fft_size // 2 + 1
    mel_points = np.linspace(
        _hz_to_mel(config.fmin), _hz_to_mel(config.fmax), config.n_mels + 2
    )
    hz_points = _mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * config.sample_rate / config.fft_size
    bank = np.zeros((config.n_mels, n_bins))
    for m in range(config.n_mels):
        left, center, right = hz_points[m : m + 3]
        rising = (bin_freqs - left) / max(center - left, 1e-12)
        falling = (right - bin_freqs) / max(right - center, 1e-12)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def dct_matrix(n_mfcc: int, n_mels: int) -> np.ndarray:
    """Orthonormal DCT-II rows used to decorrelate log-mel energies."""
    n = np.arange(n_mels)
    mat = np.cos(np.pi * np.outer(np.arange(n_mfcc), 2 * n + 1) / (2 * n_mels))
    mat *= np.sqrt(2.0 / n_mels)
    mat[0] *= np.sqrt(0.5)
    return mat


@functools.lru_cache(maxsize=8)
def _analyzer(config: FrontendConfig):
    return (
        np.hamming(config.window_samples),
        mel_filterbank(config),
        dct_matrix(config.n_mfcc, config.n_mels),
    )


def _mfcc_frame(window: np.ndarray, config: FrontendConfig) -> np.ndarray:
    hamming, bank, dct = _analyzer(config)
    spectrum = np.abs(np.fft.rfft(window * hamming, config.fft_size)) ** 2
    logmel = np.log(np.maximum(bank @ spectrum, config.log_floor))
    return dct @ logmel


def compute_mfcc(audio: AudioBuffer, config: FrontendConfig) -> np.ndarray:
    """MFCC matrix, one row per hop; empty or mismatched audio is an error."""
    if audio.sample_rate != config.sample_rate:
        raise FrontendError(
            f"audio is {audio.sample_rate} Hz, expected {config.sample_rate}"
        )
    if audio.samples.size == 0:
        raise FrontendError("empty audio")
    window, hop = config.window_samples, config.hop_samples
    n = audio.samples.size
    count = (n - window) // hop + 1 if n >= window else 0
    samples = audio.samples.astype(np.float64)
    out = np.zeros((count, config.n_mfcc))
    for i in range(count):
        out[i] = _mfcc_frame(samples[i * hop : i * hop + window], config)
    return out


def stack_and_skip(frames: np.ndarray, stack: int = 5, skip: int = 3) -> np.ndarray:
    """Concatenate ``stack`` consecutive frames, advancing ``skip`` frames.

    Partial stacks at the end are dropped; no padding.
    """
    if stack < 1 or skip < 1:
        raise ValueError("stack and skip must be >= 1")
    frames = np.asarray(frames)
    t_base, width = frames.shape
    count = (t_base - stack) // skip + 1 if t_base >= stack else 0
    out = np.zeros((count, stack * width), dtype=frames.dtype)
    for t in range(count):
        out[t] = frames[t * skip : t * skip + stack].reshape(-1)
    return out


class FeatureStream:
    """Incremental audio-to-network-input pipeline for one stream.

    push() accepts arbitrary sample chunks and returns the stacked frames
    completed by those samples; the output over any chunking equals the
    one-shot result exactly.
    """

    def __init__(
        self,
        config: FrontendConfig,
        norm_mean: np.ndarray | None = None,
        norm_std: np.ndarray | None = None,
    ):
        self.config = config
        self._mean = None if norm_mean is None else np.asarray(norm_mean, np.float64)
        self._std = None if norm_std is None else np.asarray(norm_std, np.float64)
        if (self._mean is None) != (self._std is None):
            raise FrontendError("normalization needs both mean and std")
        if self._std is not None and np.any(self._std <= 0):
            raise FrontendError("normalization std must be positive")
        self.reset()

    def reset(self):
        self._residual = np.zeros(0, dtype=np.int16)
        self._pending = []  # base frames not yet consumed by stacking
        self._pending_start = 0  # absolute index of pending[0]
        self._next_stack = 0  # absolute index of the next stack's first frame

    def push(self, samples: np.ndarray) -> np.ndarray:
        cfg = self.config
        self._residual = np.concatenate([self._residual, samples.astype(np.int16)])
        window, hop = cfg.window_samples, cfg.hop_samples
        n = self._residual.size
        count = (n - window) // hop + 1 if n >= window else 0
        if count:
            data = self._residual.astype(np.float64)
            for i in range(count):
                frame = _mfcc_frame(data[i * hop : i * hop + window], cfg)
                if self._mean is not None:
                    frame = (frame - self._mean) / self._std
                self._pending.append(frame)
            self._residual = self._residual[count * hop :]
        stacked = []
        while self._pending_start + len(self._pending) >= self._next_stack + cfg.stack:
            offset = self._next_stack - self._pending_start
            stacked.append(np.concatenate(self._pending[offset : offset + cfg.stack]))
            self._next_stack += cfg.skip
            drop = min(self._next_stack - self._pending_start, len(self._pending))
            if drop > 0:
                del self._pending[:drop]
                self._pending_start += drop
        if not stacked:
            return np.zeros((0, cfg.stacked_size))
        return np.stack(stacked)


def extract_features(
    audio: AudioBuffer,
    config: FrontendConfig,
    norm_mean: np.ndarray | None = None,
    norm_std: np.ndarray | None = None,
) -> np.ndarray:
    """One-shot wav-to-network-input features (normalized, stacked)."""
    if audio.sample_rate != config.sample_rate:
        raise FrontendError(
            f"audio is {audio.sample_rate} Hz, expected {config.sample_rate}"
        )
    if audio.samples.size == 0:
        raise FrontendError("empty audio")
    return FeatureStream(config, norm_mean, norm_std).push(audio.samples)
