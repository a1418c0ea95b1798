"""MFCC+energy front-end with deltas, sliding-window CMN, and energy VAD.

The pipeline per frame: Hamming window, 512-point magnitude spectrum,
40 triangular mel filters (0-4000 Hz), log, orthonormal DCT-II keeping
cepstra 1..19, plus the windowed-frame log-energy -> 20 static dims.
First and second order deltas (+-2 frame regression) are appended for
60 dims total, then each dimension is mean-normalized over a 3 s
window centered on the frame (clipped at the utterance edges, so short
utterances get plain global mean removal).

Voice activity detection runs on the raw (pre-CMN) log-energy track,
which the returned sequence carries alongside the features.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.fft import dct

from .audio_io import Waveform
from .errors import SampleRateMismatchError, TooShortError

SAMPLE_RATE_HZ = 8000
FRAME_LENGTH = 200  # 25 ms
FRAME_SHIFT = 80  # 10 ms
FFT_SIZE = 512
N_MEL_FILTERS = 40
N_CEPSTRA = 19  # c1..c19, c0 dropped in favor of log-energy
STATIC_DIM = N_CEPSTRA + 1
FEATURE_DIM = 3 * STATIC_DIM
CMN_WINDOW_SECONDS = 3.0
ENERGY_FLOOR = 1e-12
VAD_THRESHOLD_DB = 30.0


@dataclass
class FeatureFrameSequence:
    """(num_frames x 60) features plus the raw log-energy track."""

    frames: np.ndarray
    log_energy: np.ndarray  # natural log of windowed frame energy, pre-CMN
    frame_shift_ms: int = 10
    frame_length_ms: int = 25

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != FEATURE_DIM:
            raise ValueError(f"expected (frames, {FEATURE_DIM}), got {self.frames.shape}")

    def __len__(self) -> int:
        return self.frames.shape[0]


def _mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def _mel_filterbank() -> np.ndarray:
    """(N_MEL_FILTERS x FFT_SIZE//2+1) triangular filters over 0-4000 Hz."""
    edges_hz = _mel_to_hz(np.linspace(_mel(0.0), _mel(SAMPLE_RATE_HZ / 2), N_MEL_FILTERS + 2))
    bin_hz = np.arange(FFT_SIZE // 2 + 1) * SAMPLE_RATE_HZ / FFT_SIZE
    bank = np.zeros((N_MEL_FILTERS, FFT_SIZE // 2 + 1))
    for m in range(N_MEL_FILTERS):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


_FILTERBANK = _mel_filterbank()
_WINDOW = np.hamming(FRAME_LENGTH)


def delta_coefficients(x: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over +-width frames, edges replicated."""
    padded = np.concatenate([x[:1].repeat(width, axis=0), x, x[-1:].repeat(width, axis=0)])
    denom = 2.0 * sum(n * n for n in range(1, width + 1))
    out = np.zeros_like(x)
    for n in range(1, width + 1):
        out += n * (padded[width + n : width + n + len(x)] - padded[width - n : width - n + len(x)])
    return out / denom


def sliding_cmn(x: np.ndarray, window_frames: int) -> np.ndarray:
    """Subtract the mean over a centered fixed-size window.

    The window is shifted (not shrunk) to stay inside the utterance, so
    an utterance no longer than the window gets plain global mean
    subtraction.
    """
    n = len(x)
    if n <= window_frames:
        return x - x.mean(axis=0)
    half = window_frames // 2
    csum = np.cumsum(np.vstack([np.zeros((1, x.shape[1])), x]), axis=0)
    lo = np.clip(np.arange(n) - half, 0, n - window_frames)
    hi = lo + window_frames
    means = (csum[hi] - csum[lo]) / window_frames
    return x - means


def mfcc_features(w: Waveform, cmn: bool = True) -> FeatureFrameSequence:
    """60-dimensional acoustic features for the speaker encoder."""
    if w.sample_rate_hz != SAMPLE_RATE_HZ:
        raise SampleRateMismatchError(
            f"features need {SAMPLE_RATE_HZ} Hz input, got {w.sample_rate_hz}"
        )
    n = len(w)
    if n < FRAME_LENGTH:
        raise TooShortError(f"{n} samples < one {FRAME_LENGTH}-sample frame")
    num_frames = (n - FRAME_LENGTH) // FRAME_SHIFT + 1
    stride = w.samples.strides[0]
    framed = as_strided(
        w.samples,
        shape=(num_frames, FRAME_LENGTH),
        strides=(stride * FRAME_SHIFT, stride),
        writeable=False,
    )
    windowed = framed * _WINDOW
    log_energy = np.log(np.maximum((windowed**2).sum(axis=1), ENERGY_FLOOR))
    spectrum = np.abs(np.fft.rfft(windowed, FFT_SIZE, axis=1))
    mel_energy = np.maximum(spectrum @ _FILTERBANK.T, ENERGY_FLOOR)
    cepstra = dct(np.log(mel_energy), type=2, axis=1, norm="ortho")[:, 1 : N_CEPSTRA + 1]
    static = np.concatenate([cepstra, log_energy[:, None]], axis=1)
    d1 = delta_coefficients(static)
    d2 = delta_coefficients(d1)
    feats = np.concatenate([static, d1, d2], axis=1)
    if cmn:
        window_frames = int(round(CMN_WINDOW_SECONDS * 1000 / 10))
        feats = sliding_cmn(feats, window_frames)
    return FeatureFrameSequence(frames=feats, log_energy=log_energy)


def energy_vad(f: FeatureFrameSequence, threshold_db: float = VAD_THRESHOLD_DB) -> np.ndarray:
    """Boolean keep-mask: frames within threshold_db of the peak log-energy.

    The peak frame is always kept.
    """
    if len(f) < 1:
        raise ValueError("need at least one frame")
    cutoff = f.log_energy.max() - threshold_db / 10.0 * np.log(10.0)
    return f.log_energy >= cutoff


def write_features(f: FeatureFrameSequence, path) -> None:
    """Debug dump: uint32 num_frames, uint32 dim, row-major float32 data."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", len(f), f.frames.shape[1]))
        fh.write(f.frames.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        num, dim = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f4")
    return data.reshape(num, dim).astype(np.float64)
