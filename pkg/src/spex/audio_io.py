"""Waveform container and 16-bit PCM mono WAV read/write.

The canonical on-disk format is RIFF/WAVE, PCM 16-bit little-endian,
mono, 8 kHz.  Other sample rates are accepted by load_wav (rate checks
happen at pipeline entry, not here); stereo and exotic codecs are not.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from .errors import UnsupportedFormatError

PCM_FULL_SCALE = 32768  # 16-bit quantization step is 1/32768


@dataclass
class Waveform:
    """Mono time-domain signal.

    samples are float64 in memory; load_wav guarantees magnitudes <= 1.0,
    but in-memory mixtures may exceed that until save_wav clips them.
    """

    samples: np.ndarray
    sample_rate_hz: int = 8000
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise UnsupportedFormatError(
                f"waveform must be 1-D and non-empty, got shape {self.samples.shape}"
            )
        if self.sample_rate_hz <= 0:
            raise UnsupportedFormatError(f"bad sample rate {self.sample_rate_hz}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate_hz


def load_wav(path) -> Waveform:
    """Read a mono WAV file, scaling 16-bit PCM by 1/32768.

    IEEE-float files are clipped into [-1, 1].  Raises FileNotFoundError
    if the path is missing and UnsupportedFormatError for stereo files,
    unsupported sample codecs, or an empty data chunk.
    """
    with open(path, "rb") as fh:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns on benign extra chunks
            try:
                rate, data = wavfile.read(fh)
            except ValueError as exc:
                raise UnsupportedFormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise UnsupportedFormatError(f"{path}: expected mono, got shape {data.shape}")
    if data.size == 0:
        raise UnsupportedFormatError(f"{path}: empty data chunk")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM_FULL_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported sample format {data.dtype}; "
            "use 16-bit PCM or IEEE-float"
        )
    return Waveform(samples=samples, sample_rate_hz=int(rate), source_id=str(path))


def save_wav(w: Waveform, path) -> None:
    """Write 16-bit PCM mono, clipping samples to [-1, 1] first.

    Mixture sums can exceed full scale; clipping (rather than erroring)
    preserves the SNR ratios of everything that stays in range.
    A load_wav round trip reproduces each sample within 1/32768.
    """
    if not np.all(np.isfinite(w.samples)):
        raise UnsupportedFormatError("cannot save non-finite samples")
    clipped = np.clip(w.samples, -1.0, 1.0)
    quantized = np.clip(
        np.round(clipped * PCM_FULL_SCALE), -PCM_FULL_SCALE, PCM_FULL_SCALE - 1
    ).astype(np.int16)
    wavfile.write(path, w.sample_rate_hz, quantized)


def rms_power(w: Waveform | np.ndarray) -> float:
    """Mean of squared samples."""
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    return float(np.mean(np.square(samples)))
