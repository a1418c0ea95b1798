"""Shared fixtures: a deterministic synthetic speech-like corpus.

Utterances are harmonic stacks with per-speaker fundamentals and
formant envelopes, syllable-rate amplitude modulation, a little
vibrato, and a low noise floor.  Different speakers get well-separated
fundamentals so mixtures are actually separable by spectral shape,
which keeps the small-model training tests meaningful.
"""

import numpy as np
import pytest

from spex.audio_io import Waveform, save_wav

RATE = 8000


def speaker_voice(speaker_index: int, n_speakers: int):
    f0 = 90.0 + (260.0 - 90.0) * speaker_index / max(n_speakers - 1, 1)
    rng = np.random.default_rng([77, speaker_index])
    formants = rng.uniform(300.0, 3200.0, size=3)
    bandwidths = rng.uniform(100.0, 350.0, size=3)
    return f0, formants, bandwidths


def synth_utterance(
    speaker_index: int,
    n_speakers: int,
    utt_index: int,
    seconds: float | None = None,
) -> np.ndarray:
    f0, formants, bandwidths = speaker_voice(speaker_index, n_speakers)
    rng = np.random.default_rng([101, speaker_index, utt_index])
    if seconds is None:
        seconds = float(rng.uniform(1.3, 2.3))
    n = int(round(seconds * RATE))
    t = np.arange(n) / RATE

    harmonics = np.arange(1, int(3800.0 / f0) + 1)
    weights = 0.02 + sum(
        np.exp(-((harmonics * f0 - fc) ** 2) / (2.0 * bw**2))
        for fc, bw in zip(formants, bandwidths)
    )
    vib_rate = rng.uniform(4.0, 7.0)
    vib_phase = rng.uniform(0, 2 * np.pi)
    warp = t + 0.003 * np.sin(2 * np.pi * vib_rate * t + vib_phase)
    x = np.zeros(n)
    for h, w in zip(harmonics, weights):
        x += w * np.sin(2 * np.pi * h * f0 * warp + rng.uniform(0, 2 * np.pi))
    syllable_rate = rng.uniform(2.5, 5.0)
    env = 0.55 + 0.45 * np.sin(2 * np.pi * syllable_rate * t + rng.uniform(0, 2 * np.pi))
    ramp = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.05)
    x = x * env * ramp + 0.001 * rng.normal(size=n)
    x = x / np.max(np.abs(x)) * rng.uniform(0.4, 0.7)
    return x


def build_corpus(root, n_speakers: int, utts_per_speaker: int, seconds=None):
    """Write a <speaker>/<utt>.wav tree; returns the root path."""
    for s in range(n_speakers):
        spk_dir = root / f"spk{s:02d}"
        spk_dir.mkdir(parents=True, exist_ok=True)
        for u in range(utts_per_speaker):
            samples = synth_utterance(s, n_speakers, u, seconds)
            save_wav(Waveform(samples, RATE), spk_dir / f"utt{u:02d}.wav")
    return root


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """4 speakers x 3 utterances, reused across tests in a session."""
    root = tmp_path_factory.mktemp("corpus_small")
    return build_corpus(root, n_speakers=4, utts_per_speaker=3)


@pytest.fixture(scope="session")
def wide_corpus_dir(tmp_path_factory):
    """20 speakers x 2 utterances, for corpus-scale sanity checks."""
    root = tmp_path_factory.mktemp("corpus_wide")
    return build_corpus(root, n_speakers=20, utts_per_speaker=2)
