"""
MFCC reference features and energy-based voice activity detection
=================================================================
"""

import numpy as np

from spex import Waveform, energy_vad, mfcc_features

rate = 8000
t = np.arange(3 * rate) / rate

# Half a second of silence, two of voiced signal, half of near-silence
# -- the kind of enrollment recording you get in practice.
voiced = sum(np.sin(2 * np.pi * 120 * h * t) / h for h in range(1, 5))
gate = ((t > 0.5) & (t < 2.5)).astype(float)
x = 0.3 * voiced * gate + 1e-4 * np.random.default_rng(0).normal(size=t.shape)

feats = mfcc_features(Waveform(x, rate))          # cepstral mean removed
raw = mfcc_features(Waveform(x, rate), cmn=False)  # and without

print(f"frames: {feats.frames.shape[0]}, coefficients per frame: {feats.frames.shape[1]}")
print(f"(20 static MFCCs + deltas + delta-deltas = {feats.frames.shape[1]})")

# Cepstral mean normalization subtracts the mean over a 3 s sliding
# window (the whole utterance here), killing channel/loudness offsets
# that the raw track keeps.
print(f"largest |coefficient mean| with CMN:    {np.abs(feats.frames.mean(axis=0)).max():.2e}")
print(f"largest |coefficient mean| without CMN: {np.abs(raw.frames.mean(axis=0)).max():.2e}")

# The VAD keeps frames whose log-energy is within 30 dB of the peak.
keep = energy_vad(feats)
print(f"voiced frames kept: {keep.sum()} / {keep.size}")

# Frame times: 25 ms windows every 10 ms, so frame k starts at 10k ms.
starts = np.flatnonzero(keep)
print(f"first kept frame at {starts[0] * 10} ms, last at {starts[-1] * 10} ms "
      "(the tone runs 500..2500 ms)")

# What the speaker encoder actually consumes:
matrix = feats.frames[keep]
print(f"speaker-encoder input: {matrix.shape[0]} frames x {matrix.shape[1]} dims")
