"""
Model anatomy: configurations, shapes, and the receptive field
==============================================================
"""

import numpy as np

from spex import SpexConfig, SpexModel
from spex.net_core import no_grad

# The full-size configuration: 256 encoder filters at window lengths
# 20/80/160 samples (2.5/10/20 ms at 8 kHz), 8 dilated blocks per stack,
# 4 stacks, 256-dim speaker embeddings.
full = SpexConfig()
print(f"full model parameters: {SpexModel(full, seed=0).parameter_count():,}")
print(f"full model receptive field: {full.receptive_field_frames()} frames "
      f"({full.receptive_field_frames() * full.L1 // 2 / 8000:.2f} s of context)")

# A desk-scale configuration for the rest of this script.
cfg = SpexConfig(N=16, L1=16, L2=64, L3=128, O=16, P=32, Q=3, B=2, R=1,
                 D=8, n_speakers=4, speaker_rnn_cells=16, speaker_linear_units=16)
model = SpexModel(cfg, seed=0)
print(f"\ndesk-scale parameters: {model.parameter_count():,}")

rng = np.random.default_rng(1)
mixture = rng.normal(size=(1, 4000))          # half a second
reference = [rng.normal(size=(40, 60))]       # 40 feature frames

with no_grad():
    emb = model.speech_encode(mixture)
    spk = model.speaker_encode(reference)
    masks = model.extract_masks(emb, spk)
    result, logits = model.forward(mixture, reference)

# All three analysis scales are stride-aligned to L1/2, so they share
# one frame axis: K = 2(T - L1)/L1 + 1.
k = 2 * (4000 - cfg.L1) // cfg.L1 + 1
print(f"\nencoder frames at every scale: {emb.E1.shape} == {emb.E2.shape} == {emb.E3.shape}"
      f"  (K = {k})")
print(f"speaker embedding: {spk.vector.shape}, logits: {logits.shape}")
print(f"masks are sigmoid outputs: min {masks.M1.data.min():.3f}, max {masks.M1.data.max():.3f}")
print(f"estimates come back at input length: {result.s1.shape} from input {mixture.shape}")

# s_w blends the three decoded scales with the multi-task weights.
w = (1 - cfg.alpha - cfg.beta, cfg.alpha, cfg.beta)
blend = w[0] * result.s1.data + w[1] * result.s2.data + w[2] * result.s3.data
print(f"s_w equals {w[0]:.1f}*s1 + {w[1]:.1f}*s2 + {w[2]:.1f}*s3: "
      f"{np.allclose(result.s_w.data, blend)}")
