"""Time-domain target speaker extraction toolkit.

Simulates multi-speaker mixtures, trains the four-component extraction
network (speech encoder, speaker encoder, speaker extractor, speech
decoder) with a multi-task multi-scale objective, and extracts/evaluates
the target speaker's voice from mixtures.
"""

from .audio_io import Waveform, load_wav, rms_power, save_wav
from .features import energy_vad, mfcc_features
from .mixsim import Manifest, MixtureSpec, load_manifest, scan_corpus, simulate
from .model import SpexConfig, SpexModel, load_checkpoint, save_checkpoint
from .objectives import si_sdr, si_sdr_improvement, spex_loss
from .trainer import TrainConfig, evaluate, segment_manifest, train

__all__ = [
    "Waveform",
    "load_wav",
    "save_wav",
    "rms_power",
    "mfcc_features",
    "energy_vad",
    "Manifest",
    "MixtureSpec",
    "scan_corpus",
    "simulate",
    "load_manifest",
    "SpexConfig",
    "SpexModel",
    "save_checkpoint",
    "load_checkpoint",
    "si_sdr",
    "si_sdr_improvement",
    "spex_loss",
    "TrainConfig",
    "segment_manifest",
    "train",
    "evaluate",
]

__version__ = "0.1.0"
