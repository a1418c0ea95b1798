"""Optimization recipe and evaluation loop.

Training cuts each manifest entry into fixed-length segments, shuffles
them with an epoch-seeded RNG, and minimizes the combined
reconstruction + speaker-classification objective with Adam.  The
learning rate halves after three consecutive epochs without a new best
dev loss, training stops after ten, and the parameters from the best
dev epoch are what the caller gets back.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import load_wav, rms_power
from .errors import (
    EmptyAfterSegmentationError,
    NonFiniteLossError,
    RangeError,
    UnknownKeyError,
)
from .features import energy_vad, mfcc_features
from .mixsim import CORPUS_RATE_HZ, Manifest
from .model import SpexModel, save_checkpoint
from .net_core import Tensor, no_grad
from .objectives import si_sdr, spex_loss

SILENCE_FLOOR = 1e-6  # rms_power below this counts as a silent target window
REPORT_CAP_DB = 80.0  # the eps floor makes higher SI-SDR values meaningless


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    lr_halve_patience_epochs: int = 3
    early_stop_patience_epochs: int = 10
    segment_seconds: float = 4.0
    batch_size: int = 10
    max_epochs: int = 100
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    grad_clip_norm: float | None = 5.0  # None disables clipping
    strict_increase_plateau: bool = False
    dev_on_full_utterances: bool = False
    use_vad: bool = True
    use_cmn: bool = True

    def __post_init__(self):
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        if self.lr0 <= 0:
            raise RangeError(f"lr0 must be positive, got {self.lr0}")
        if self.lr_halve_patience_epochs < 1 or self.early_stop_patience_epochs < 1:
            raise RangeError("patience values must be positive")
        if self.segment_seconds <= 0:
            raise RangeError(f"segment_seconds must be positive, got {self.segment_seconds}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise RangeError("batch_size and max_epochs must be >= 1")
        if len(self.adam_betas) != 2 or not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise RangeError(f"adam_betas must be two values in [0, 1), got {self.adam_betas}")
        if self.adam_eps <= 0:
            raise RangeError("adam_eps must be positive")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise RangeError("grad_clip_norm must be positive or None")


@dataclass(frozen=True)
class Segment:
    """One fixed-length training window plus its enrollment context."""

    mixture_path: Path
    target_path: Path
    reference_path: Path
    speaker: str
    start: int
    stop: int


def _cached_audio(path: Path, cache: dict | None) -> np.ndarray:
    key = str(path)
    if cache is not None and key in cache:
        return cache[key]
    samples = load_wav(path).samples
    if cache is not None:
        cache[key] = samples
    return samples


def segment_manifest(manifest: Manifest, segment_seconds: float, cache: dict | None = None) -> list:
    """Cut every entry into non-overlapping full windows of segment_seconds.

    Windows shorter than the segment length are discarded, as are windows
    whose target is effectively silent (rms_power < 1e-6).
    """
    seg_len = int(round(segment_seconds * CORPUS_RATE_HZ))
    segments = []
    for e in manifest.entries:
        target = _cached_audio(manifest.resolve(e.target_path), cache)
        for k in range(len(target) // seg_len):
            start, stop = k * seg_len, (k + 1) * seg_len
            if rms_power(target[start:stop]) < SILENCE_FLOOR:
                continue
            segments.append(
                Segment(
                    mixture_path=manifest.resolve(e.mixture_path),
                    target_path=manifest.resolve(e.target_path),
                    reference_path=manifest.resolve(e.reference_path),
                    speaker=e.target_speaker_id,
                    start=start,
                    stop=stop,
                )
            )
    if not segments:
        raise EmptyAfterSegmentationError(
            f"no usable {segment_seconds}s windows in {len(manifest.entries)} entries"
        )
    return segments


def reference_feature_matrix(w, use_cmn: bool = True, use_vad: bool = True) -> np.ndarray:
    """Enrollment features for the speaker encoder: MFCC+deltas, optionally
    mean-normalized, optionally stripped of low-energy frames."""
    seq = mfcc_features(w, cmn=use_cmn)
    if use_vad:
        return seq.frames[energy_vad(seq)]
    return seq.frames


class PlateauScheduler:
    """Dev-loss driven learning-rate policy.

    The rate halves after every `halve_patience` consecutive epochs
    without a new best dev loss and training stops after
    `stop_patience`; a non-improving streak therefore halves at 3, 6
    and 9 and stops at 10 with the defaults.  `strict_increase` counts
    only strict increases over the previous epoch instead.
    """

    def __init__(self, lr0: float, halve_patience: int = 3, stop_patience: int = 10,
                 strict_increase: bool = False):
        if lr0 <= 0 or halve_patience < 1 or stop_patience < 1:
            raise RangeError("scheduler needs lr0 > 0 and positive patience values")
        self.lr = float(lr0)
        self.halve_patience = int(halve_patience)
        self.stop_patience = int(stop_patience)
        self.strict_increase = bool(strict_increase)
        self.best = math.inf
        self.bad_epochs = 0
        self.should_stop = False
        self._prev = math.inf

    def step(self, dev_loss: float) -> bool:
        """Record one epoch's dev loss; True means a new best."""
        improved_best = dev_loss < self.best
        if improved_best:
            self.best = dev_loss
        worse = (dev_loss > self._prev) if self.strict_increase else not improved_best
        self._prev = dev_loss
        if worse:
            self.bad_epochs += 1
            if self.bad_epochs >= self.stop_patience:
                self.should_stop = True
            elif self.bad_epochs % self.halve_patience == 0:
                self.lr /= 2.0
        else:
            self.bad_epochs = 0
        return improved_best


class Adam:
    """Adam over a named parameter dict; moments keyed by name."""

    def __init__(self, params: dict, betas=(0.9, 0.999), eps: float = 1e-8):
        self._params = dict(params)
        self._betas = (float(betas[0]), float(betas[1]))
        self._eps = float(eps)
        self._m = {k: np.zeros_like(p.data) for k, p in self._params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self._params.items()}
        self._t = 0

    def step(self, lr: float) -> None:
        self._t += 1
        b1, b2 = self._betas
        bc1 = 1.0 - b1**self._t
        bc2 = 1.0 - b2**self._t
        for name, p in self._params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self._m[name], self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self._eps)


def clip_grad_norm(params, max_norm: float | None) -> float:
    """Scale all gradients so their global L2 norm is <= max_norm.

    Returns the pre-clip norm; max_norm=None only measures.
    """
    total = math.sqrt(
        sum(float((p.grad**2).sum()) for p in params if p.grad is not None)
    )
    if max_norm is not None and total > max_norm > 0.0:
        scale = max_norm / total
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


def _feature_cache_entry(path: Path, cfg: TrainConfig, cache: dict) -> np.ndarray:
    key = (str(path), cfg.use_cmn, cfg.use_vad)
    if key not in cache:
        cache[key] = reference_feature_matrix(
            load_wav(path), use_cmn=cfg.use_cmn, use_vad=cfg.use_vad
        )
    return cache[key]


def _batch_loss(model, mixtures, targets, feats, labels):
    result, logits = model.forward(mixtures, feats)
    total, breakdown = spex_loss(result, targets, logits, labels, model.config)
    if not math.isfinite(breakdown.total):
        raise NonFiniteLossError(f"loss became {breakdown.total}")
    return total, breakdown


def _dev_loss(model, dev_items, batch_size: int) -> float:
    """Forward-only mean objective over the dev set."""
    total, count = 0.0, 0
    with no_grad():
        for i in range(0, len(dev_items), batch_size):
            chunk = dev_items[i : i + batch_size]
            mixtures = np.stack([c["mixture"] for c in chunk])
            targets = np.stack([c["target"] for c in chunk])
            feats = [c["features"] for c in chunk]
            labels = [c["label"] for c in chunk]
            _, breakdown = _batch_loss(model, mixtures, targets, feats, labels)
            total += breakdown.total * len(chunk)
            count += len(chunk)
    return total / count


def train(model: SpexModel, train_segments: list, dev_manifest: Manifest,
          cfg: TrainConfig, out_dir=None):
    """Run the optimization loop; returns (model at best dev epoch, history).

    History is a list of per-epoch dicts {epoch, train_loss, dev_loss,
    lr, seconds}, mirrored to <out_dir>/history.jsonl when out_dir is
    given, along with best.ckpt refreshed at every new best dev loss.
    A non-finite loss aborts with the best parameters restored (and
    already on disk).
    """
    if not train_segments:
        raise EmptyAfterSegmentationError("no training segments")
    seg_len = int(round(cfg.segment_seconds * CORPUS_RATE_HZ))
    if seg_len < model.config.L3:
        raise RangeError(
            f"segments of {seg_len} samples are shorter than L3={model.config.L3}"
        )
    speakers = sorted({s.speaker for s in train_segments})
    if model.config.n_speakers < len(speakers):
        raise RangeError(
            f"model classifies {model.config.n_speakers} speakers but "
            f"training data has {len(speakers)}"
        )
    label_of = {spk: i for i, spk in enumerate(speakers)}

    audio_cache: dict = {}
    feature_cache: dict = {}
    prepared = []
    for s in train_segments:
        prepared.append(
            dict(
                mixture=_cached_audio(s.mixture_path, audio_cache)[s.start : s.stop],
                target=_cached_audio(s.target_path, audio_cache)[s.start : s.stop],
                features=_feature_cache_entry(s.reference_path, cfg, feature_cache),
                label=label_of[s.speaker],
            )
        )

    def dev_label(speaker: str) -> int:
        if speaker not in label_of:
            raise UnknownKeyError(f"dev speaker {speaker!r} not in the training label set")
        return label_of[speaker]

    if cfg.dev_on_full_utterances:
        dev_items = [
            dict(
                mixture=_cached_audio(dev_manifest.resolve(e.mixture_path), audio_cache),
                target=_cached_audio(dev_manifest.resolve(e.target_path), audio_cache),
                features=_feature_cache_entry(
                    dev_manifest.resolve(e.reference_path), cfg, feature_cache
                ),
                label=dev_label(e.target_speaker_id),
            )
            for e in dev_manifest.entries
        ]
        dev_batch = 1  # utterance lengths differ
    else:
        dev_items = [
            dict(
                mixture=_cached_audio(s.mixture_path, audio_cache)[s.start : s.stop],
                target=_cached_audio(s.target_path, audio_cache)[s.start : s.stop],
                features=_feature_cache_entry(s.reference_path, cfg, feature_cache),
                label=dev_label(s.speaker),
            )
            for s in segment_manifest(dev_manifest, cfg.segment_seconds, audio_cache)
        ]
        dev_batch = cfg.batch_size

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "history.jsonl").write_text("", encoding="utf-8")

    scheduler = PlateauScheduler(
        cfg.lr0,
        halve_patience=cfg.lr_halve_patience_epochs,
        stop_patience=cfg.early_stop_patience_epochs,
        strict_increase=cfg.strict_increase_plateau,
    )
    adam = Adam(model.named_parameters(), betas=cfg.adam_betas, eps=cfg.adam_eps)
    best_params = {k: p.data.copy() for k, p in model.params.items()}
    history = []

    def restore_best():
        for k, p in model.params.items():
            p.data = best_params[k].copy()

    try:
        for epoch in range(cfg.max_epochs):
            t0 = time.perf_counter()
            lr = scheduler.lr
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(prepared))
            loss_sum, n_seen = 0.0, 0
            for i in range(0, len(order), cfg.batch_size):
                chunk = [prepared[j] for j in order[i : i + cfg.batch_size]]
                mixtures = np.stack([c["mixture"] for c in chunk])
                targets = np.stack([c["target"] for c in chunk])
                feats = [c["features"] for c in chunk]
                labels = [c["label"] for c in chunk]
                model.zero_grad()
                total, breakdown = _batch_loss(model, mixtures, targets, feats, labels)
                total.backward()
                clip_grad_norm(model.parameters(), cfg.grad_clip_norm)
                adam.step(lr)
                loss_sum += breakdown.total * len(chunk)
                n_seen += len(chunk)
            train_loss = loss_sum / n_seen
            dev_loss = _dev_loss(model, dev_items, dev_batch)
            if not math.isfinite(dev_loss):
                raise NonFiniteLossError(f"dev loss became {dev_loss}")

            record = dict(
                epoch=epoch,
                train_loss=train_loss,
                dev_loss=dev_loss,
                lr=lr,
                seconds=time.perf_counter() - t0,
            )
            history.append(record)
            if out_dir is not None:
                with open(out_dir / "history.jsonl", "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")

            if scheduler.step(dev_loss):
                best_params = {k: p.data.copy() for k, p in model.params.items()}
                if out_dir is not None:
                    save_checkpoint(model, out_dir / "best.ckpt")
            if scheduler.should_stop:
                break
    except NonFiniteLossError:
        restore_best()
        raise

    restore_best()
    return model, history


def _scale_estimate(result, name: str, row: int) -> np.ndarray:
    value = getattr(result, name)
    data = value.data if isinstance(value, Tensor) else np.asarray(value)
    return np.asarray(data, dtype=np.float64)[row]


def evaluate(model, manifest: Manifest, use_vad: bool = True, use_cmn: bool = True) -> dict:
    """Full-length extraction metrics over a manifest.

    Per utterance and as means: SI-SDR and SI-SDR improvement for each
    decoded scale and the weighted combination, everything capped at
    80 dB.  Entries also feed a per-integer-SNR breakdown.
    """
    scales = ("s1", "s2", "s3", "s_w")
    utterances = []
    for e in manifest.entries:
        mixture = load_wav(manifest.resolve(e.mixture_path)).samples
        target = load_wav(manifest.resolve(e.target_path)).samples
        reference = load_wav(manifest.resolve(e.reference_path))
        feats = reference_feature_matrix(reference, use_cmn=use_cmn, use_vad=use_vad)
        with no_grad():
            result, _ = model.forward(mixture[None, :], [feats])
        mixture_db = min(si_sdr(mixture, target), REPORT_CAP_DB)
        row = dict(id=e.mixture_id, snr_db=e.snr_db, mixture_si_sdr=mixture_db)
        for name in scales:
            est_db = min(si_sdr(_scale_estimate(result, name, 0), target), REPORT_CAP_DB)
            row[name] = dict(si_sdr=est_db, si_sdri=est_db - mixture_db)
        utterances.append(row)

    mean = dict(
        mixture_si_sdr=float(np.mean([u["mixture_si_sdr"] for u in utterances]))
    )
    for name in scales:
        mean[name] = dict(
            si_sdr=float(np.mean([u[name]["si_sdr"] for u in utterances])),
            si_sdri=float(np.mean([u[name]["si_sdri"] for u in utterances])),
        )

    by_snr: dict = {}
    for u in utterances:
        by_snr.setdefault(int(np.floor(u["snr_db"])), []).append(u)
    snr_breakdown = {
        str(bucket): dict(
            n=len(rows),
            **{name: float(np.mean([r[name]["si_sdri"] for r in rows])) for name in scales},
        )
        for bucket, rows in sorted(by_snr.items())
    }

    return dict(
        n_utterances=len(utterances),
        mean=mean,
        by_snr_db=snr_breakdown,
        utterances=utterances,
    )
