"""Deterministic simulation of 2- and 3-speaker mixture datasets.

A corpus is any `<speaker_id>/<utt_id>.wav` tree at 8 kHz.  Each
mixture draws distinct speakers, one utterance per speaker; the first
drawn speaker is the target and also supplies a different utterance as
the enrollment reference.  Every interferer is scaled to an
independently drawn SNR against the target, sources are end-padded to
the longest one, and the sum is written out together with the padded
target (the training ground truth) and the reference.

All randomness for entry i comes from a dedicated stream derived from
(seed, i), so regeneration is byte-identical and order-independent.
"""

from __future__ import annotations

import hashlib
import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Waveform, load_wav, rms_power, save_wav
from .errors import (
    EmptyCorpusError,
    InsufficientSpeakersError,
    InsufficientUtterancesError,
    SampleRateMismatchError,
    SilentSourceError,
)

CORPUS_RATE_HZ = 8000


@dataclass(frozen=True)
class MixtureSpec:
    """One simulated mixture: sources, gains, and where the files live."""

    mixture_id: str
    target_utt: str
    interferer_utts: tuple
    reference_utt: str
    snr_db: float
    interferer_gains: tuple
    target_speaker_id: str
    interferer_speaker_ids: tuple
    mixture_path: str
    target_path: str
    reference_path: str

    def to_jsonl_line(self) -> str:
        # hand-assembled so float formatting (9 significant digits) and
        # field order are stable byte-for-byte across runs
        def f9(x: float) -> str:
            return format(float(x), ".9g")

        parts = [
            f'"id": {json.dumps(self.mixture_id)}',
            f'"mixture_path": {json.dumps(self.mixture_path)}',
            f'"target_path": {json.dumps(self.target_path)}',
            f'"reference_path": {json.dumps(self.reference_path)}',
            f'"target_speaker": {json.dumps(self.target_speaker_id)}',
            '"interferer_speakers": ['
            + ", ".join(json.dumps(s) for s in self.interferer_speaker_ids)
            + "]",
            f'"snr_db": {f9(self.snr_db)}',
            '"gains": [' + ", ".join(f9(g) for g in self.interferer_gains) + "]",
        ]
        return "{" + ", ".join(parts) + "}"

    @staticmethod
    def from_jsonl_line(line: str) -> "MixtureSpec":
        row = json.loads(line)
        return MixtureSpec(
            mixture_id=row["id"],
            target_utt="",
            interferer_utts=(),
            reference_utt="",
            snr_db=float(row["snr_db"]),
            interferer_gains=tuple(float(g) for g in row["gains"]),
            target_speaker_id=row["target_speaker"],
            interferer_speaker_ids=tuple(row["interferer_speakers"]),
            mixture_path=row["mixture_path"],
            target_path=row["target_path"],
            reference_path=row["reference_path"],
        )


@dataclass
class Manifest:
    entries: list
    seed: int | None = None
    corpus_fingerprint: str = ""
    root: Path | None = None  # directory manifest paths are relative to

    def save(self, path) -> None:
        path = Path(path)
        text = "".join(e.to_jsonl_line() + "\n" for e in self.entries)
        path.write_text(text, encoding="utf-8")

    def resolve(self, relative: str) -> Path:
        return (self.root / relative) if self.root is not None else Path(relative)


def load_manifest(path) -> Manifest:
    path = Path(path)
    entries = [
        MixtureSpec.from_jsonl_line(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    return Manifest(entries=entries, root=path.parent)


@dataclass
class Corpus:
    root: Path
    utterances: dict  # speaker id -> sorted list of utterance stems

    def speakers(self) -> list:
        return sorted(self.utterances)

    def eligible_targets(self) -> list:
        """Speakers able to supply both a target and a distinct reference."""
        return [s for s in self.speakers() if len(self.utterances[s]) >= 2]

    def path(self, speaker: str, utt: str) -> Path:
        return self.root / speaker / f"{utt}.wav"

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for speaker in self.speakers():
            for utt in self.utterances[speaker]:
                digest.update(f"{speaker}/{utt}\n".encode())
        return digest.hexdigest()


def scan_corpus(root) -> Corpus:
    """Index a `<speaker>/<utt>.wav` tree, validating the sample rate."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    utterances: dict = {}
    for wav_path in sorted(root.glob("*/*.wav")):
        with wave.open(str(wav_path), "rb") as fh:
            rate = fh.getframerate()
        if rate != CORPUS_RATE_HZ:
            raise SampleRateMismatchError(
                f"{wav_path}: {rate} Hz, corpus must be {CORPUS_RATE_HZ} Hz"
            )
        utterances.setdefault(wav_path.parent.name, []).append(wav_path.stem)
    if not utterances:
        raise EmptyCorpusError(f"no <speaker>/<utt>.wav files under {root}")
    for utts in utterances.values():
        utts.sort()
    return Corpus(root=root, utterances=utterances)


def snr_gain(target: Waveform, interferer: Waveform, snr_db: float) -> float:
    """Gain g making the target g²-scaled interferer power ratio equal snr_db:

    10*log10(rms_power(target) / (g^2 * rms_power(interferer))) == snr_db
    """
    p_target = rms_power(target)
    p_interferer = rms_power(interferer)
    if p_target == 0.0 or p_interferer == 0.0:
        raise SilentSourceError("cannot set an SNR against a silent source")
    return float(np.sqrt(p_target / (p_interferer * 10.0 ** (snr_db / 10.0))))


def _pad_to(w: Waveform, length: int) -> Waveform:
    if len(w) == length:
        return w
    return Waveform(
        np.pad(w.samples, (0, length - len(w))), w.sample_rate_hz, w.source_id
    )


def mix(target: Waveform, interferers: list, gains: list) -> tuple:
    """Sum sources end-padded to the longest one; returns (mixture, padded target)."""
    if len(interferers) != len(gains):
        raise ValueError(f"{len(interferers)} interferers but {len(gains)} gains")
    longest = max([len(target)] + [len(w) for w in interferers])
    padded_target = _pad_to(target, longest)
    total = padded_target.samples.copy()
    for w, g in zip(interferers, gains):
        total += g * _pad_to(w, longest).samples
    return Waveform(total, target.sample_rate_hz), padded_target


def simulate(
    corpus: Corpus,
    n: int,
    speakers_per_mix: int,
    snr_range: tuple,
    seed: int,
    out_dir,
) -> Manifest:
    """Generate n mixtures plus WAVs and a JSONL manifest under out_dir."""
    if speakers_per_mix not in (2, 3):
        raise ValueError(f"speakers_per_mix must be 2 or 3, got {speakers_per_mix}")
    lo, hi = float(snr_range[0]), float(snr_range[1])
    if hi < lo:
        raise ValueError(f"bad SNR range [{lo}, {hi}]")
    speakers = corpus.speakers()
    if len(speakers) < speakers_per_mix:
        raise InsufficientSpeakersError(
            f"need {speakers_per_mix} speakers, corpus has {len(speakers)}"
        )
    eligible = corpus.eligible_targets()
    if not eligible:
        raise InsufficientUtterancesError(
            "no speaker has the two utterances needed for target plus reference"
        )
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    n_interferers = speakers_per_mix - 1
    entries = []
    for index in range(n):
        rng = np.random.default_rng([seed, index])
        target_spk = str(rng.choice(eligible))
        others = [s for s in speakers if s != target_spk]
        interferer_spks = [str(s) for s in rng.choice(others, size=n_interferers, replace=False)]
        target_utt = str(rng.choice(corpus.utterances[target_spk]))
        ref_pool = [u for u in corpus.utterances[target_spk] if u != target_utt]
        reference_utt = str(rng.choice(ref_pool))
        interferer_utts = [str(rng.choice(corpus.utterances[s])) for s in interferer_spks]
        snrs = [float(rng.uniform(lo, hi)) for _ in range(n_interferers)]

        target = load_wav(corpus.path(target_spk, target_utt))
        interferers = [
            load_wav(corpus.path(s, u)) for s, u in zip(interferer_spks, interferer_utts)
        ]
        longest = max([len(target)] + [len(w) for w in interferers])
        padded_target = _pad_to(target, longest)
        gains = [
            snr_gain(padded_target, _pad_to(w, longest), snr)
            for w, snr in zip(interferers, snrs)
        ]
        mixture, padded_target = mix(target, interferers, gains)

        mixture_id = f"mix_{index:06d}"
        reference = load_wav(corpus.path(target_spk, reference_utt))
        rel = {
            "mixture": f"wav/{mixture_id}_mix.wav",
            "target": f"wav/{mixture_id}_target.wav",
            "reference": f"wav/{mixture_id}_ref.wav",
        }
        save_wav(mixture, out_dir / rel["mixture"])
        save_wav(padded_target, out_dir / rel["target"])
        save_wav(reference, out_dir / rel["reference"])
        entries.append(
            MixtureSpec(
                mixture_id=mixture_id,
                target_utt=f"{target_spk}/{target_utt}",
                interferer_utts=tuple(
                    f"{s}/{u}" for s, u in zip(interferer_spks, interferer_utts)
                ),
                reference_utt=f"{target_spk}/{reference_utt}",
                snr_db=snrs[0],
                interferer_gains=tuple(gains),
                target_speaker_id=target_spk,
                interferer_speaker_ids=tuple(interferer_spks),
                mixture_path=rel["mixture"],
                target_path=rel["target"],
                reference_path=rel["reference"],
            )
        )
    manifest = Manifest(
        entries=entries,
        seed=seed,
        corpus_fingerprint=corpus.fingerprint(),
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
