"""Four-component target-speaker extraction network.

A multi-scale convolutional speech encoder turns the mixture into
nonnegative embedding coefficients at three filter lengths sharing one
stride; a BLSTM speaker encoder turns enrollment features into a fixed
400-dim voice signature (plus classification logits for the auxiliary
task); a speaker-conditioned stack of dilated depthwise-separable
convolution blocks predicts one sigmoid mask per scale; and per-scale
transposed convolutions decode the masked coefficients back to
waveforms.
"""

from __future__ import annotations

import io
import json
import struct
import zipfile
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import net_core as nc
from .errors import (
    EmptyAfterVadError,
    RangeError,
    ShapeMismatchError,
    TooShortError,
    UnknownKeyError,
    UnsupportedFormatError,
)
from .net_core import ConvSpec, Tensor

CHECKPOINT_CONFIG_NAME = "config.json"
CHECKPOINT_PARAMS_NAME = "params.bin"


@dataclass(frozen=True)
class SpexConfig:
    """Architecture and loss hyperparameters.

    N: filters per encoder scale; L1/L2/L3: encoder filter lengths in
    samples (stride is L1/2 everywhere); O: extractor channel width; P:
    depthwise channels; Q: depthwise kernel; B: blocks per stack; R:
    stacks; D: speaker embedding dim; alpha/beta: scale weights; gamma:
    multi-task weight.  Defaults are the best published operating point.
    """

    N: int = 256
    L1: int = 20
    L2: int = 80
    L3: int = 160
    O: int = 256
    P: int = 512
    Q: int = 3
    B: int = 8
    R: int = 4
    D: int = 400
    n_speakers: int = 101
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 0.2
    feature_dim: int = 60
    speaker_rnn_cells: int = 256
    speaker_linear_units: int = 256

    def __post_init__(self):
        for name in (
            "N", "L1", "L2", "L3", "O", "P", "Q", "B", "R", "D",
            "n_speakers", "feature_dim", "speaker_rnn_cells", "speaker_linear_units",
        ):
            if getattr(self, name) < 1:
                raise RangeError(f"{name} must be positive, got {getattr(self, name)}")
        if self.L1 % 2:
            raise RangeError(f"L1 must be even for an integral stride, got {self.L1}")
        if self.L2 < self.L1 or self.L3 < self.L1:
            raise RangeError(f"L2 and L3 must be >= L1, got {self.L1}/{self.L2}/{self.L3}")
        if self.Q % 2 == 0:
            raise RangeError(f"Q must be odd so dilated blocks keep the frame count, got {self.Q}")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta >= 1.0:
            raise RangeError(f"need alpha, beta >= 0 and alpha+beta < 1, got {self.alpha}, {self.beta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise RangeError(f"gamma must be in [0, 1], got {self.gamma}")

    @property
    def stride(self) -> int:
        return self.L1 // 2

    def frame_count(self, padded_len: int) -> int:
        return 2 * (padded_len - self.L1) // self.L1 + 1

    def padded_length(self, t: int) -> int:
        """Smallest T' >= t for which the frame count is integral."""
        remainder = (t - self.L1) % self.stride
        return t if remainder == 0 else t + self.stride - remainder

    def receptive_field_frames(self) -> int:
        """Extractor receptive field: each block with dilation d widens the
        frame footprint by (Q-1)*d on top of the single starting frame."""
        reach = 1
        for _ in range(self.R):
            for b in range(self.B):
                reach += (self.Q - 1) * 2**b
        return reach


@dataclass
class MultiScaleEmbedding:
    E1: Tensor
    E2: Tensor
    E3: Tensor

    @property
    def frame_count(self) -> int:
        return self.E1.shape[2]


@dataclass
class SpeakerEmbedding:
    vector: Tensor  # (batch, D)
    logits: Tensor  # (batch, n_speakers)


@dataclass
class MaskSet:
    M1: Tensor
    M2: Tensor
    M3: Tensor


@dataclass
class ExtractionResult:
    s1: Tensor  # (batch, T); the designated inference output
    s2: Tensor
    s3: Tensor
    s_w: Tensor  # (1-alpha-beta)*s1 + alpha*s2 + beta*s3


class SpexModel:
    """Holds named parameters and composes the four components."""

    def __init__(self, config: SpexConfig, seed: int = 0):
        self.config = config
        self.params: dict = {}
        rng = np.random.default_rng(seed)
        c = config

        def uniform(name, shape, fan_in):
            bound = float(np.sqrt(1.0 / fan_in))
            self.params[name] = Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

        def constant(name, shape, value):
            self.params[name] = Tensor(np.full(shape, float(value)), requires_grad=True)

        for i, length in enumerate((c.L1, c.L2, c.L3), start=1):
            uniform(f"encoder.scale{i}.weight", (c.N, 1, length), length)
            uniform(f"encoder.scale{i}.bias", (c.N,), length)

        h = c.speaker_rnn_cells
        for direction in ("fwd", "bwd"):
            bound_src = h
            uniform(f"speaker.blstm.{direction}.w_in", (4 * h, c.feature_dim), bound_src)
            uniform(f"speaker.blstm.{direction}.w_rec", (4 * h, h), bound_src)
            uniform(f"speaker.blstm.{direction}.bias", (4 * h,), bound_src)
        u = c.speaker_linear_units
        uniform("speaker.proj.weight", (2 * h, u), 2 * h)
        uniform("speaker.proj.bias", (u,), 2 * h)
        uniform("speaker.embed.weight", (u, c.D), u)
        uniform("speaker.embed.bias", (c.D,), u)
        uniform("speaker.classifier.weight", (c.D, c.n_speakers), c.D)
        uniform("speaker.classifier.bias", (c.n_speakers,), c.D)

        constant("extractor.input_norm.gain", (3 * c.N,), 1.0)
        constant("extractor.input_norm.bias", (3 * c.N,), 0.0)
        uniform("extractor.input_conv.weight", (c.O, 3 * c.N, 1), 3 * c.N)
        uniform("extractor.input_conv.bias", (c.O,), 3 * c.N)
        for r in range(c.R):
            for b in range(c.B):
                prefix = f"extractor.stack{r}.block{b}"
                in_ch = c.O + c.D if b == 0 else c.O
                uniform(f"{prefix}.conv_in.weight", (c.P, in_ch, 1), in_ch)
                uniform(f"{prefix}.conv_in.bias", (c.P,), in_ch)
                constant(f"{prefix}.prelu1.slope", (c.P, 1), 0.25)
                constant(f"{prefix}.norm1.gain", (c.P,), 1.0)
                constant(f"{prefix}.norm1.bias", (c.P,), 0.0)
                uniform(f"{prefix}.dconv.weight", (c.P, 1, c.Q), c.Q)
                uniform(f"{prefix}.dconv.bias", (c.P,), c.Q)
                constant(f"{prefix}.prelu2.slope", (c.P, 1), 0.25)
                constant(f"{prefix}.norm2.gain", (c.P,), 1.0)
                constant(f"{prefix}.norm2.bias", (c.P,), 0.0)
                uniform(f"{prefix}.conv_out.weight", (c.O, c.P, 1), c.P)
                uniform(f"{prefix}.conv_out.bias", (c.O,), c.P)
        for i in range(1, 4):
            uniform(f"extractor.mask{i}.weight", (c.N, c.O, 1), c.O)
            uniform(f"extractor.mask{i}.bias", (c.N,), c.O)

        for i, length in enumerate((c.L1, c.L2, c.L3), start=1):
            uniform(f"decoder.scale{i}.weight", (c.N, 1, length), c.N)
            uniform(f"decoder.scale{i}.bias", (1,), c.N)

    # -- parameter plumbing ------------------------------------------------

    def named_parameters(self) -> dict:
        return dict(self.params)

    def parameters(self) -> list:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    # -- components ----------------------------------------------------------

    def speech_encode(self, mixture) -> MultiScaleEmbedding:
        """Mixture (batch, T) -> nonnegative (batch, N, K) per scale.

        T is right-zero-padded so the frame count is integral, and each
        longer-filter scale gets (L_i - L1) extra end zeros so all three
        scales emit the same K frames.
        """
        c = self.config
        x = nc.as_tensor(mixture)
        if x.ndim != 2:
            raise ShapeMismatchError(f"expected (batch, samples), got {x.shape}")
        t = x.shape[1]
        if t < c.L3:
            raise TooShortError(f"input of {t} samples is shorter than L3={c.L3}")
        x = nc.reshape(x, (x.shape[0], 1, t))
        base = nc.pad_end(x, 2, c.padded_length(t) - t)
        scales = []
        for i, length in enumerate((c.L1, c.L2, c.L3), start=1):
            spec = ConvSpec(1, c.N, kernel=length, stride=c.stride)
            inp = nc.pad_end(base, 2, length - c.L1)
            scales.append(
                nc.relu(
                    nc.conv1d(inp, spec, self._p(f"encoder.scale{i}.weight"),
                              self._p(f"encoder.scale{i}.bias"))
                )
            )
        e1, e2, e3 = scales
        return MultiScaleEmbedding(E1=e1, E2=e2, E3=e3)

    def speaker_encode(self, feature_seqs) -> SpeakerEmbedding:
        """Enrollment features (list of (frames, feature_dim) arrays, one
        per batch item) -> 400-dim embedding plus classifier logits."""
        c = self.config
        fwd = tuple(self._p(f"speaker.blstm.fwd.{k}") for k in ("w_in", "w_rec", "bias"))
        bwd = tuple(self._p(f"speaker.blstm.bwd.{k}") for k in ("w_in", "w_rec", "bias"))
        pooled = []
        for seq in feature_seqs:
            arr = seq.data if isinstance(seq, Tensor) else np.asarray(seq, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != c.feature_dim:
                raise ShapeMismatchError(
                    f"reference features must be (frames, {c.feature_dim}), got {arr.shape}"
                )
            if arr.shape[0] < 1:
                raise EmptyAfterVadError("reference utterance has no frames left")
            hidden = nc.blstm(Tensor(arr[None]), fwd, bwd)  # (1, F, 2H)
            flat = nc.reshape(hidden, (arr.shape[0], 2 * c.speaker_rnn_cells))
            act = nc.relu(nc.add(nc.matmul(flat, self._p("speaker.proj.weight")),
                                 self._p("speaker.proj.bias")))
            emb = nc.add(nc.matmul(act, self._p("speaker.embed.weight")),
                         self._p("speaker.embed.bias"))
            pooled.append(nc.mean(emb, axis=0, keepdims=True))  # (1, D)
        vector = pooled[0] if len(pooled) == 1 else nc.concat(pooled, axis=0)
        logits = nc.add(nc.matmul(vector, self._p("speaker.classifier.weight")),
                        self._p("speaker.classifier.bias"))
        return SpeakerEmbedding(vector=vector, logits=logits)

    def _tcn_block(self, x: Tensor, residual: Tensor, stack: int, block: int) -> Tensor:
        c = self.config
        prefix = f"extractor.stack{stack}.block{block}"
        in_ch = x.shape[1]
        y = nc.conv1d(x, ConvSpec(in_ch, c.P, 1),
                      self._p(f"{prefix}.conv_in.weight"), self._p(f"{prefix}.conv_in.bias"))
        y = nc.prelu(y, self._p(f"{prefix}.prelu1.slope"))
        y = nc.global_layer_norm(y, self._p(f"{prefix}.norm1.gain"), self._p(f"{prefix}.norm1.bias"))
        dilation = 2**block
        spec = ConvSpec(c.P, c.P, kernel=c.Q, dilation=dilation, groups=c.P,
                        padding=dilation * (c.Q - 1) // 2)
        y = nc.conv1d(y, spec, self._p(f"{prefix}.dconv.weight"), self._p(f"{prefix}.dconv.bias"))
        y = nc.prelu(y, self._p(f"{prefix}.prelu2.slope"))
        y = nc.global_layer_norm(y, self._p(f"{prefix}.norm2.gain"), self._p(f"{prefix}.norm2.bias"))
        y = nc.conv1d(y, ConvSpec(c.P, c.O, 1),
                      self._p(f"{prefix}.conv_out.weight"), self._p(f"{prefix}.conv_out.bias"))
        return nc.add(residual, y)

    def extract_masks(self, embedding: MultiScaleEmbedding, speaker: SpeakerEmbedding) -> MaskSet:
        """Speaker-conditioned temporal convolution stacks -> one sigmoid
        mask per scale, all in [0, 1]."""
        c = self.config
        frames = embedding.frame_count
        x = nc.concat([embedding.E1, embedding.E2, embedding.E3], axis=1)
        x = nc.channel_norm(x, self._p("extractor.input_norm.gain"),
                            self._p("extractor.input_norm.bias"))
        x = nc.conv1d(x, ConvSpec(3 * c.N, c.O, 1),
                      self._p("extractor.input_conv.weight"),
                      self._p("extractor.input_conv.bias"))
        voice = nc.tile_frames(speaker.vector, frames)  # (batch, D, frames)
        for r in range(c.R):
            # the residual skips the speaker channels so widths match
            x = self._tcn_block(nc.concat([x, voice], axis=1), x, r, 0)
            for b in range(1, c.B):
                x = self._tcn_block(x, x, r, b)
        masks = []
        for i in range(1, 4):
            masks.append(
                nc.sigmoid(
                    nc.conv1d(x, ConvSpec(c.O, c.N, 1),
                              self._p(f"extractor.mask{i}.weight"),
                              self._p(f"extractor.mask{i}.bias"))
                )
            )
        return MaskSet(*masks)

    def apply_masks(self, embedding: MultiScaleEmbedding, masks: MaskSet) -> tuple:
        pairs = (
            (embedding.E1, masks.M1),
            (embedding.E2, masks.M2),
            (embedding.E3, masks.M3),
        )
        out = []
        for e, m in pairs:
            if e.shape != m.shape:
                raise ShapeMismatchError(f"embedding {e.shape} vs mask {m.shape}")
            out.append(nc.mul(e, m))
        return tuple(out)

    def speech_decode(self, s1: Tensor, s2: Tensor, s3: Tensor, target_len: int) -> ExtractionResult:
        """Masked coefficients -> waveforms, trimmed to the input length."""
        c = self.config
        outs = []
        for i, (resp, length) in enumerate(zip((s1, s2, s3), (c.L1, c.L2, c.L3)), start=1):
            spec = ConvSpec(c.N, 1, kernel=length, stride=c.stride)
            wav = nc.deconv1d(resp, spec, self._p(f"decoder.scale{i}.weight"),
                              self._p(f"decoder.scale{i}.bias"))
            if wav.shape[2] < target_len:
                raise ShapeMismatchError(
                    f"decoded {wav.shape[2]} samples < requested {target_len}"
                )
            wav = nc.narrow(wav, 2, 0, target_len)
            outs.append(nc.reshape(wav, (wav.shape[0], target_len)))
        w1, w2, w3 = outs
        weighted = nc.add(
            nc.add(nc.mul(1.0 - c.alpha - c.beta, w1), nc.mul(c.alpha, w2)),
            nc.mul(c.beta, w3),
        )
        return ExtractionResult(s1=w1, s2=w2, s3=w3, s_w=weighted)

    def forward(self, mixture, reference_features) -> tuple:
        """Full pipeline; returns (ExtractionResult, speaker logits)."""
        mixture = nc.as_tensor(mixture)
        embedding = self.speech_encode(mixture)
        speaker = self.speaker_encode(reference_features)
        masks = self.extract_masks(embedding, speaker)
        s1, s2, s3 = self.apply_masks(embedding, masks)
        result = self.speech_decode(s1, s2, s3, mixture.shape[1])
        return result, speaker.logits


# -- checkpointing -------------------------------------------------------


def save_checkpoint(model: SpexModel, path) -> None:
    """Single archive: config JSON + named float32 little-endian arrays."""
    blob = io.BytesIO()
    for name in sorted(model.params):
        data = model.params[name].data.astype("<f4")
        encoded = name.encode("utf-8")
        blob.write(struct.pack("<I", len(encoded)))
        blob.write(encoded)
        blob.write(struct.pack("<I", data.ndim))
        blob.write(struct.pack(f"<{data.ndim}I", *data.shape))
        blob.write(data.tobytes())
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        stamp = (1980, 1, 1, 0, 0, 0)  # fixed timestamps keep archives reproducible
        zf.writestr(
            zipfile.ZipInfo(CHECKPOINT_CONFIG_NAME, date_time=stamp),
            json.dumps(asdict(model.config), indent=2, sort_keys=True),
        )
        zf.writestr(zipfile.ZipInfo(CHECKPOINT_PARAMS_NAME, date_time=stamp), blob.getvalue())


def load_checkpoint(path) -> SpexModel:
    """Rebuild a model, validating config keys and parameter names/shapes."""
    with zipfile.ZipFile(path) as zf:
        raw_config = json.loads(zf.read(CHECKPOINT_CONFIG_NAME))
        blob = zf.read(CHECKPOINT_PARAMS_NAME)
    known = {f.name for f in fields(SpexConfig)}
    unknown = set(raw_config) - known
    if unknown:
        raise UnknownKeyError(f"checkpoint config has unknown keys: {sorted(unknown)}")
    model = SpexModel(SpexConfig(**raw_config))
    offset = 0
    seen = set()
    while offset < len(blob):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise UnsupportedFormatError(f"checkpoint parameter stream is corrupt: {exc}")
        if name not in model.params:
            raise UnknownKeyError(f"checkpoint has unknown parameter {name!r}")
        expected = model.params[name].data.shape
        if tuple(shape) != expected:
            raise ShapeMismatchError(f"{name}: checkpoint {tuple(shape)} vs model {expected}")
        model.params[name].data = data.reshape(shape).astype(np.float64)
        seen.add(name)
    missing = set(model.params) - seen
    if missing:
        raise UnknownKeyError(f"checkpoint is missing parameters: {sorted(missing)[:3]}...")
    return model
