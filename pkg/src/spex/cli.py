"""Command-line entry point: simulate, train, extract, evaluate.

Configuration is a JSON file with optional "model", "train", "paths"
sections and a top-level "seed", all overridable from the command line
with dotted flags (--model.R 2, --train.lr0 5e-4) plus the shorthands
--alpha, --beta, --gamma and --seed.  Unknown keys are errors, never
warnings.  Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .audio_io import Waveform, load_wav, save_wav
from .errors import SpexError, UnknownKeyError
from .mixsim import scan_corpus, simulate, load_manifest
from .model import SpexConfig, load_checkpoint, SpexModel
from .net_core import no_grad
from .trainer import (
    TrainConfig,
    evaluate,
    reference_feature_matrix,
    segment_manifest,
    train,
)

log = logging.getLogger("spex")

_SHORTHAND = {
    "alpha": "model.alpha",
    "beta": "model.beta",
    "gamma": "model.gamma",
    "seed": "seed",
}


class UsageError(Exception):
    """Malformed command line (not a domain problem): exit code 2."""


@dataclass(frozen=True)
class CliConfig:
    """Resolved view of config file plus flag overrides."""

    model: SpexConfig
    train: TrainConfig
    seed: int | None
    paths: dict
    explicit: frozenset  # dotted keys the user actually provided


def _field_types(cls) -> dict:
    return {f.name: f.type for f in fields(cls)}


def _coerce(key: str, value, type_str: str, from_flag: bool):
    """Validate/convert one config value against its dataclass field type."""
    if from_flag and isinstance(value, str):
        lowered = value.strip().lower()
        if type_str == "float | None" and lowered in ("none", "null"):
            return None
        if type_str == "bool":
            if lowered in ("true", "1"):
                return True
            if lowered in ("false", "0"):
                return False
            raise TypeError(f"{key} expects a boolean, got {value!r}")
        try:
            value = json.loads(value)
        except ValueError:
            raise TypeError(f"{key} expects a {type_str}, got {value!r}")
    if type_str == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{key} expects an integer, got {value!r}")
        return value
    if type_str == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{key} expects a number, got {value!r}")
        return float(value)
    if type_str == "float | None":
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{key} expects a number or null, got {value!r}")
        return float(value)
    if type_str == "bool":
        if not isinstance(value, bool):
            raise TypeError(f"{key} expects a boolean, got {value!r}")
        return value
    if type_str == "tuple":
        if not isinstance(value, (list, tuple)):
            raise TypeError(f"{key} expects a list, got {value!r}")
        return tuple(value)
    raise TypeError(f"{key} has unsupported config type {type_str}")


def _route(key: str) -> tuple:
    """Map a flag/file key to (section, field); section None means top level."""
    key = _SHORTHAND.get(key, key)
    if key == "seed":
        return None, "seed"
    if "." in key:
        section, field_name = key.split(".", 1)
        if section in ("model", "train", "paths") and "." not in field_name:
            return section, field_name
    raise UnknownKeyError(f"unknown configuration key {key!r}")


def parse_overrides(tokens) -> dict:
    """Turn ["--model.R", "2", "--alpha=0.2"] into {"model.R": "2", ...}."""
    out: dict = {}
    i = 0
    tokens = list(tokens)
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise UsageError(f"unexpected argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            key, raw = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(tokens):
                raise UsageError(f"flag {tok} needs a value")
            raw = tokens[i + 1]
            i += 2
        out[key] = raw
    return out


def parse_config(file=None, overrides=()) -> CliConfig:
    """Merge JSON config file and flag overrides over the built-in defaults.

    Flags override file values; unknown keys raise UnknownKeyError; type
    and range violations raise TypeError / RangeError.
    """
    sections: dict = {"model": {}, "train": {}, "paths": {}}
    seed = None
    explicit: set = set()
    types = {"model": _field_types(SpexConfig), "train": _field_types(TrainConfig)}

    def apply(section, field_name, value, from_flag):
        nonlocal seed
        if section is None:
            if isinstance(value, str) and from_flag:
                try:
                    value = int(value)
                except ValueError:
                    raise TypeError(f"seed expects an integer, got {value!r}")
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError(f"seed expects an integer, got {value!r}")
            seed = value
            explicit.add("seed")
            return
        if section == "paths":
            sections["paths"][field_name] = str(value)
            explicit.add(f"paths.{field_name}")
            return
        if field_name not in types[section]:
            raise UnknownKeyError(f"unknown configuration key {section}.{field_name!r}")
        sections[section][field_name] = _coerce(
            f"{section}.{field_name}", value, types[section][field_name], from_flag
        )
        explicit.add(f"{section}.{field_name}")

    if file is not None:
        raw = json.loads(Path(file).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise TypeError("config file must hold a JSON object")
        for top_key, value in raw.items():
            if top_key == "seed":
                apply(None, "seed", value, from_flag=False)
            elif top_key in ("model", "train", "paths"):
                if not isinstance(value, dict):
                    raise TypeError(f"config section {top_key!r} must be an object")
                for field_name, v in value.items():
                    apply(top_key, field_name, v, from_flag=False)
            else:
                raise UnknownKeyError(f"unknown configuration key {top_key!r}")

    if isinstance(overrides, dict):
        flat = overrides
    else:
        flat = parse_overrides(overrides)
    for key, raw in flat.items():
        section, field_name = _route(key)
        apply(section, field_name, raw, from_flag=True)

    return CliConfig(
        model=SpexConfig(**sections["model"]),
        train=TrainConfig(**sections["train"]),
        seed=seed,
        paths=dict(sections["paths"]),
        explicit=frozenset(explicit),
    )


def resolve_seed(flag_seed, config_seed) -> int:
    """Precedence: --seed flag, config file, SPEX_SEED, then 0."""
    if flag_seed is not None:
        return int(flag_seed)
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get("SPEX_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise TypeError(f"SPEX_SEED must be an integer, got {env!r}")
    return 0


def _snr_range(text: str) -> tuple:
    try:
        lo, hi = text.split(":")
        return (float(lo), float(hi))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")


def _log_run(command: str, cfg: CliConfig, seed: int) -> None:
    log.info("%s: seed=%d", command, seed)
    log.info("model config: %s", json.dumps(asdict(cfg.model), sort_keys=True))
    log.info("train config: %s", json.dumps(asdict(cfg.train), sort_keys=True))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spex",
        description="Simulate mixtures, train, and run target-speaker extraction.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{simulate,train,extract,evaluate}")

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="build a mixture corpus + manifest")
    common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--snr", type=_snr_range, default=(0.0, 5.0), help="lo:hi dB")

    p = sub.add_parser("train", help="train a model on a simulated manifest")
    common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--dev", type=Path, default=None, help="dev manifest (defaults to --manifest)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("extract", help="extract the target speaker from one mixture")
    common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--mixture", type=Path, required=True)
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--emit-all-scales", action="store_true")

    p = sub.add_parser("evaluate", help="score a model over a manifest")
    common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)

    return parser


def _cmd_simulate(args, cfg: CliConfig, seed: int) -> int:
    corpus = scan_corpus(args.corpus)
    manifest = simulate(corpus, args.n, args.speakers, args.snr, seed, args.out)
    log.info("wrote %d mixtures under %s", len(manifest.entries), args.out)
    print(args.out / "manifest.jsonl")
    return 0


def _cmd_train(args, cfg: CliConfig, seed: int) -> int:
    manifest = load_manifest(args.manifest)
    dev = load_manifest(args.dev) if args.dev is not None else manifest
    if args.dev is None:
        log.warning("no --dev manifest; using the training manifest for dev selection")
    train_cfg = replace(cfg.train, seed=seed)
    model_cfg = cfg.model
    speakers = sorted({e.target_speaker_id for e in manifest.entries})
    if "model.n_speakers" not in cfg.explicit:
        model_cfg = replace(model_cfg, n_speakers=len(speakers))
        log.info("n_speakers not set; using %d from the manifest", len(speakers))
    model = SpexModel(model_cfg, seed=seed)
    segments = segment_manifest(manifest, train_cfg.segment_seconds)
    log.info("%d training segments from %d entries", len(segments), len(manifest.entries))
    model, history = train(model, segments, dev, train_cfg, out_dir=args.out)
    best = min(h["dev_loss"] for h in history)
    log.info("finished after %d epochs; best dev loss %.4f", len(history), best)
    print(args.out / "best.ckpt")
    return 0


def _cmd_extract(args, cfg: CliConfig, seed: int) -> int:
    model = load_checkpoint(args.model)
    mixture = load_wav(args.mixture)
    reference = load_wav(args.reference)
    feats = reference_feature_matrix(
        reference, use_cmn=cfg.train.use_cmn, use_vad=cfg.train.use_vad
    )
    with no_grad():
        result, _ = model.forward(mixture.samples[None, :], [feats])
    save_wav(Waveform(samples=result.s1.data[0]), args.out)
    written = [args.out]
    if args.emit_all_scales:
        for name, est in (("s2", result.s2), ("s3", result.s3), ("sw", result.s_w)):
            path = args.out.with_name(f"{args.out.stem}_{name}{args.out.suffix}")
            save_wav(Waveform(samples=est.data[0]), path)
            written.append(path)
    for path in written:
        print(path)
    return 0


def _cmd_evaluate(args, cfg: CliConfig, seed: int) -> int:
    model = load_checkpoint(args.model)
    manifest = load_manifest(args.manifest)
    report = evaluate(
        model, manifest, use_vad=cfg.train.use_vad, use_cmn=cfg.train.use_cmn
    )
    args.report.parent.mkdir(parents=True, exist_ok=True)
    args.report.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    mean = report["mean"]
    log.info(
        "mixture %.2f dB | s1 %+.2f dB | s_w %+.2f dB over %d utterances",
        mean["mixture_si_sdr"], mean["s1"]["si_sdri"], mean["s_w"]["si_sdri"],
        report["n_utterances"],
    )
    print(args.report)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "extract": _cmd_extract,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s"
    )
    parser = _build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config, extra)
        seed = resolve_seed(args.seed, cfg.seed)
        _log_run(args.command, cfg, seed)
        return _COMMANDS[args.command](args, cfg, seed)
    except UsageError as e:
        print(f"spex {args.command}: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (SpexError, OSError, ValueError, TypeError, IndexError) as e:
        print(f"spex {args.command}: error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main(sys.argv[1:]))
