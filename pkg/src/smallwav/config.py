"""Flat key=value run configuration shared by the command-line tools.

One file configures a whole run.  Keys are the field names of
ModelConfig, SynthSpec and DistillConfig plus a handful of driver knobs
(split sizes, student depth, teacher schedule, timing repeats).  Values
are Python literals, so tuples and dicts work:

    d_model = 32
    conv_layers = ((16, 8, 4), (32, 4, 2))
    epochs = 6
    noise_std = 0.02
    tokens_per_utterance = (3, 6)

A single `seed` key (or the --seed flag) feeds every consumer: model
init, shuffling and the train split all use seed s, validation s+1 and
evaluation s+2.  A `seed` set in the file wins over the flag so that a
config file freezes the full experiment.
"""

from __future__ import annotations

import ast
import dataclasses

from .data import SynthSpec, generate_dataset
from .distill import DistillConfig
from .model import ConfigError, ModelConfig

_MODEL_KEYS = frozenset(f.name for f in dataclasses.fields(ModelConfig))
_SPEC_KEYS = frozenset(f.name for f in dataclasses.fields(SynthSpec))
_DISTILL_KEYS = frozenset(f.name for f in dataclasses.fields(DistillConfig))

DRIVER_DEFAULTS = {
    "val_utterances": 16,
    "eval_utterances": 32,
    "student_layers": 2,
    "time_repeats": 3,
    "teacher_epochs": 22,
    "teacher_base_lr": 1e-4,
    "teacher_warmup": 3,
}

KNOWN_KEYS = _MODEL_KEYS | _SPEC_KEYS | _DISTILL_KEYS | frozenset(DRIVER_DEFAULTS)


def parse_config(path) -> dict:
    """Read a key=value file into a dict of Python values.

    Blank lines and lines starting with # are skipped.  Unknown keys
    and unparseable values raise ConfigError naming the offending line.
    """
    try:
        with open(path) as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {text!r}")
        key, _, value = text.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(
                f"{path}:{lineno}: cannot parse value for {key!r}: {exc}"
            ) from exc
    return out


def effective_seed(cfg: dict, flag_seed: int) -> int:
    return int(cfg.get("seed", flag_seed))


def model_config_from(cfg: dict) -> ModelConfig:
    return ModelConfig(**{k: cfg[k] for k in _MODEL_KEYS if k in cfg})


def distill_config_from(cfg: dict, seed: int) -> DistillConfig:
    kwargs = {k: cfg[k] for k in _DISTILL_KEYS if k in cfg}
    kwargs["seed"] = seed
    return DistillConfig(**kwargs)


def teacher_config_from(cfg: dict, seed: int) -> DistillConfig:
    """Optimizer schedule for CTC teacher training.

    Reuses the distillation optimizer with its own epoch count and
    learning ramp; the teacher_* keys exist because a good teacher
    needs a longer run than a distillation pass.
    """
    return DistillConfig(
        epochs=int(cfg.get("teacher_epochs", DRIVER_DEFAULTS["teacher_epochs"])),
        base_lr=float(cfg.get("teacher_base_lr", DRIVER_DEFAULTS["teacher_base_lr"])),
        warmup_epochs=int(cfg.get("teacher_warmup", DRIVER_DEFAULTS["teacher_warmup"])),
        weight_decay=float(cfg.get("weight_decay", 0.01)),
        adam_betas=tuple(cfg.get("adam_betas", (0.9, 0.98))),
        adam_eps=float(cfg.get("adam_eps", 1e-6)),
        seed=seed,
    )


def synth_spec_from(cfg: dict, seed: int, n_utterances: int | None = None) -> SynthSpec:
    kwargs = {k: cfg[k] for k in _SPEC_KEYS if k in cfg}
    kwargs["seed"] = seed
    if n_utterances is not None:
        kwargs["n_utterances"] = n_utterances
    return SynthSpec(**kwargs)


def driver_value(cfg: dict, key: str):
    if key not in DRIVER_DEFAULTS:
        raise KeyError(key)
    return cfg.get(key, DRIVER_DEFAULTS[key])


def experiment_datasets(cfg: dict, seed: int) -> tuple:
    """The standard three splits: train (seed), val (seed+1), eval (seed+2).

    Returns:
        (train, val, eval_set) lists of (waveform, transcript)
    """
    train = generate_dataset(synth_spec_from(cfg, seed))
    val = generate_dataset(
        synth_spec_from(cfg, seed + 1, n_utterances=int(driver_value(cfg, "val_utterances")))
    )
    eval_set = generate_dataset(
        synth_spec_from(cfg, seed + 2, n_utterances=int(driver_value(cfg, "eval_utterances")))
    )
    return train, val, eval_set
