"""Run configuration: defaults, YAML config files, and flag overrides.

Precedence is flags > config file > defaults. A config file is a flat YAML
mapping whose keys are the option names below (``batch_size: 32``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .model import MODALITIES, VARIANTS, ModelConfig
from .synthetic import WorldConfig
from .training import TrainConfig


@dataclass(frozen=True)
class Option:
    type: type
    default: Any
    help: str
    choices: tuple | None = None


PUBLISHED = "published setting"
OPTIONS: dict[str, Option] = {
    # paths
    "corpus": Option(str, None, "JSON-lines outfit corpus"),
    "visual_features": Option(str, None, "dense visual feature file"),
    "textual_features": Option(str, None, "dense textual feature file"),
    "checkpoint": Option(str, None, "checkpoint path"),
    "out_dir": Option(str, ".", "directory for reports and figures"),
    # model
    "d": Option(int, 12, f"latent/state size ({PUBLISHED})"),
    "T": Option(int, 3, f"propagation steps ({PUBLISHED})"),
    "variant": Option(str, "NGNN", "propagation scheme", VARIANTS),
    "modality": Option(str, "multimodal", "input features", MODALITIES),
    "beta": Option(float, 0.2, f"weight of the visual score in the fused score ({PUBLISHED})"),
    # training
    "lr": Option(float, 0.001, f"RMSProp learning rate ({PUBLISHED})"),
    "batch_size": Option(int, 16, f"pairs per mini-batch ({PUBLISHED})"),
    "lam": Option(float, 0.001, f"L2 regularization weight ({PUBLISHED})"),
    "max_epochs": Option(int, 20, "epoch budget"),
    "patience": Option(int, 3, "epochs without validation improvement before stopping"),
    "min_delta": Option(float, 1e-4, "smallest validation-loss decrease that counts as improvement"),
    "rho": Option(float, 0.9, "RMSProp decay"),
    "eps": Option(float, 1e-8, "RMSProp epsilon"),
    "reg_scope": Option(str, "touched", "parameters entering the L2 term", ("touched", "global")),
    "seed": Option(int, 0, "top-level seed; every random stream derives from it"),
    # data
    "keep_threshold": Option(int, 100, f"keep categories seen more than this many times ({PUBLISHED})"),
    "min_size": Option(int, 3, f"smallest outfit kept ({PUBLISHED})"),
    "max_size": Option(int, 8, f"largest outfit kept ({PUBLISHED})"),
    "text_features": Option(bool, False, "also build a title vocabulary and Boolean text features"),
    # evaluation
    "same_category": Option(bool, False, "draw FITB negatives from the blanked item's category"),
    "export_set": Option(str, None, "write the evaluation set here"),
    "import_set": Option(str, None, "evaluate on this previously exported set"),
    # benchmark
    "n_min": Option(int, 2, "smallest graph size"),
    "n_max": Option(int, 30, "largest graph size"),
    "bench_d": Option(int, 12, "state size used by the benchmark"),
    "bench_f": Option(int, 32, "feature size used by the benchmark"),
    "repetitions": Option(int, 5, "timed repetitions per point (at least 5)"),
    # synthetic world
    "n_categories": Option(int, 12, "synthetic categories"),
    "items_per_category": Option(int, 50, "synthetic items per category"),
    "n_train": Option(int, 2000, "synthetic training outfits"),
    "n_valid": Option(int, 200, "synthetic validation outfits"),
    "n_test": Option(int, 400, "synthetic test outfits"),
}

COMMAND_OPTIONS: dict[str, tuple[str, ...]] = {
    "gen-synth": ("out_dir", "seed", "n_categories", "items_per_category", "n_train", "n_valid", "n_test",
                  "min_size", "max_size"),
    "build-graph": ("corpus", "out_dir", "keep_threshold", "min_size", "max_size", "text_features"),
    "train": ("corpus", "visual_features", "textual_features", "checkpoint", "out_dir", "d", "T", "variant",
              "modality", "beta", "lr", "batch_size", "lam", "max_epochs", "patience", "min_delta", "rho", "eps",
              "reg_scope", "seed", "keep_threshold", "min_size", "max_size"),
    "eval-fitb": ("corpus", "visual_features", "textual_features", "checkpoint", "out_dir", "seed",
                  "same_category", "export_set", "import_set", "min_size", "max_size"),
    "eval-auc": ("corpus", "visual_features", "textual_features", "checkpoint", "out_dir", "seed",
                 "export_set", "import_set", "min_size", "max_size"),
    "bench": ("out_dir", "n_min", "n_max", "bench_d", "bench_f", "repetitions", "seed"),
    "inspect-checkpoint": ("checkpoint",),
}

REQUIRED_INPUTS: dict[str, tuple[str, ...]] = {
    "build-graph": ("corpus",),
    "train": ("corpus",),
    "eval-fitb": ("corpus", "checkpoint"),
    "eval-auc": ("corpus", "checkpoint"),
    "inspect-checkpoint": ("checkpoint",),
}


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    data = yaml.safe_load(p.read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a mapping of option names to values")
    return data


def _coerce(name: str, value, problems: list[str]):
    opt = OPTIONS[name]
    if value is None:
        return None
    try:
        if opt.type is bool:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if opt.type is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return opt.type(value)
    except (TypeError, ValueError):
        problems.append(f"{name}: cannot read {value!r} as {opt.type.__name__}")
        return None


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def model_config(self) -> ModelConfig:
        return ModelConfig(d=self.d, T=self.T, variant=self.variant, modality=self.modality, beta=self.beta)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, lam=self.lam, max_epochs=self.max_epochs,
                           patience=self.patience, min_delta=self.min_delta, seed=self.seed, rho=self.rho,
                           eps=self.eps, reg_scope=self.reg_scope)

    def world_config(self) -> WorldConfig:
        return WorldConfig(n_categories=self.n_categories, items_per_category=self.items_per_category,
                           n_train=self.n_train, n_valid=self.n_valid, n_test=self.n_test,
                           min_size=self.min_size, max_size=self.max_size)


def resolve(command: str, flags: dict, file_values: dict | None = None) -> RunConfig:
    """Merge defaults, config-file values and flags, then validate.

    Every problem found is reported together in one :class:`ConfigError`.
    """
    allowed = COMMAND_OPTIONS[command]
    problems: list[str] = []
    values = {k: OPTIONS[k].default for k in allowed}
    for source, given in (("config file", file_values or {}), ("flags", flags)):
        for key, raw in given.items():
            if key not in OPTIONS:
                problems.append(f"unknown option {key!r} in {source}")
                continue
            if key not in allowed:
                if source == "config file":
                    continue  # shared config files may carry options for other commands
                problems.append(f"option {key!r} does not apply to {command}")
                continue
            if raw is None:
                continue
            v = _coerce(key, raw, problems)
            if v is not None:
                values[key] = v

    for key in allowed:
        opt = OPTIONS[key]
        if opt.choices and values[key] not in opt.choices:
            problems.append(f"{key} must be one of {', '.join(opt.choices)}, got {values[key]!r}")
    for key in REQUIRED_INPUTS.get(command, ()):
        if values.get(key) is None:
            problems.append(f"--{key.replace('_', '-')} is required")
    for key in ("corpus", "visual_features", "textual_features", "import_set"):
        if key in allowed and values.get(key) and not Path(values[key]).exists():
            problems.append(f"{key}: file not found: {values[key]}")
    if command in ("eval-fitb", "eval-auc", "inspect-checkpoint") and values.get("checkpoint"):
        if not Path(values["checkpoint"]).exists():
            problems.append(f"checkpoint: file not found: {values['checkpoint']}")
    if "out_dir" in allowed:
        out = Path(values["out_dir"])
        try:
            out.mkdir(parents=True, exist_ok=True)
            if not os.access(out, os.W_OK):
                problems.append(f"out_dir is not writable: {out}")
        except OSError as exc:
            problems.append(f"out_dir cannot be created: {exc}")

    if command == "train":
        if values["checkpoint"] is None:
            values["checkpoint"] = str(Path(values["out_dir"]) / "model.ckpt")
        try:
            ModelConfig(d=values["d"], T=values["T"], variant=values["variant"],
                        modality=values["modality"], beta=values["beta"])
        except (ConfigError, TypeError) as exc:
            problems.append(str(exc))
        try:
            TrainConfig(lr=values["lr"], batch_size=values["batch_size"], lam=values["lam"],
                        max_epochs=values["max_epochs"], patience=values["patience"],
                        rho=values["rho"], reg_scope=values["reg_scope"])
        except (ConfigError, TypeError) as exc:
            problems.append(str(exc))
        if values["modality"] == "multimodal" and values["beta"] in (0.0, 1.0):
            other = "textual" if values["beta"] == 0.0 else "visual"
            problems.append(f"beta={values['beta']} leaves one channel unused; use --modality {other} instead")
        needs = {"visual": ("visual_features",), "textual": ("textual_features",),
                 "multimodal": ("visual_features", "textual_features")}.get(values["modality"], ())
        for key in needs:
            if values.get(key) is None:
                problems.append(f"--{key.replace('_', '-')} is required for modality {values['modality']}")
    if command == "bench":
        if values["repetitions"] < 5:
            problems.append("repetitions must be at least 5")
        if values["n_max"] - values["n_min"] < 4 or values["n_min"] < 2:
            problems.append("bench needs n_min >= 2 and at least 5 sizes")

    if problems:
        raise ConfigError("; ".join(problems))
    return RunConfig(command, values)
