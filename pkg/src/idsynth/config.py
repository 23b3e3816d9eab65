"""Flat JSON run configuration.

A config file is a single JSON object with a mandatory integer ``version``
field. Keys are flat (no nesting); unknown keys are rejected so a typo in
an ablation switch cannot silently train the wrong model.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional

from .datasets import (
    LabeledDataset,
    SyntheticSpec,
    UnlabeledPool,
    generate_synthetic_dataset,
    generate_synthetic_pool,
    load_image_dataset,
)
from .errors import ConfigurationError
from .networks import ModelConfig, OptimizerSettings
from .trainer import TrainConfig

CONFIG_VERSION = 1

# Every key a config file may contain, with its expected type(s).
SCHEMA: dict[str, tuple[type, ...]] = {
    "version": (int,),
    "seed": (int,),
    "out_dir": (str,),
    # training schedule
    "total_steps": (int,),
    "batch_size": (int,),
    "lam": (float, int),
    "unsupervised_ratio": (float, int),
    "checkpoint_every": (int,),
    "literal_exp": (bool,),
    "scaled_attribute_update": (bool,),
    "enable_gc": (bool,),
    "enable_gd": (bool,),
    "enable_kl": (bool,),
    "enable_transformation": (bool,),
    # optimizer
    "learning_rate": (float, int),
    "beta1": (float, int),
    "beta2": (float, int),
    "lr_identity": (float, int),
    "lr_classifier": (float, int),
    "lr_attribute": (float, int),
    "lr_generator": (float, int),
    "lr_discriminator": (float, int),
    # architecture
    "image_size": (int,),
    "image_channels": (int,),
    "d_identity": (int,),
    "d_attribute": (int,),
    "base_channels": (int,),
    "num_stages": (int,),
    "init_std": (float, int),
    # data: either a manifest on disk or the synthetic generator
    "data_root": (str,),
    "data_manifest": (str,),
    "synthetic_identities": (int,),
    "synthetic_images_per_identity": (int,),
    "synthetic_seed": (int,),
    "unlabeled_identities": (int,),
    "unlabeled_images_per_identity": (int,),
    # evaluation
    "split_ratio": (float, int),
    "probe_hidden": (int,),
    "probe_steps": (int,),
    "probe_lr": (float, int),
    "eval_seed": (int,),
}


def load_config(path: str | os.PathLike) -> dict:
    """Parse and validate a flat JSON config file."""
    try:
        raw = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config {path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a JSON object")
    if "version" not in data:
        raise ConfigurationError(f"config {path} lacks the required 'version' field")
    if data["version"] != CONFIG_VERSION:
        raise ConfigurationError(
            f"config version {data['version']!r} unsupported (expected {CONFIG_VERSION})"
        )
    unknown = sorted(set(data) - set(SCHEMA))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in data.items():
        # bool is an int subclass in Python; keep the two apart here.
        ok = (value is True or value is False) if SCHEMA[key] == (bool,) else (
            not isinstance(value, bool) and isinstance(value, SCHEMA[key])
        )
        if not ok:
            expected = " or ".join(t.__name__ for t in SCHEMA[key])
            raise ConfigurationError(
                f"config key {key!r} must be {expected}, got {type(value).__name__}"
            )
    return data


def _optimizer_settings(cfg: dict) -> OptimizerSettings:
    overrides = {}
    for name in ("identity", "classifier", "attribute", "generator", "discriminator"):
        key = f"lr_{name}"
        if key in cfg:
            overrides[name] = float(cfg[key])
    return OptimizerSettings(
        learning_rate=float(cfg.get("learning_rate", 2e-4)),
        beta1=float(cfg.get("beta1", 0.5)),
        beta2=float(cfg.get("beta2", 0.999)),
        lr_overrides=overrides,
    )


def model_config_from(cfg: dict, num_identities: int) -> ModelConfig:
    """Architecture from config keys, sized to the dataset's identity count."""
    kwargs = {}
    for key in ("image_size", "image_channels", "d_identity", "d_attribute",
                "base_channels", "num_stages"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if "init_std" in cfg:
        kwargs["init_std"] = float(cfg["init_std"])
    return ModelConfig(num_identities=num_identities, init_seed=cfg.get("seed", 0), **kwargs)


def train_config_from(cfg: dict, num_identities: Optional[int] = None) -> TrainConfig:
    """Build a TrainConfig from a parsed config dict."""
    if "total_steps" not in cfg:
        raise ConfigurationError("training config requires 'total_steps'")
    model = model_config_from(cfg, num_identities) if num_identities else None
    return TrainConfig(
        total_steps=cfg["total_steps"],
        batch_size=cfg.get("batch_size", 32),
        lam=float(cfg.get("lam", 0.1)),
        optimizer=_optimizer_settings(cfg),
        unsupervised_ratio=float(cfg.get("unsupervised_ratio", 0.0)),
        checkpoint_every=cfg.get("checkpoint_every", 1000),
        seed=cfg.get("seed", 0),
        literal_exp=cfg.get("literal_exp", False),
        scaled_attribute_update=cfg.get("scaled_attribute_update", True),
        enable_gc=cfg.get("enable_gc", True),
        enable_gd=cfg.get("enable_gd", True),
        enable_kl=cfg.get("enable_kl", True),
        enable_transformation=cfg.get("enable_transformation", True),
        model=model,
    )


def datasets_from(cfg: dict) -> tuple[LabeledDataset, Optional[UnlabeledPool]]:
    """Materialize the configured datasets.

    Either data_root + data_manifest point at images on disk, or
    synthetic_identities + synthetic_images_per_identity describe a
    procedural dataset. An optional unlabeled pool is synthetic-only and
    uses identities disjoint from the labeled ones.
    """
    has_manifest = "data_manifest" in cfg or "data_root" in cfg
    has_synthetic = "synthetic_identities" in cfg
    if has_manifest == has_synthetic:
        raise ConfigurationError(
            "configure exactly one data source: data_root+data_manifest or "
            "synthetic_identities+synthetic_images_per_identity"
        )
    if has_manifest:
        if "data_root" not in cfg or "data_manifest" not in cfg:
            raise ConfigurationError("manifest data needs both data_root and data_manifest")
        labeled = load_image_dataset(
            cfg["data_root"], cfg["data_manifest"], cfg.get("image_size", 32)
        )
    else:
        if "synthetic_images_per_identity" not in cfg:
            raise ConfigurationError("synthetic data needs synthetic_images_per_identity")
        labeled = generate_synthetic_dataset(
            SyntheticSpec(
                num_identities=cfg["synthetic_identities"],
                images_per_identity=cfg["synthetic_images_per_identity"],
                image_size=cfg.get("image_size", 32),
                seed=cfg.get("synthetic_seed", 0),
            )
        )

    pool: Optional[UnlabeledPool] = None
    if "unlabeled_identities" in cfg:
        if not has_synthetic:
            raise ConfigurationError("the unlabeled pool is only available with synthetic data")
        pool = generate_synthetic_pool(
            SyntheticSpec(
                num_identities=cfg["unlabeled_identities"],
                images_per_identity=cfg.get("unlabeled_images_per_identity", 2),
                image_size=cfg.get("image_size", 32),
                seed=cfg.get("synthetic_seed", 0) + 1,
                identity_offset=cfg["synthetic_identities"],
            )
        )
    return labeled, pool
