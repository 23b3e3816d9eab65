"""Checkpointing: a directory of raw little-endian float32 arrays plus a
JSON manifest describing architecture, step counter, and array layout.

Every parameter, normalization buffer, and optimizer moment is one named
array stored in its own .bin file; the manifest maps array names to files,
shapes, and offsets. Loading rebuilds the networks from the recorded
architecture and fails loudly on any missing or mis-sized array.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, LoadError
from .networks import (
    NETWORK_NAMES,
    ModelConfig,
    ModelState,
    build_networks,
)

FORMAT_VERSION = 1

_GROUPS = (
    "trunk",
    "identity_head",
    "classifier_head",
    "attribute",
    "generator",
    "discriminator",
)


def _module_arrays(state: ModelState) -> dict[str, torch.Tensor]:
    """Canonical name -> tensor for every parameter and buffer, trunk once."""
    modules = {
        "trunk": state.trunk,
        "identity_head": state.identity_head,
        "classifier_head": state.classifier_head,
        "attribute": state.attribute,
        "generator": state.generator,
        "discriminator": state.discriminator,
    }
    arrays: dict[str, torch.Tensor] = {}
    for group in _GROUPS:
        module = modules[group]
        for name, tensor in module.named_parameters():
            arrays[f"{group}.{name}"] = tensor
        for name, tensor in module.named_buffers():
            arrays[f"{group}.{name}"] = tensor
    return arrays


def _parameter_names(state: ModelState) -> dict[int, str]:
    """id(parameter) -> canonical array name (parameters only, not buffers)."""
    names: dict[int, str] = {}
    for name, tensor in _module_arrays(state).items():
        if isinstance(tensor, torch.nn.Parameter):
            names[id(tensor)] = name
    return names


def save_checkpoint(state: ModelState, path: str | os.PathLike) -> None:
    """Write the model and optimizer state under ``path`` (a directory)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    arrays = dict(_module_arrays(state))
    param_names = _parameter_names(state)
    optimizer_steps: dict[str, float] = {}
    optimizer_settings: dict[str, dict[str, float]] = {}
    for net in NETWORK_NAMES:
        optimizer = state.optimizers[net]
        group = optimizer.param_groups[0]
        optimizer_settings[net] = {
            "lr": group["lr"],
            "beta1": group["betas"][0],
            "beta2": group["betas"][1],
        }
        for param, slot in optimizer.state.items():
            pname = param_names[id(param)]
            arrays[f"opt.{net}.{pname}.m1"] = slot["exp_avg"]
            arrays[f"opt.{net}.{pname}.m2"] = slot["exp_avg_sq"]
            optimizer_steps[f"{net}.{pname}"] = float(slot["step"])

    manifest_arrays: dict[str, dict] = {}
    for index, (name, tensor) in enumerate(arrays.items()):
        file_name = f"{index:04d}.bin"
        data = tensor.detach().cpu().contiguous().numpy().astype("<f4")
        data.tofile(path / file_name)
        manifest_arrays[name] = {
            "file": file_name,
            "shape": list(tensor.shape),
            "dtype": "float32",
            "offset": 0,
        }

    manifest = {
        "format": FORMAT_VERSION,
        "model": asdict(state.config),
        "optimizer": optimizer_settings,
        "step": state.step,
        "optimizer_steps": optimizer_steps,
        "arrays": manifest_arrays,
    }
    with open(path / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2)


def _read_array(path: Path, entry: dict, name: str) -> torch.Tensor:
    file_path = path / entry["file"]
    if not file_path.exists():
        raise LoadError(f"checkpoint array file missing for {name}: {file_path}")
    data = np.fromfile(file_path, dtype="<f4", offset=entry.get("offset", 0))
    shape = tuple(entry["shape"])
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise LoadError(
            f"array {name} has {data.size} values on disk, expected {expected}"
        )
    return torch.from_numpy(data.reshape(shape).copy())


def load_checkpoint(path: str | os.PathLike) -> ModelState:
    """Rebuild a ModelState from a checkpoint directory.

    Raises LoadError on missing manifest, unknown format, missing arrays,
    or any shape disagreement with the recorded architecture.
    """
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise LoadError(f"no manifest.json under {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise LoadError(f"unreadable manifest {manifest_path}: {err}") from None
    if manifest.get("format") != FORMAT_VERSION:
        raise LoadError(f"unsupported checkpoint format: {manifest.get('format')!r}")

    if "model" not in manifest:
        raise LoadError("manifest lacks a model section")
    try:
        config = ModelConfig(**manifest["model"])
    except (TypeError, ConfigurationError) as err:
        raise LoadError(f"invalid model config in manifest: {err}") from None

    state = build_networks(config)
    entries = manifest.get("arrays", {})

    expected = _module_arrays(state)
    for name, tensor in expected.items():
        if name not in entries:
            raise LoadError(f"checkpoint missing array {name}")
        loaded = _read_array(path, entries[name], name)
        if tuple(loaded.shape) != tuple(tensor.shape):
            raise LoadError(
                f"array {name} has shape {tuple(loaded.shape)}, "
                f"model expects {tuple(tensor.shape)}"
            )
        with torch.no_grad():
            tensor.copy_(loaded.to(tensor.dtype))

    stray = [
        name for name in entries if name not in expected and not name.startswith("opt.")
    ]
    if stray:
        raise LoadError(f"checkpoint contains unknown arrays: {stray[:5]}")

    param_names = _parameter_names(state)
    name_to_param = {name: None for name in param_names.values()}
    for net in NETWORK_NAMES:
        for param in state.parameters_of(net):
            name_to_param[param_names[id(param)]] = param

    optimizer_steps = manifest.get("optimizer_steps", {})
    for net, settings in manifest.get("optimizer", {}).items():
        if net not in state.optimizers:
            raise LoadError(f"manifest names unknown optimizer {net!r}")
        group = state.optimizers[net].param_groups[0]
        group["lr"] = settings["lr"]
        group["betas"] = (settings["beta1"], settings["beta2"])
    for net in NETWORK_NAMES:
        optimizer = state.optimizers[net]
        for param in optimizer.param_groups[0]["params"]:
            pname = param_names[id(param)]
            key = f"{net}.{pname}"
            m1_name, m2_name = f"opt.{key}.m1", f"opt.{key}.m2"
            if m1_name not in entries:
                continue
            if key not in optimizer_steps or m2_name not in entries:
                raise LoadError(f"optimizer state for {key} is incomplete")
            m1 = _read_array(path, entries[m1_name], m1_name)
            m2 = _read_array(path, entries[m2_name], m2_name)
            if m1.shape != param.shape or m2.shape != param.shape:
                raise LoadError(f"optimizer moments for {key} have wrong shape")
            optimizer.state[param] = {
                "step": torch.tensor(float(optimizer_steps[key])),
                "exp_avg": m1,
                "exp_avg_sq": m2,
            }

    state.step = int(manifest.get("step", 0))
    return state
