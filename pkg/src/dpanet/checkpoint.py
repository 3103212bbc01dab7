"""Versioned named-array archives for checkpoints and backbone weights.

The container is a NumPy ``.npz`` (zip) file. Entry ``__header__`` holds a
UTF-8 JSON document ``{"format", "version", "iteration", "config"}`` stored
as a ``uint8`` array; model arrays live under ``model/<name>`` and SGD
momentum buffers under ``momentum/<name>``. Each array keeps its own dtype
and shape header, so a round trip is bit-exact.
"""
from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

FORMAT = "dpanet-checkpoint"
VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: dict[str, np.ndarray]
    momentum: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    config: dict = field(default_factory=dict)
    version: int = VERSION


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    header = {"format": FORMAT, "version": ckpt.version, "iteration": ckpt.iteration, "config": ckpt.config}
    arrays = {"__header__": np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)}
    arrays.update({f"model/{k}": np.asarray(v) for k, v in ckpt.model.items()})
    arrays.update({f"momentum/{k}": np.asarray(v) for k, v in ckpt.momentum.items()})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # write through a handle so numpy does not append a second .npz suffix
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no checkpoint at {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            entries = {k: data[k] for k in data.files}
    except (zipfile.BadZipFile, EOFError, OSError, ValueError, KeyError) as exc:
        raise CheckpointCorruptError(f"corrupted checkpoint {path}: {exc}") from exc
    if "__header__" not in entries:
        raise CheckpointCorruptError(f"{path} has no header entry")
    try:
        header = json.loads(entries.pop("__header__").tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"unreadable header in {path}") from exc
    if header.get("format") != FORMAT:
        raise CheckpointCorruptError(f"{path} is not a {FORMAT} archive")
    if header.get("version") != VERSION:
        raise CheckpointVersionError(
            f"{path} has format version {header.get('version')}, this build reads version {VERSION}"
        )
    model = {k[len("model/") :]: v for k, v in entries.items() if k.startswith("model/")}
    momentum = {k[len("momentum/") :]: v for k, v in entries.items() if k.startswith("momentum/")}
    return Checkpoint(model, momentum, int(header.get("iteration", 0)), header.get("config", {}), VERSION)


def checkpoint_roundtrip(ckpt: Checkpoint, path) -> Checkpoint:
    save_checkpoint(path, ckpt)
    return load_checkpoint(path)


def model_arrays(model: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}


def momentum_arrays(model: torch.nn.Module, optimizer: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    out = {}
    for name, p in model.named_parameters():
        buf = optimizer.state.get(p, {}).get("momentum_buffer")
        if buf is not None:
            out[name] = buf.detach().cpu().numpy().copy()
    return out


def make_checkpoint(model, optimizer=None, iteration: int = 0, config: dict | None = None) -> Checkpoint:
    momentum = momentum_arrays(model, optimizer) if optimizer is not None else {}
    return Checkpoint(model_arrays(model), momentum, iteration, dict(config or {}))


def restore_model(model: torch.nn.Module, ckpt: Checkpoint, strict: bool = True) -> None:
    state = {k: torch.from_numpy(np.array(v)) for k, v in ckpt.model.items()}
    missing, unexpected = model.load_state_dict(state, strict=False)
    if strict and (missing or unexpected):
        raise CheckpointError(f"parameter mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")


def restore_momentum(model, optimizer, ckpt: Checkpoint) -> None:
    for name, p in model.named_parameters():
        if name in ckpt.momentum:
            optimizer.state[p]["momentum_buffer"] = torch.from_numpy(np.array(ckpt.momentum[name]))


def save_backbone_archive(path, model) -> None:
    """Store only the encoder streams (``rgb.*`` and ``depth.*``)."""
    arrays = {k: v for k, v in model_arrays(model).items() if k.startswith(("rgb.", "depth."))}
    save_checkpoint(path, Checkpoint(arrays, config={"kind": "backbone"}))


def load_backbone_archive(model, path) -> list[str]:
    """Load encoder weights into ``model``; returns the names that were set.

    An archive may also carry a single unprefixed-stream set under
    ``backbone.*``, which then initializes both streams identically.
    """
    ckpt = load_checkpoint(path)
    own = model.state_dict()
    updates = {}
    for name, arr in ckpt.model.items():
        targets = [name]
        if name.startswith("backbone."):
            rest = name[len("backbone.") :]
            targets = [f"rgb.{rest}", f"depth.{rest}"]
        for t in targets:
            if t in own:
                if tuple(own[t].shape) != arr.shape:
                    raise CheckpointError(f"shape mismatch for {t}: {tuple(own[t].shape)} vs {arr.shape}")
                updates[t] = torch.from_numpy(np.array(arr))
    model.load_state_dict(updates, strict=False)
    return sorted(updates)


_TV_PREFIX = {"conv1.": "stem.0.", "bn1.": "stem.1."}


def torchvision_resnet50_arrays(state_dict: dict) -> dict[str, np.ndarray]:
    """Rename a torchvision ResNet-50 state dict into ``backbone.*`` archive entries."""
    out = {}
    for k, v in state_dict.items():
        if k.startswith("fc."):
            continue
        for old, new in _TV_PREFIX.items():
            if k.startswith(old):
                k = new + k[len(old) :]
                break
        out[f"backbone.{k}"] = v.detach().cpu().numpy() if isinstance(v, torch.Tensor) else np.asarray(v)
    return out
