"""Checkpoint-to-CLRW export.

Reads a PyTorch checkpoint (a state dict, or an object with one under a
``state_dict`` key), maps tensors to architecture layer names through
the manifest, validates shapes against the architecture document, and
writes ``weights.clrw`` plus the normalized ``arch.json`` into the
output directory.  Two exports of the same checkpoint produce identical
files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .clrw_writer import write_clrw
from .errors import CheckpointError, ManifestError
from .manifest import ExportManifest


def _load_state_dict(path: Path) -> dict[str, torch.Tensor]:
    try:
        obj = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    if isinstance(obj, dict) and "state_dict" in obj and isinstance(obj["state_dict"], dict):
        obj = obj["state_dict"]
    if not isinstance(obj, dict) or not obj:
        raise CheckpointError(f"checkpoint {path} holds no state dict")
    state = {}
    for name, value in obj.items():
        if isinstance(value, torch.Tensor):
            state[str(name)] = value
    if not state:
        raise CheckpointError(f"checkpoint {path} holds no tensors")
    return state


def _arch_conv_dims(arch_doc: dict) -> dict[str, tuple[int, ...]]:
    dims = {}
    try:
        for entry in arch_doc["layers"]:
            if entry.get("kind") == "conv":
                kernel = entry.get("kernel", (1, 1))
                dims[str(entry["name"])] = (
                    int(entry["out_channels"]),
                    int(entry["in_channels"]),
                    int(kernel[0]),
                    int(kernel[1]),
                )
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ManifestError(f"architecture document is malformed: {exc}") from exc
    if not dims:
        raise ManifestError("architecture document declares no conv layers")
    return dims


def _to_float32(name: str, tensor: torch.Tensor, policy: str) -> np.ndarray:
    if not tensor.dtype.is_floating_point:
        raise CheckpointError(f"tensor {name!r} has non-float dtype {tensor.dtype}")
    if tensor.dtype != torch.float32 and policy == "reject":
        raise CheckpointError(
            f"tensor {name!r} has dtype {tensor.dtype} and the manifest rejects casts"
        )
    arr = tensor.detach().to(torch.float32).cpu().numpy()
    if not np.isfinite(arr).all():
        raise CheckpointError(f"tensor {name!r} contains non-finite values")
    return arr


def export_checkpoint(
    checkpoint: str | Path, manifest: ExportManifest, out_dir: str | Path
) -> tuple[Path, Path]:
    """Write ``weights.clrw`` and ``arch.json``; returns both paths."""
    state = _load_state_dict(Path(checkpoint))
    arch_doc = manifest.resolve_arch()
    conv_dims = _arch_conv_dims(arch_doc)

    missing = sorted(set(manifest.layer_map) - set(state))
    if missing:
        raise ManifestError(f"mapped tensors missing from checkpoint: {missing}")

    accounted = set(manifest.layer_map) | set(manifest.skip)
    unmapped = sorted(
        name
        for name, tensor in state.items()
        if tensor.ndim == 4 and name not in accounted
    )
    if unmapped:
        raise ManifestError(
            f"conv weights neither mapped nor skipped: {unmapped}"
        )

    entries: dict[str, np.ndarray] = {}
    for src, dst in sorted(manifest.layer_map.items()):
        arr = _to_float32(src, state[src], manifest.dtype_policy)
        if dst in conv_dims and tuple(arr.shape) != conv_dims[dst]:
            raise ManifestError(
                f"tensor {src!r} has shape {tuple(arr.shape)} but layer {dst!r} "
                f"expects {conv_dims[dst]}"
            )
        entries[dst] = arr

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clrw_path = out_dir / "weights.clrw"
    arch_path = out_dir / "arch.json"
    write_clrw(entries, clrw_path)
    arch_path.write_text(json.dumps(arch_doc, indent=2, sort_keys=True) + "\n")
    return clrw_path, arch_path
