"""Export manifests.

A manifest names every tensor the export touches: ``layer_map`` sends
checkpoint tensor names to architecture layer names, ``skip`` lists
tensors deliberately left behind (biases, norm statistics, classifier
heads), and the architecture itself comes either inline (``arch``) or by
reference (``arch_path``).  Any conv weight in the checkpoint that is
neither mapped nor skipped fails the export.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError

DTYPE_POLICIES = ("cast", "reject")


@dataclass
class ExportManifest:
    layer_map: dict[str, str]
    skip: tuple[str, ...] = ()
    dtype_policy: str = "cast"
    checkpoint: str | None = None
    arch: dict | None = None
    arch_path: str | None = None

    def __post_init__(self):
        self.skip = tuple(self.skip)
        if self.dtype_policy not in DTYPE_POLICIES:
            raise ManifestError(
                f"dtype_policy must be one of {DTYPE_POLICIES}, got {self.dtype_policy!r}"
            )
        if not self.layer_map:
            raise ManifestError("layer_map must not be empty")
        if (self.arch is None) == (self.arch_path is None):
            raise ManifestError("exactly one of arch / arch_path is required")
        targets = list(self.layer_map.values())
        if len(set(targets)) != len(targets):
            raise ManifestError("layer_map sends two tensors to the same layer")
        overlap = set(self.layer_map) & set(self.skip)
        if overlap:
            raise ManifestError(f"tensors both mapped and skipped: {sorted(overlap)}")

    def resolve_arch(self) -> dict:
        if self.arch is not None:
            return self.arch
        path = Path(self.arch_path)
        try:
            return json.loads(path.read_text())
        except OSError as exc:
            raise ManifestError(f"cannot read arch file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"arch file {path} is not valid JSON: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExportManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
        try:
            manifest = cls(
                layer_map={str(k): str(v) for k, v in doc["layer_map"].items()},
                skip=tuple(str(s) for s in doc.get("skip", [])),
                dtype_policy=str(doc.get("dtype_policy", "cast")),
                checkpoint=doc.get("checkpoint"),
                arch=doc.get("arch"),
                arch_path=doc.get("arch_path"),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ManifestError(f"malformed manifest {path}: {exc}") from exc
        # relative arch paths resolve against the manifest location
        if manifest.arch_path is not None and not Path(manifest.arch_path).is_absolute():
            manifest.arch_path = str(path.parent / manifest.arch_path)
        return manifest
