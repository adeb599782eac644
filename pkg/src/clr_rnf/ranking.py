"""Cross-layer weight ranking and pruned-structure derivation.

Every individual conv weight w in layer i gets a computation-aware
importance score

    score = |w| / flops_i ** exponent            (exponent >= 0)

so that, at equal magnitude, weights sitting in expensive layers rank
lower and are removed first.  With exponent 0 the score is plain |w|.
A single global ranking across all conv layers zeroes the bottom
fraction ``rate`` of weights exactly; the per-layer zeroed fraction then
becomes that layer's pruning rate, and preserved filter counts follow by
rounding, with coupled layers (residual groups) averaged to a common
rate.

All score arithmetic runs in float64 regardless of the stored dtype.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError, FormatError, UsageError
from .graph import ArchSpec, round_half_away
from .weights import WeightStore


@dataclass(frozen=True)
class BoundLayer:
    """A conv layer together with its weight tensor from the store."""

    layer_id: int
    name: str
    weights: np.ndarray  # (n, c, kh, kw)


def bind_conv_weights(arch: ArchSpec, store: WeightStore) -> list[BoundLayer]:
    """Match conv layers to store tensors, validating dims exactly.

    Returns the layers in ascending id order; that order fixes all the
    tie-breaking below.
    """
    bound = []
    for layer in sorted(arch.conv_layers(), key=lambda l: l.id):
        if layer.name not in store:
            raise DataError(f"store has no tensor for conv layer {layer.name!r}")
        tensor = store[layer.name]
        expected = (layer.out_channels, layer.in_channels, *layer.kernel)
        if tensor.shape != expected:
            raise DataError(
                f"tensor {layer.name!r} has dims {tensor.shape}, arch expects {expected}"
            )
        bound.append(BoundLayer(layer.id, layer.name, tensor))
    return bound


@dataclass(frozen=True)
class ImportanceScores:
    """Float64 score arrays aligned 1:1 with each layer's weights."""

    layers: tuple[str, ...]  # ascending layer-id order
    scores: dict[str, np.ndarray]

    def total_count(self) -> int:
        return sum(int(self.scores[n].size) for n in self.layers)


@dataclass(frozen=True)
class SparsityMask:
    """Boolean keep/zero arrays aligned with the scored weights."""

    layers: tuple[str, ...]
    kept: dict[str, np.ndarray]

    def zeroed_count(self) -> int:
        return sum(int((~self.kept[n]).sum()) for n in self.layers)

    def kept_count(self) -> int:
        return sum(int(self.kept[n].sum()) for n in self.layers)

    def total_count(self) -> int:
        return sum(int(self.kept[n].size) for n in self.layers)


def weight_importance(
    bound: list[BoundLayer],
    flops: Mapping[str, int],
    exponent: float,
) -> ImportanceScores:
    """Computation-aware importance of every individual weight.

    ``flops`` maps layer name to that layer's FLOPs count; with
    ``exponent`` 0 the FLOPs are ignored and scores equal |w| bitwise.
    """
    if exponent < 0:
        raise UsageError(f"exponent must be >= 0, got {exponent}")
    layers = []
    scores: dict[str, np.ndarray] = {}
    for item in bound:
        mag = np.abs(item.weights, dtype=np.float64)
        if exponent != 0.0:
            if item.name not in flops:
                raise ConfigError(f"no FLOPs entry for conv layer {item.name!r}")
            cost = float(flops[item.name])
            if cost < 1:
                raise ConfigError(f"layer {item.name!r}: FLOPs must be >= 1, got {cost}")
            mag /= cost**exponent
        layers.append(item.name)
        scores[item.name] = mag
    return ImportanceScores(tuple(layers), scores)


def magnitude_importance(bound: list[BoundLayer]) -> ImportanceScores:
    """Plain |w| importance, the exponent-0 special case."""
    return weight_importance(bound, {}, 0.0)


def global_prune_mask(scores: ImportanceScores, rate: float) -> SparsityMask:
    """Zero exactly round(rate * N) globally lowest-scored weights.

    Ties at the threshold are resolved in ascending (layer id, filter,
    element) order, i.e. by flat position in the concatenated score
    vector, so the mask is deterministic.
    """
    if not 0 <= rate < 1:
        raise UsageError(f"prune rate must lie in [0, 1), got {rate}")
    sizes = [int(scores.scores[name].size) for name in scores.layers]
    total = sum(sizes)
    target = round_half_away(rate * total)
    kept: dict[str, np.ndarray] = {}
    if target == 0:
        for name in scores.layers:
            kept[name] = np.ones(scores.scores[name].shape, dtype=bool)
        return SparsityMask(tuple(scores.layers), kept)

    flat = np.concatenate([scores.scores[name].ravel() for name in scores.layers])
    # Threshold selection is O(N); ties at the threshold value are filled
    # in flat-index order up to the exact target count.
    threshold = np.partition(flat, target - 1)[target - 1]
    zero = flat < threshold
    deficit = target - int(zero.sum())
    if deficit > 0:
        tie_positions = np.flatnonzero(flat == threshold)[:deficit]
        zero[tie_positions] = True

    keep_flat = ~zero
    offset = 0
    for name, size in zip(scores.layers, sizes):
        kept[name] = keep_flat[offset : offset + size].reshape(scores.scores[name].shape)
        offset += size
    return SparsityMask(tuple(scores.layers), kept)


def per_layer_rates(mask: SparsityMask) -> dict[str, float]:
    """Fraction of each layer's weights that were zeroed."""
    rates: dict[str, float] = {}
    for name in mask.layers:
        size = int(mask.kept[name].size)
        if size == 0:
            continue
        zeroed = size - int(mask.kept[name].sum())
        rates[name] = zeroed / size
    return rates


@dataclass(frozen=True)
class StructurePlan:
    """Per-layer pruning rates and preserved filter counts."""

    global_rate: float
    flops_exponent: float
    rates: dict[str, float]  # after coupling resolution
    preserved: dict[str, int]  # preserved filter count per layer
    totals: dict[str, int]  # original filter count per layer
    groups: tuple[tuple[str, ...], ...]

    def to_dict(self) -> dict:
        return {
            "global_rate": self.global_rate,
            "flops_exponent": self.flops_exponent,
            "layers": {
                name: {
                    "rate": self.rates[name],
                    "preserved": self.preserved[name],
                    "total": self.totals[name],
                }
                for name in sorted(self.rates)
            },
            "coupling_groups": [list(g) for g in self.groups],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StructurePlan":
        try:
            layers = doc["layers"]
            return cls(
                global_rate=float(doc["global_rate"]),
                flops_exponent=float(doc["flops_exponent"]),
                rates={n: float(v["rate"]) for n, v in layers.items()},
                preserved={n: int(v["preserved"]) for n, v in layers.items()},
                totals={n: int(v["total"]) for n, v in layers.items()},
                groups=tuple(tuple(g) for g in doc.get("coupling_groups", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed structure plan: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "StructurePlan":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise FormatError(f"cannot read structure plan {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"structure plan {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def preserved_count(rate: float, filters: int) -> int:
    """round((1 - rate) * n), half away from zero, clamped to [1, n]."""
    n = round_half_away((1.0 - rate) * filters)
    return max(1, min(filters, n))


def resolve_structure(
    rates: Mapping[str, float],
    arch: ArchSpec,
    *,
    global_rate: float = 0.0,
    flops_exponent: float = 0.0,
) -> StructurePlan:
    """Turn per-layer zeroed fractions into a pruned-network structure.

    Coupled layers are forced to the arithmetic mean of their members'
    rates so their preserved counts stay equal.
    """
    conv = {l.name: l for l in arch.conv_layers()}
    resolved = {}
    for name in conv:
        if name not in rates:
            raise ConfigError(f"no pruning rate for conv layer {name!r}")
        resolved[name] = float(rates[name])

    groups = []
    for group in arch.coupling_groups:
        names = sorted((arch.layer(lid).name for lid in group), key=lambda n: conv[n].id)
        mean = sum(resolved[n] for n in names) / len(names)
        for n in names:
            resolved[n] = mean
        groups.append(tuple(names))

    preserved = {}
    totals = {}
    for name, layer in conv.items():
        totals[name] = layer.out_channels
        preserved[name] = preserved_count(resolved[name], layer.out_channels)

    for names in groups:
        counts = {preserved[n] for n in names}
        if len(counts) != 1:
            raise ConfigError(f"coupled layers {names} resolved to unequal counts {counts}")

    return StructurePlan(
        global_rate=global_rate,
        flops_exponent=flops_exponent,
        rates=resolved,
        preserved=preserved,
        totals=totals,
        groups=tuple(groups),
    )


def plan_structure(
    arch: ArchSpec,
    store: WeightStore,
    rate: float,
    exponent: float,
    flops: Mapping[str, int],
) -> StructurePlan:
    """The full ranking pipeline: scores, global mask, rates, structure."""
    bound = bind_conv_weights(arch, store)
    scores = weight_importance(bound, flops, exponent)
    mask = global_prune_mask(scores, rate)
    rates = per_layer_rates(mask)
    return resolve_structure(rates, arch, global_rate=rate, flops_exponent=exponent)
