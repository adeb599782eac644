"""Applying a prune plan to an architecture and its weights.

Kept-filter index sets propagate through the graph: channel-preserving
layers (batchnorm, pool, activation) forward their producer's set, an
addition forwards the set of its lowest-id producer (operands are paired
positionally, so only the sizes must agree), and a concatenation splices
its producers' sets together using the original channel offsets.  Conv
and fully-connected consumers slice their input-channel dimension by the
incoming set; pruned convs additionally keep only the selected filter
rows.  Auxiliary store entries follow along: ``<conv>.bias`` vectors are
sliced like their conv's rows and batchnorm entries are sliced on the
channel axis.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError, StructureError
from .graph import (
    ADD,
    BATCHNORM,
    CHANNEL_PRESERVING,
    CONCAT_LAYER,
    CONV,
    FULLY_CONNECTED,
    ArchSpec,
    CountingRules,
    LayerSpec,
    compute_layer_flops,
    compute_params,
    total_flops,
    total_params,
)
from .ranking import StructurePlan, bind_conv_weights, per_layer_rates, weight_importance, global_prune_mask
from .selection import SelectionResult
from .weights import WeightStore

TOOL_VERSION = "0.1.0"


@dataclass(frozen=True)
class PrunePlan:
    """A structure plan plus the concrete kept-filter choices."""

    structure: StructurePlan
    selections: dict[str, SelectionResult]
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "structure": self.structure.to_dict(),
            "selections": {n: s.to_dict() for n, s in sorted(self.selections.items())},
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PrunePlan":
        try:
            return cls(
                structure=StructurePlan.from_dict(doc["structure"]),
                selections={
                    n: SelectionResult.from_dict(s) for n, s in doc["selections"].items()
                },
                provenance=dict(doc.get("provenance", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed prune plan: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PrunePlan":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise FormatError(f"cannot read prune plan {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"prune plan {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def identity_plan(arch: ArchSpec) -> PrunePlan:
    """A plan that keeps every filter of every conv layer."""
    rates = {l.name: 0.0 for l in arch.conv_layers()}
    structure = StructurePlan(
        global_rate=0.0,
        flops_exponent=0.0,
        rates=rates,
        preserved={l.name: l.out_channels for l in arch.conv_layers()},
        totals={l.name: l.out_channels for l in arch.conv_layers()},
        groups=tuple(
            tuple(sorted((arch.layer(i).name for i in g), key=lambda n: arch.layer_named(n).id))
            for g in arch.coupling_groups
        ),
    )
    selections = {
        l.name: SelectionResult(kept=tuple(range(l.out_channels)), selector="identity")
        for l in arch.conv_layers()
    }
    return PrunePlan(structure=structure, selections=selections, provenance={"p": 0.0})


def _validate_plan(arch: ArchSpec, plan: PrunePlan) -> None:
    for layer in arch.conv_layers():
        sel = plan.selections.get(layer.name)
        if sel is None:
            raise StructureError(f"plan has no selection for conv layer {layer.name!r}")
        kept = sel.kept
        if len(kept) == 0 or len(set(kept)) != len(kept) or list(kept) != sorted(kept):
            raise StructureError(
                f"layer {layer.name!r}: kept indices must be a nonempty strictly "
                f"increasing sequence"
            )
        if kept[0] < 0 or kept[-1] >= layer.out_channels:
            raise StructureError(
                f"layer {layer.name!r}: kept indices {kept} out of range "
                f"[0, {layer.out_channels})"
            )
        expected = plan.structure.preserved.get(layer.name)
        if expected is not None and len(kept) != expected:
            raise StructureError(
                f"layer {layer.name!r}: selection keeps {len(kept)} filters, "
                f"structure plan says {expected}"
            )
    for group in arch.coupling_groups:
        sizes = {len(plan.selections[arch.layer(lid).name].kept) for lid in group}
        if len(sizes) != 1:
            names = sorted(arch.layer(lid).name for lid in group)
            raise StructureError(
                f"coupled layers {names} keep unequal filter counts {sorted(sizes)}"
            )


def _propagate(
    arch: ArchSpec, kept_rows: Mapping[str, np.ndarray]
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Per layer: the input-channel index set it consumes and the set it emits.

    Index sets refer to the original channel numbering of each producer;
    a concat emits indices into its own original output space.
    """
    emitted: dict[int, np.ndarray] = {}
    consumed: dict[int, np.ndarray] = {}
    for lid in arch.topo_order():
        layer = arch.layer(lid)
        edges = arch.producers(lid)
        if not edges:
            incoming = np.arange(layer.in_channels)
        elif layer.kind == ADD:
            ops = [emitted[e.src] for e in edges]
            sizes = {op.size for op in ops}
            if len(sizes) != 1:
                raise StructureError(
                    f"layer {layer.name!r}: addition operands keep unequal channel "
                    f"counts {sorted(sizes)}"
                )
            # operands pair positionally; the lowest-id producer names the set
            lead = min(edges, key=lambda e: e.src)
            incoming = emitted[lead.src]
        elif layer.kind == CONCAT_LAYER:
            parts = []
            offset = 0
            for e in edges:
                parts.append(emitted[e.src] + offset)
                offset += arch.layer(e.src).out_channels
            incoming = np.concatenate(parts)
        else:
            incoming = emitted[edges[0].src]
        consumed[lid] = incoming

        if layer.kind == CONV:
            emitted[lid] = kept_rows[layer.name]
        elif layer.kind == CONCAT_LAYER or layer.kind == ADD or layer.kind in CHANNEL_PRESERVING:
            emitted[lid] = incoming
        else:  # fully-connected: terminal, nothing downstream consumes channels
            emitted[lid] = np.arange(layer.out_channels)
    return consumed, emitted


def _rebuild_arch(arch: ArchSpec, consumed, emitted) -> ArchSpec:
    new_layers = []
    for layer in arch.layers:
        out_ch = int(emitted[layer.id].size) if layer.kind != FULLY_CONNECTED else layer.out_channels
        in_ch = int(consumed[layer.id].size)
        new_layers.append(
            LayerSpec(
                id=layer.id,
                name=layer.name,
                kind=layer.kind,
                out_channels=out_ch,
                in_channels=in_ch,
                kernel=layer.kernel,
                stride=layer.stride,
                padding=layer.padding,
                bias=layer.bias,
            )
        )
    return ArchSpec(
        name=arch.name,
        input_shape=arch.input_shape,
        layers=tuple(new_layers),
        edges=arch.edges,
    )


def apply_plan(
    arch: ArchSpec, store: WeightStore, plan: PrunePlan
) -> tuple[ArchSpec, WeightStore]:
    """Slice kept filters out of every tensor and rebuild a valid graph."""
    bind_conv_weights(arch, store)  # dim validation up front
    _validate_plan(arch, plan)
    kept_rows = {
        name: np.asarray(sel.kept, dtype=np.int64) for name, sel in plan.selections.items()
    }
    consumed, emitted = _propagate(arch, kept_rows)

    new_entries: dict[str, np.ndarray] = {}
    handled: set[str] = set()
    for layer in arch.layers:
        if layer.kind == CONV:
            tensor = store[layer.name]
            rows = kept_rows[layer.name]
            cols = consumed[layer.id]
            new_entries[layer.name] = tensor[rows][:, cols]
            handled.add(layer.name)
            bias_name = f"{layer.name}.bias"
            if bias_name in store:
                new_entries[bias_name] = store[bias_name][rows]
                handled.add(bias_name)
        elif layer.kind == BATCHNORM and layer.name in store:
            tensor = store[layer.name]
            channels = consumed[layer.id]
            if tensor.shape[-1] != layer.out_channels:
                raise StructureError(
                    f"batchnorm tensor {layer.name!r} has channel dim "
                    f"{tensor.shape[-1]}, arch expects {layer.out_channels}"
                )
            new_entries[layer.name] = tensor[..., channels]
            handled.add(layer.name)
        elif layer.kind == FULLY_CONNECTED and layer.name in store:
            tensor = store[layer.name]
            new_entries[layer.name] = tensor[:, consumed[layer.id]]
            handled.add(layer.name)
            bias_name = f"{layer.name}.bias"
            if bias_name in store:
                new_entries[bias_name] = store[bias_name]
                handled.add(bias_name)
    for name, tensor in store.items():
        if name not in handled:
            new_entries[name] = tensor

    new_arch = _rebuild_arch(arch, consumed, emitted)
    new_store = WeightStore(new_entries)
    bind_conv_weights(new_arch, new_store)
    return new_arch, new_store


def arch_with_structure(arch: ArchSpec, structure: StructurePlan) -> ArchSpec:
    """The pruned architecture implied by preserved counts alone.

    Which filters are kept does not change FLOPs or parameter totals, so
    the lowest-index filters stand in for any concrete selection.
    """
    kept_rows = {}
    for layer in arch.conv_layers():
        n = structure.preserved.get(layer.name)
        if n is None:
            raise StructureError(f"structure plan misses conv layer {layer.name!r}")
        kept_rows[layer.name] = np.arange(n)
    consumed, emitted = _propagate(arch, kept_rows)
    return _rebuild_arch(arch, consumed, emitted)


def planned_flops(arch: ArchSpec, structure: StructurePlan) -> int:
    return total_flops(arch_with_structure(arch, structure))


def planned_params(arch: ArchSpec, structure: StructurePlan, rules: CountingRules = CountingRules()) -> int:
    return total_params(arch_with_structure(arch, structure), rules)


# -- reduction report -----------------------------------------------------


def format_count(value: float) -> str:
    """Human-readable count in the table style used throughout: 1.53B, 81.31M."""
    if value >= 1e9:
        return f"{value / 1e9:.2f}B"
    if value >= 1e6:
        return f"{value / 1e6:.2f}M"
    if value >= 1e3:
        return f"{value / 1e3:.2f}K"
    return str(int(value))


def format_reduction(before: float, after: float) -> str:
    """E.g. ``81.31M (74.1%)``: the new cost and the reduction percentage."""
    pr = 0.0 if before == 0 else (1.0 - after / before) * 100.0
    return f"{format_count(after)} ({pr:.1f}%)"


@dataclass(frozen=True)
class ReductionReport:
    rows: tuple[dict, ...]  # per layer, in id order
    flops_before: int
    flops_after: int
    params_before: int
    params_after: int

    @property
    def flops_reduction(self) -> float:
        return 0.0 if not self.flops_before else (1 - self.flops_after / self.flops_before) * 100

    @property
    def params_reduction(self) -> float:
        return 0.0 if not self.params_before else (1 - self.params_after / self.params_before) * 100

    def summary(self) -> str:
        return (
            f"FLOPs {format_reduction(self.flops_before, self.flops_after)}  "
            f"parameters {format_reduction(self.params_before, self.params_after)}"
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["layer", "kind", "flops_before", "flops_after", "flops_pr_pct",
             "params_before", "params_after", "params_pr_pct"]
        )
        for row in self.rows:
            writer.writerow(
                [row["layer"], row["kind"], row["flops_before"], row["flops_after"],
                 f"{row['flops_pr_pct']:.4f}", row["params_before"], row["params_after"],
                 f"{row['params_pr_pct']:.4f}"]
            )
        writer.writerow(
            ["TOTAL", "", self.flops_before, self.flops_after,
             f"{self.flops_reduction:.4f}", self.params_before, self.params_after,
             f"{self.params_reduction:.4f}"]
        )
        return buf.getvalue()


def reduction_report(
    before: ArchSpec, after: ArchSpec, rules: CountingRules = CountingRules()
) -> ReductionReport:
    """Per-layer and total FLOPs/parameter reductions between two graphs."""
    fb, fa = compute_layer_flops(before), compute_layer_flops(after)
    pb, pa = compute_params(before, rules), compute_params(after, rules)
    rows = []
    for layer in before.layers:
        if not after.has_layer(layer.name):
            raise StructureError(f"pruned arch lost layer {layer.name!r}")
        aid = after.layer_named(layer.name).id
        rows.append(
            {
                "layer": layer.name,
                "kind": layer.kind,
                "flops_before": fb[layer.id],
                "flops_after": fa[aid],
                "flops_pr_pct": 0.0 if not fb[layer.id] else (1 - fa[aid] / fb[layer.id]) * 100,
                "params_before": pb[layer.id],
                "params_after": pa[aid],
                "params_pr_pct": 0.0 if not pb[layer.id] else (1 - pa[aid] / pb[layer.id]) * 100,
            }
        )
    return ReductionReport(
        rows=tuple(rows),
        flops_before=sum(fb.values()),
        flops_after=sum(fa.values()),
        params_before=sum(pb.values()),
        params_after=sum(pa.values()),
    )


# -- magnitude distribution diagnostics ------------------------------------


@dataclass(frozen=True)
class LongTailReport:
    """Per-layer |w| histograms plus zeroed fractions at two exponents."""

    bin_edges: tuple[float, ...]
    histogram_rows: tuple[dict, ...]  # layer, bin_lo, bin_hi, fraction
    rate_rows: tuple[dict, ...]  # layer, weights, rate at exponent 0 / configured
    exponent: float

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "bin_lo", "bin_hi", "fraction"])
        for row in self.histogram_rows:
            writer.writerow(
                [row["layer"], f"{row['bin_lo']:.9g}", f"{row['bin_hi']:.9g}",
                 f"{row['fraction']:.9g}"]
            )
        return buf.getvalue()

    def rates_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "weights", "rate_magnitude_only", "rate_computation_aware"])
        for row in self.rate_rows:
            writer.writerow(
                [row["layer"], row["weights"], f"{row['rate_magnitude_only']:.9g}",
                 f"{row['rate_computation_aware']:.9g}"]
            )
        return buf.getvalue()


def longtail_report(
    arch: ArchSpec,
    store: WeightStore,
    *,
    rate: float,
    exponent: float,
    flops: Mapping[str, int],
    bins: int | list[float] = 10,
) -> LongTailReport:
    """Where weight magnitudes live per layer, and what that does to rates.

    Shows, for every conv layer, the fraction of |w| in each magnitude
    bin (shared bin edges across layers) and the layer's zeroed fraction
    under plain magnitude ranking versus the computation-aware ranking at
    ``exponent``.
    """
    bound = bind_conv_weights(arch, store)
    if not bound:
        raise StructureError(f"arch {arch.name!r} has no conv layers to report on")
    all_mags = np.concatenate([np.abs(b.weights, dtype=np.float64).ravel() for b in bound])
    if isinstance(bins, int):
        hi = float(all_mags.max())
        edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    else:
        edges = np.asarray(sorted(float(b) for b in bins))

    histogram_rows = []
    for b in bound:
        mags = np.abs(b.weights, dtype=np.float64).ravel()
        counts, _ = np.histogram(mags, bins=edges)
        for i in range(len(edges) - 1):
            histogram_rows.append(
                {
                    "layer": b.name,
                    "bin_lo": float(edges[i]),
                    "bin_hi": float(edges[i + 1]),
                    "fraction": counts[i] / mags.size,
                }
            )

    plain = per_layer_rates(global_prune_mask(weight_importance(bound, flops, 0.0), rate))
    aware = per_layer_rates(global_prune_mask(weight_importance(bound, flops, exponent), rate))
    rate_rows = [
        {
            "layer": b.name,
            "weights": int(b.weights.size),
            "rate_magnitude_only": plain[b.name],
            "rate_computation_aware": aware[b.name],
        }
        for b in bound
    ]
    return LongTailReport(
        bin_edges=tuple(float(e) for e in edges),
        histogram_rows=tuple(histogram_rows),
        rate_rows=tuple(rate_rows),
        exponent=exponent,
    )
