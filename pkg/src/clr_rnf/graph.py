"""Typed CNN architecture graphs with shape inference and cost accounting.

An :class:`ArchSpec` is a DAG of :class:`LayerSpec` nodes joined by typed
edges (``sequential``, ``residual-add``, ``concat``).  Validation checks
channel bookkeeping, propagates spatial shapes, and derives the coupling
groups: sets of conv layers whose output widths must stay equal because a
chain of residual additions consumes them.

Cost conventions:

* conv FLOPs  = out_ch * in_ch * kh * kw * H_out * W_out  (1 MAC = 1 FLOP)
* fc FLOPs    = out_ch * in_ch
* everything else (pool, activation, add, concat, batchnorm) costs 0 FLOPs
* params count conv/fc weights, optional biases, and batchnorm affine
  vectors; batchnorm running statistics are included only on request.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, StructureError

SEQUENTIAL = "sequential"
RESIDUAL_ADD = "residual-add"
CONCAT = "concat"
EDGE_KINDS = (SEQUENTIAL, RESIDUAL_ADD, CONCAT)

CONV = "conv"
FULLY_CONNECTED = "fully-connected"
BATCHNORM = "batchnorm"
POOL = "pool"
ADD = "add"
CONCAT_LAYER = "concat"
ACTIVATION = "activation"
LAYER_KINDS = (CONV, FULLY_CONNECTED, BATCHNORM, POOL, ADD, CONCAT_LAYER, ACTIVATION)

# Layer kinds that neither create nor mix channels: kept-filter index sets
# pass straight through them during plan application.
CHANNEL_PRESERVING = (BATCHNORM, POOL, ACTIVATION)


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


@dataclass(frozen=True)
class LayerSpec:
    """One node of the architecture graph.

    ``kernel``, ``stride`` and ``padding`` matter for conv and pool layers
    only; ``bias`` marks whether the layer carries an additive bias term.
    """

    id: int
    name: str
    kind: str
    out_channels: int
    in_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int = 0
    bias: bool = False

    def validate(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise StructureError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.out_channels < 1 or self.in_channels < 1:
            raise StructureError(f"layer {self.name!r}: channel counts must be >= 1")
        if self.kernel[0] < 1 or self.kernel[1] < 1:
            raise StructureError(f"layer {self.name!r}: kernel dims must be >= 1")
        if self.stride < 1 or self.padding < 0:
            raise StructureError(f"layer {self.name!r}: bad stride/padding")
        if self.kind in (BATCHNORM, POOL, ACTIVATION, ADD) and self.out_channels != self.in_channels:
            raise StructureError(
                f"layer {self.name!r}: kind {self.kind!r} must preserve channel count"
            )


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str = SEQUENTIAL


@dataclass
class ArchSpec:
    """A validated architecture graph.

    Derived attributes (spatial map, topological order, coupling groups)
    are computed once at construction; instances are treated as immutable
    afterwards.
    """

    name: str
    input_shape: tuple[int, int, int]  # (channels, height, width)
    layers: tuple[LayerSpec, ...]
    edges: tuple[Edge, ...]
    coupling_groups: tuple[frozenset[int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.edges = tuple(self.edges)
        self._by_id = {}
        self._by_name = {}
        for layer in self.layers:
            layer.validate()
            if layer.id in self._by_id:
                raise StructureError(f"duplicate layer id {layer.id}")
            if layer.name in self._by_name:
                raise StructureError(f"duplicate layer name {layer.name!r}")
            self._by_id[layer.id] = layer
            self._by_name[layer.name] = layer
        if not self.layers:
            raise StructureError(f"arch {self.name!r} has no layers")
        self._producers = {l.id: [] for l in self.layers}
        self._consumers = {l.id: [] for l in self.layers}
        for e in self.edges:
            if e.kind not in EDGE_KINDS:
                raise StructureError(f"edge {e.src}->{e.dst}: unknown kind {e.kind!r}")
            if e.src not in self._by_id or e.dst not in self._by_id:
                raise StructureError(f"edge {e.src}->{e.dst} references a missing layer")
            self._producers[e.dst].append(e)
            self._consumers[e.src].append(e)
        self._topo = self._toposort()
        self._check_channels()
        self.spatial = self._infer_spatial()
        derived = _derive_coupling_groups(self)
        if self.coupling_groups:
            given = {frozenset(g) for g in self.coupling_groups}
            if given != set(derived):
                raise StructureError(
                    f"arch {self.name!r}: declared coupling groups disagree with "
                    f"the residual-add structure"
                )
        self.coupling_groups = tuple(derived)

    # -- lookups ---------------------------------------------------------

    def layer(self, layer_id: int) -> LayerSpec:
        return self._by_id[layer_id]

    def layer_named(self, name: str) -> LayerSpec:
        if name not in self._by_name:
            raise StructureError(f"arch {self.name!r} has no layer named {name!r}")
        return self._by_name[name]

    def has_layer(self, name: str) -> bool:
        return name in self._by_name

    def producers(self, layer_id: int) -> list[Edge]:
        return list(self._producers[layer_id])

    def consumers(self, layer_id: int) -> list[Edge]:
        return list(self._consumers[layer_id])

    def topo_order(self) -> list[int]:
        return list(self._topo)

    def conv_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.kind == CONV]

    def roots(self) -> list[LayerSpec]:
        return [l for l in self.layers if not self._producers[l.id]]

    # -- validation ------------------------------------------------------

    def _toposort(self) -> list[int]:
        indeg = {l.id: len(self._producers[l.id]) for l in self.layers}
        ready = sorted(i for i, d in indeg.items() if d == 0)
        if not ready:
            raise StructureError(f"arch {self.name!r}: no input layer (graph has a cycle)")
        order = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            for e in self._consumers[node]:
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    # insertion keeps the order deterministic
                    ready.append(e.dst)
                    ready.sort()
        if len(order) != len(self.layers):
            raise StructureError(f"arch {self.name!r}: graph is not a DAG")
        return order

    def _input_channels_of(self, layer: LayerSpec) -> int:
        edges = self._producers[layer.id]
        if not edges:
            return self.input_shape[0]
        kinds = {e.kind for e in edges}
        if layer.kind == ADD:
            if kinds != {RESIDUAL_ADD} or len(edges) < 2:
                raise StructureError(
                    f"layer {layer.name!r}: add layers need >= 2 residual-add producers"
                )
            widths = {self._by_id[e.src].out_channels for e in edges}
            if len(widths) != 1:
                raise StructureError(
                    f"layer {layer.name!r}: residual-add operands disagree on "
                    f"channel count ({sorted(widths)})"
                )
            return widths.pop()
        if layer.kind == CONCAT_LAYER:
            if kinds != {CONCAT} or len(edges) < 2:
                raise StructureError(
                    f"layer {layer.name!r}: concat layers need >= 2 concat producers"
                )
            return sum(self._by_id[e.src].out_channels for e in edges)
        if len(edges) != 1 or kinds != {SEQUENTIAL}:
            raise StructureError(
                f"layer {layer.name!r}: expected exactly one sequential producer"
            )
        return self._by_id[edges[0].src].out_channels

    def _check_channels(self) -> None:
        for lid in self._topo:
            layer = self._by_id[lid]
            expected = self._input_channels_of(layer)
            if layer.in_channels != expected:
                raise StructureError(
                    f"layer {layer.name!r}: in_channels={layer.in_channels} but "
                    f"producers supply {expected}"
                )

    def _infer_spatial(self) -> dict[int, tuple[int, int]]:
        spatial: dict[int, tuple[int, int]] = {}
        for lid in self._topo:
            layer = self._by_id[lid]
            edges = self._producers[lid]
            if not edges:
                inp = (self.input_shape[1], self.input_shape[2])
            else:
                shapes = {spatial[e.src] for e in edges}
                if len(shapes) != 1:
                    raise StructureError(
                        f"layer {layer.name!r}: producers disagree on spatial shape "
                        f"({sorted(shapes)})"
                    )
                inp = shapes.pop()
            if layer.kind in (CONV, POOL):
                kh, kw = layer.kernel
                h = (inp[0] + 2 * layer.padding - kh) // layer.stride + 1
                w = (inp[1] + 2 * layer.padding - kw) // layer.stride + 1
                if h < 1 or w < 1:
                    raise StructureError(
                        f"layer {layer.name!r}: output spatial shape collapses to "
                        f"{(h, w)} from input {inp}"
                    )
                spatial[lid] = (h, w)
            elif layer.kind == FULLY_CONNECTED:
                if inp != (1, 1):
                    raise StructureError(
                        f"layer {layer.name!r}: fully-connected input must be 1x1 "
                        f"spatially, got {inp}"
                    )
                spatial[lid] = (1, 1)
            else:
                spatial[lid] = inp
        return spatial


# -- coupling groups -----------------------------------------------------


def _conv_termini(arch: ArchSpec, layer_id: int, memo: dict[int, frozenset[int]]) -> frozenset[int]:
    """Conv layers whose output reaches ``layer_id`` through channel-preserving
    layers or earlier residual additions."""
    if layer_id in memo:
        return memo[layer_id]
    layer = arch.layer(layer_id)
    if layer.kind == CONV:
        result = frozenset((layer_id,))
    elif layer.kind == ADD:
        acc: set[int] = set()
        for e in arch.producers(layer_id):
            acc |= _conv_termini(arch, e.src, memo)
        result = frozenset(acc)
    elif layer.kind in CHANNEL_PRESERVING:
        edges = arch.producers(layer_id)
        result = _conv_termini(arch, edges[0].src, memo) if edges else frozenset()
    else:
        # fc/concat outputs are never operands of a residual addition here
        result = frozenset()
    memo[layer_id] = result
    return result


def _derive_coupling_groups(arch: ArchSpec) -> list[frozenset[int]]:
    memo: dict[int, frozenset[int]] = {}
    parent: dict[int, int] = {}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for layer in arch.layers:
        if layer.kind != ADD:
            continue
        termini: set[int] = set()
        for e in arch.producers(layer.id):
            termini |= _conv_termini(arch, e.src, memo)
        if not termini:
            raise StructureError(
                f"layer {layer.name!r}: residual addition has no conv ancestry"
            )
        termini = sorted(termini)
        for t in termini:
            parent.setdefault(t, t)
        for t in termini[1:]:
            union(termini[0], t)

    groups: dict[int, set[int]] = {}
    for node in parent:
        groups.setdefault(find(node), set()).add(node)
    result = [frozenset(g) for g in groups.values() if len(g) >= 2]
    result.sort(key=lambda g: min(g))
    return result


def coupling_groups(arch: ArchSpec) -> list[frozenset[int]]:
    """Maximal sets of conv layers feeding a common residual-add chain.

    Shortcut-free networks yield an empty list.
    """
    return list(arch.coupling_groups)


# -- cost accounting -----------------------------------------------------


@dataclass(frozen=True)
class CountingRules:
    """Calibration switches for parameter counting.

    ``count_bias`` includes additive bias vectors of layers that declare
    one; ``count_bn_running`` additionally includes batchnorm running
    statistics (off by default, matching published model sizes).
    """

    count_bias: bool = True
    count_bn_running: bool = False


def compute_layer_flops(arch: ArchSpec) -> dict[int, int]:
    """Per-layer FLOPs, one multiply-accumulate counted as one FLOP."""
    flops: dict[int, int] = {}
    for layer in arch.layers:
        if layer.kind == CONV:
            h, w = arch.spatial[layer.id]
            kh, kw = layer.kernel
            flops[layer.id] = layer.out_channels * layer.in_channels * kh * kw * h * w
        elif layer.kind == FULLY_CONNECTED:
            flops[layer.id] = layer.out_channels * layer.in_channels
        else:
            flops[layer.id] = 0
    return flops


def compute_params(arch: ArchSpec, rules: CountingRules = CountingRules()) -> dict[int, int]:
    """Per-layer learnable parameter counts under the given rules."""
    params: dict[int, int] = {}
    for layer in arch.layers:
        if layer.kind == CONV:
            kh, kw = layer.kernel
            n = layer.out_channels * layer.in_channels * kh * kw
            if layer.bias and rules.count_bias:
                n += layer.out_channels
        elif layer.kind == FULLY_CONNECTED:
            n = layer.out_channels * layer.in_channels
            if layer.bias and rules.count_bias:
                n += layer.out_channels
        elif layer.kind == BATCHNORM:
            n = 2 * layer.out_channels
            if rules.count_bn_running:
                n += 2 * layer.out_channels
        else:
            n = 0
        params[layer.id] = n
    return params


def total_flops(arch: ArchSpec) -> int:
    return sum(compute_layer_flops(arch).values())


def total_params(arch: ArchSpec, rules: CountingRules = CountingRules()) -> int:
    return sum(compute_params(arch, rules).values())


def flops_by_name(arch: ArchSpec) -> dict[str, int]:
    per_id = compute_layer_flops(arch)
    return {arch.layer(lid).name: f for lid, f in per_id.items()}


# -- JSON interchange ----------------------------------------------------


def arch_to_dict(arch: ArchSpec) -> dict:
    return {
        "name": arch.name,
        "input_shape": list(arch.input_shape),
        "layers": [
            {
                "id": l.id,
                "name": l.name,
                "kind": l.kind,
                "out_channels": l.out_channels,
                "in_channels": l.in_channels,
                "kernel": list(l.kernel),
                "stride": l.stride,
                "padding": l.padding,
                "bias": l.bias,
            }
            for l in arch.layers
        ],
        "edges": [[e.src, e.dst, e.kind] for e in arch.edges],
    }


def arch_from_dict(doc: dict) -> ArchSpec:
    try:
        layers = tuple(
            LayerSpec(
                id=int(entry["id"]),
                name=str(entry["name"]),
                kind=str(entry["kind"]),
                out_channels=int(entry["out_channels"]),
                in_channels=int(entry["in_channels"]),
                kernel=tuple(int(k) for k in entry.get("kernel", (1, 1))),  # type: ignore[arg-type]
                stride=int(entry.get("stride", 1)),
                padding=int(entry.get("padding", 0)),
                bias=bool(entry.get("bias", False)),
            )
            for entry in doc["layers"]
        )
        edges = tuple(
            Edge(int(e[0]), int(e[1]), str(e[2]) if len(e) > 2 else SEQUENTIAL)
            for e in doc.get("edges", [])
        )
        name = str(doc["name"])
        input_shape = tuple(int(x) for x in doc["input_shape"])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed architecture document: {exc}") from exc
    if len(input_shape) != 3:
        raise FormatError("input_shape must be [channels, height, width]")
    return ArchSpec(name=name, input_shape=input_shape, layers=layers, edges=edges)  # type: ignore[arg-type]


def load_arch(path: str | Path) -> ArchSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read architecture file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"architecture file {path} is not valid JSON: {exc}") from exc
    return arch_from_dict(doc)


def save_arch(arch: ArchSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(arch_to_dict(arch), indent=2, sort_keys=True) + "\n")


def bundled_arch_path(name: str) -> Path:
    """Path of a bundled architecture file by short name (e.g. ``vgg16-cifar``)."""
    path = Path(__file__).parent / "archs" / f"{name}.json"
    if not path.exists():
        available = sorted(p.stem for p in (Path(__file__).parent / "archs").glob("*.json"))
        raise FormatError(f"no bundled architecture {name!r}; available: {available}")
    return path


def load_bundled_arch(name: str) -> ArchSpec:
    return load_arch(bundled_arch_path(name))
