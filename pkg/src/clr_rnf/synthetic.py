"""Deterministic synthetic networks and weight stores.

Used by the diagnostics, the demos, and the test suite.  The two-regime
instance reproduces the imbalance that motivates computation-aware
ranking: late ("top") layers hold small-magnitude weights but cost
little, early ("bottom") layers hold large-magnitude weights and
dominate the FLOPs.  Under plain magnitude ranking nearly all removals
land in the cheap top layers, so the pruned structure saves little
compute; raising the FLOPs exponent shifts removals toward the bottom.
"""

from __future__ import annotations

import numpy as np

from .graph import ArchSpec, Edge, LayerSpec
from .weights import WeightStore

TWO_REGIME_SEED = 7


def random_store(arch: ArchSpec, seed: int, scale: float = 1.0) -> WeightStore:
    """Gaussian weights for every conv layer of ``arch``, deterministic per seed."""
    rng = np.random.default_rng(seed)
    entries = {}
    for layer in sorted(arch.conv_layers(), key=lambda l: l.id):
        shape = (layer.out_channels, layer.in_channels, *layer.kernel)
        entries[layer.name] = (scale * rng.standard_normal(shape)).astype(np.float32)
    return WeightStore(entries)


def two_regime_network(seed: int = TWO_REGIME_SEED) -> tuple[ArchSpec, WeightStore]:
    """A 4-conv chain with disjoint magnitude and cost regimes.

    bottom1/bottom2 run on 32x32 maps (589,824 FLOPs each) with weight
    magnitudes drawn from [0.5, 1.5); top1/top2 run on 2x2 maps (2,304
    FLOPs each) with magnitudes from [0.01, 0.06).  Every layer holds
    exactly 576 weights, so a global rate of 0.5 can wipe out precisely
    the two top layers under magnitude-only ranking.
    """
    layers = (
        LayerSpec(0, "bottom1", "conv", 8, 8, kernel=(3, 3), padding=1),
        LayerSpec(1, "bottom2", "conv", 8, 8, kernel=(3, 3), padding=1),
        LayerSpec(2, "shrink", "pool", 8, 8, kernel=(16, 16), stride=16),
        LayerSpec(3, "top1", "conv", 8, 8, kernel=(3, 3), padding=1),
        LayerSpec(4, "top2", "conv", 8, 8, kernel=(3, 3), padding=1),
    )
    edges = (Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 4))
    arch = ArchSpec(
        name="two-regime", input_shape=(8, 32, 32), layers=layers, edges=edges
    )

    rng = np.random.default_rng(seed)
    shape = (8, 8, 3, 3)
    sign = lambda size: rng.choice((-1.0, 1.0), size=size)  # noqa: E731
    entries = {
        "bottom1": (rng.uniform(0.5, 1.5, shape) * sign(shape)).astype(np.float32),
        "bottom2": (rng.uniform(0.5, 1.5, shape) * sign(shape)).astype(np.float32),
        "top1": (rng.uniform(0.01, 0.06, shape) * sign(shape)).astype(np.float32),
        "top2": (rng.uniform(0.01, 0.06, shape) * sign(shape)).astype(np.float32),
    }
    return arch, WeightStore(entries)


def toy_residual_network() -> ArchSpec:
    """One residual block: stem conv, two block convs, and the addition."""
    layers = (
        LayerSpec(0, "stem", "conv", 8, 3, kernel=(3, 3), padding=1),
        LayerSpec(1, "block.conv1", "conv", 8, 8, kernel=(3, 3), padding=1),
        LayerSpec(2, "block.conv2", "conv", 8, 8, kernel=(3, 3), padding=1),
        LayerSpec(3, "block.add", "add", 8, 8),
        LayerSpec(4, "head", "conv", 4, 8, kernel=(1, 1)),
    )
    edges = (
        Edge(0, 1),
        Edge(1, 2),
        Edge(0, 3, "residual-add"),
        Edge(2, 3, "residual-add"),
        Edge(3, 4),
    )
    return ArchSpec(name="toy-residual", input_shape=(3, 8, 8), layers=layers, edges=edges)
