#!/usr/bin/env python3
"""Why plain magnitude ranking saves little compute, and what fixes it.

The synthetic two-regime network puts small weights in cheap layers and
large weights in expensive layers.  Ranking weights by |w| alone then
concentrates removals where they cost nothing.  Dividing each weight's
magnitude by its layer's FLOPs raised to an exponent shifts removals
toward the expensive layers; this script sweeps that exponent and
watches the planned cost of the pruned structure fall.
"""

import numpy as np

from clr_rnf import flops_by_name, format_count, planned_flops, plan_structure
from clr_rnf.pruning import longtail_report
from clr_rnf.synthetic import two_regime_network


def main():
    arch, store = two_regime_network()
    flops = flops_by_name(arch)

    print("layer cost and weight magnitude per regime:")
    for layer in arch.conv_layers():
        mags = np.abs(store[layer.name])
        print(f"  {layer.name:8s} flops={flops[layer.name]:>8,d} "
              f"|w| in [{mags.min():.3f}, {mags.max():.3f}]")

    report = longtail_report(arch, store, rate=0.5, exponent=1.0, flops=flops, bins=6)
    print("\nfraction of each layer's weights per magnitude bin:")
    edges = report.bin_edges
    header = "  ".join(f"[{edges[i]:.2f},{edges[i+1]:.2f})" for i in range(len(edges) - 1))
    print(f"  {'layer':8s} {header}")
    by_layer: dict[str, list[float]] = {}
    for row in report.histogram_rows:
        by_layer.setdefault(row["layer"], []).append(row["fraction"])
    for name, fractions in by_layer.items():
        cells = "  ".join(f"{f:11.2f}" for f in fractions)
        print(f"  {name:8s} {cells}")

    print("\nzeroed fraction per layer, magnitude-only vs computation-aware:")
    for row in report.rate_rows:
        print(f"  {row['layer']:8s} magnitude-only={row['rate_magnitude_only']:.3f}  "
              f"exponent 1.0={row['rate_computation_aware']:.3f}")

    print("\nplanned cost of the pruned structure while sweeping the exponent:")
    for exponent in (0.0, 0.25, 0.5, 0.75, 1.0):
        plan = plan_structure(arch, store, 0.5, exponent, flops)
        cost = planned_flops(arch, plan)
        kept = {n: plan.preserved[n] for n in sorted(plan.preserved)}
        print(f"  exponent {exponent:4.2f}: {format_count(cost):>9s} FLOPs left, kept {kept}")


if __name__ == "__main__":
    main()
