#!/usr/bin/env python3
"""Audit the bundled reference models.

Walks every architecture shipped with the package, recomputes per-layer
FLOPs and parameter counts, and compares the totals against the
published baseline figures for these models.  This is the calibration
the rest of the toolkit leans on: pruning rates are only meaningful if
the cost model agrees with what everyone else reports for the same
networks.
"""

from clr_rnf import (
    compute_layer_flops,
    compute_params,
    format_count,
    load_bundled_arch,
    total_flops,
    total_params,
)

# (bundle name, published FLOPs, published parameter count)
BASELINES = [
    ("vgg16-cifar", 314.04e6, 14.73e6),
    ("resnet56-cifar", 126.56e6, 0.85e6),
    ("resnet110-cifar", 254.99e6, 1.73e6),
    ("resnet50-imagenet", 4.11e9, 25.56e6),
    ("googlenet-cifar", 1.53e9, 6.17e6),
]


def main():
    print(f"{'model':20s} {'flops':>12s} {'published':>12s} {'diff':>8s} "
          f"{'params':>10s} {'published':>10s} {'diff':>8s}")
    for name, flops_ref, params_ref in BASELINES:
        arch = load_bundled_arch(name)
        flops = total_flops(arch)
        params = total_params(arch)
        print(
            f"{name:20s} {format_count(flops):>12s} {format_count(flops_ref):>12s} "
            f"{100 * (flops / flops_ref - 1):>+7.2f}% "
            f"{format_count(params):>10s} {format_count(params_ref):>10s} "
            f"{100 * (params / params_ref - 1):>+7.2f}%"
        )

    # where the compute actually sits: the five most expensive layers of VGG-16
    arch = load_bundled_arch("vgg16-cifar")
    flops = compute_layer_flops(arch)
    params = compute_params(arch)
    print("\nmost expensive VGG-16 layers:")
    for lid in sorted(flops, key=flops.get, reverse=True)[:5]:
        layer = arch.layer(lid)
        share = 100 * flops[lid] / total_flops(arch)
        print(f"  {layer.name:12s} {format_count(flops[lid]):>10s} FLOPs "
              f"({share:.1f}% of the model), {params[lid]:,} params")

    # residual models carry coupling groups: layers whose widths must move together
    arch = load_bundled_arch("resnet56-cifar")
    print(f"\n{arch.name} coupling groups (same kept-filter count required):")
    for group in arch.coupling_groups:
        names = sorted((arch.layer(i).name for i in group))
        print(f"  {len(names)} layers, width {arch.layer(min(group)).out_channels}: "
              f"{names[0]} ... {names[-1]}")


if __name__ == "__main__":
    main()
