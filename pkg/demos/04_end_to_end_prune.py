#!/usr/bin/env python3
"""The whole pipeline on a toy residual network, step by step.

plan: rank every conv weight globally (computation-aware), read per-layer
      zeroed fractions off the mask, average them across the coupled
      residual layers, round to preserved filter counts.
select: per layer, keep the reciprocal nearest filters.
apply: slice kept filters, propagate channel removals through the
       residual addition, re-validate the graph, recount costs.
"""

from clr_rnf import (
    apply_plan,
    flops_by_name,
    identity_plan,
    plan_structure,
    reduction_report,
)
from clr_rnf.cli import plan_selections
from clr_rnf.pruning import PrunePlan
from clr_rnf.synthetic import random_store, toy_residual_network


def main():
    arch = toy_residual_network()
    store = random_store(arch, seed=3)
    print(f"{arch.name}: " + ", ".join(
        f"{l.name}({l.kind} {l.in_channels}->{l.out_channels})" for l in arch.layers
    ))
    group = arch.coupling_groups[0]
    print("coupled layers (residual addition):",
          sorted(arch.layer(i).name for i in group))

    structure = plan_structure(arch, store, rate=0.4, exponent=0.5,
                               flops=flops_by_name(arch))
    print("\nper-layer structure after coupling resolution:")
    for name in sorted(structure.rates, key=lambda n: arch.layer_named(n).id):
        print(f"  {name:12s} rate={structure.rates[name]:.3f} "
              f"keep {structure.preserved[name]}/{structure.totals[name]}")

    selections = plan_selections(arch, store, structure, selector="rnf", seed=0)
    print("\nkept filter indices:")
    for name, sel in sorted(selections.items(), key=lambda kv: arch.layer_named(kv[0]).id):
        print(f"  {name:12s} {list(sel.kept)} (k={sel.final_k}, trimmed {sel.trimmed})")

    plan = PrunePlan(structure=structure, selections=selections,
                     provenance={"p": 0.4, "lambda": 0.5, "selector": "rnf", "seed": 0})
    pruned_arch, pruned_store = apply_plan(arch, store, plan)
    print("\npruned graph: " + ", ".join(
        f"{l.name}({l.in_channels}->{l.out_channels})" for l in pruned_arch.layers
    ))

    report = reduction_report(arch, pruned_arch)
    print(f"\n{report.summary()}")
    add = pruned_arch.layer_named("block.add")
    widths = {pruned_arch.layer(e.src).out_channels
              for e in pruned_arch.producers(add.id)}
    print(f"addition operand widths after pruning: {sorted(widths)} (must agree)")

    # the identity plan really is the identity
    same_arch, same_store = apply_plan(arch, store, identity_plan(arch))
    assert same_arch.layers == arch.layers and same_store.equals(store)
    print("identity plan keeps the model bit-for-bit: ok")


if __name__ == "__main__":
    main()
