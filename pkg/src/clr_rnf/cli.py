"""Command-line front end.

Subcommands wire the library into a pipeline over two file formats: the
architecture JSON and the CLRW weight container.  All randomness hangs
off the single ``--seed`` flag; per-layer generators are spawned from
(seed, layer id) so runs are reproducible layer by layer.

Exit codes: 0 success, 2 usage/configuration, 3 data or file format,
4 structural inconsistency.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PruneToolError, UsageError
from .graph import (
    CountingRules,
    compute_layer_flops,
    compute_params,
    flops_by_name,
    load_arch,
    save_arch,
)
from .pruning import (
    PrunePlan,
    TOOL_VERSION,
    apply_plan,
    format_count,
    longtail_report,
    reduction_report,
)
from .ranking import StructurePlan, plan_structure
from .selection import SELECTOR_NAMES, SelectionResult, select
from .weights import flatten_filters, load_weights, save_weights


@dataclass
class RunConfig:
    arch: str | None = None
    weights: str | None = None
    p: float = 0.0
    flops_exponent: float = 0.0
    selector: str = "rnf"
    seed: int = 0
    out: str | None = None
    count_bias: bool = True
    count_bn: bool = False
    bins: str = "10"
    selectors: str = "l1,random,kmeans"

    def validate(self) -> None:
        if not 0 <= self.p < 1:
            raise UsageError(f"--p must lie in [0, 1), got {self.p}")
        if self.flops_exponent < 0:
            raise UsageError(f"--lambda must be >= 0, got {self.flops_exponent}")
        if self.selector not in SELECTOR_NAMES:
            raise UsageError(f"--selector must be one of {SELECTOR_NAMES}")
        if self.seed < 0:
            raise UsageError(f"--seed must be >= 0, got {self.seed}")

    @property
    def rules(self) -> CountingRules:
        return CountingRules(count_bias=self.count_bias, count_bn_running=self.count_bn)

    def parsed_bins(self) -> int | list[float]:
        text = self.bins.strip()
        if "," in text:
            edges = [float(x) for x in text.split(",") if x.strip()]
            if len(edges) < 2:
                raise UsageError(f"--bins needs at least two edges: {text!r}")
            return edges
        try:
            count = int(text)
        except ValueError as exc:
            raise UsageError(f"--bins must be a count or comma-separated edges: {text!r}") from exc
        if count < 1:
            raise UsageError(f"--bins count must be >= 1, got {count}")
        return count


_FIELDS = {
    "arch": str, "weights": str, "p": float, "lambda": float, "selector": str,
    "seed": int, "out": str, "count_bias": bool, "count_bn": bool, "bins": str,
    "selectors": str,
}


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config-file values, then explicit flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
        for key, cast in _FIELDS.items():
            if key in doc:
                attr = "flops_exponent" if key == "lambda" else key
                setattr(cfg, attr, cast(doc[key]))
    for key in _FIELDS:
        attr = "flops_exponent" if key == "lambda" else key
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg


def derive_seed(seed: int, layer_id: int) -> int:
    return int(np.random.SeedSequence([seed, layer_id]).generate_state(1)[0])


def plan_selections(arch, store, structure: StructurePlan, selector: str, seed: int):
    """Run the configured selector on every conv layer of the plan."""
    selections: dict[str, SelectionResult] = {}
    for layer in sorted(arch.conv_layers(), key=lambda l: l.id):
        filters = flatten_filters(store[layer.name])
        target = structure.preserved[layer.name]
        layer_seed = derive_seed(seed, layer.id)
        selections[layer.name] = select(filters, target, selector, seed=layer_seed)
    return selections


def _out_dir(cfg: RunConfig, required: bool = True) -> Path | None:
    if cfg.out is None:
        if required:
            raise UsageError("--out is required for this command")
        return None
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_inputs(cfg: RunConfig, need_weights: bool = True):
    if cfg.arch is None:
        raise UsageError("--arch is required")
    arch = load_arch(cfg.arch)
    if not need_weights:
        return arch, None
    if cfg.weights is None:
        raise UsageError("--weights is required")
    return arch, load_weights(cfg.weights)


def cmd_flops(cfg: RunConfig) -> int:
    arch, _ = _load_inputs(cfg, need_weights=False)
    flops = compute_layer_flops(arch)
    params = compute_params(arch, cfg.rules)
    print(f"{'layer':30s} {'kind':16s} {'flops':>16s} {'params':>12s}")
    for layer in arch.layers:
        print(
            f"{layer.name:30s} {layer.kind:16s} {flops[layer.id]:>16,d} "
            f"{params[layer.id]:>12,d}"
        )
    total_f, total_p = sum(flops.values()), sum(params.values())
    print(f"{'TOTAL':30s} {'':16s} {total_f:>16,d} {total_p:>12,d}")
    print(f"model {arch.name}: {format_count(total_f)} FLOPs, {format_count(total_p)} parameters")
    out = _out_dir(cfg, required=False)
    if out is not None:
        doc = {
            "name": arch.name,
            "total_flops": total_f,
            "total_params": total_p,
            "per_layer": {
                arch.layer(i).name: {"flops": flops[i], "params": params[i]} for i in flops
            },
        }
        (out / "flops.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def _make_structure(cfg: RunConfig, arch, store) -> StructurePlan:
    flops = flops_by_name(arch)
    return plan_structure(arch, store, cfg.p, cfg.flops_exponent, flops)


def cmd_plan(cfg: RunConfig) -> int:
    arch, store = _load_inputs(cfg)
    structure = _make_structure(cfg, arch, store)
    print(f"{'layer':30s} {'rate':>8s} {'keep':>6s} {'of':>6s}")
    for name in sorted(structure.rates, key=lambda n: arch.layer_named(n).id):
        print(
            f"{name:30s} {structure.rates[name]:>8.4f} "
            f"{structure.preserved[name]:>6d} {structure.totals[name]:>6d}"
        )
    out = _out_dir(cfg)
    structure.save(out / "structure_plan.json")
    print(f"wrote {out / 'structure_plan.json'}")
    return 0


def cmd_prune(cfg: RunConfig) -> int:
    arch, store = _load_inputs(cfg)
    structure = _make_structure(cfg, arch, store)
    selections = plan_selections(arch, store, structure, cfg.selector, cfg.seed)
    plan = PrunePlan(
        structure=structure,
        selections=selections,
        provenance={
            "p": cfg.p,
            "lambda": cfg.flops_exponent,
            "selector": cfg.selector,
            "seed": cfg.seed,
            "tool_version": TOOL_VERSION,
        },
    )
    pruned_arch, pruned_store = apply_plan(arch, store, plan)
    report = reduction_report(arch, pruned_arch, cfg.rules)

    out = _out_dir(cfg)
    save_arch(pruned_arch, out / "pruned_arch.json")
    save_weights(pruned_store, out / "pruned_weights.clrw")
    plan.save(out / "prune_plan.json")
    (out / "reduction_report.csv").write_text(report.to_csv())
    print(report.summary())
    print(f"wrote pruned model and reports to {out}")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    arch, store = _load_inputs(cfg)
    structure = _make_structure(cfg, arch, store)
    names = ["rnf"] + [s.strip() for s in cfg.selectors.split(",") if s.strip()]
    for name in names:
        if name not in SELECTOR_NAMES:
            raise UsageError(f"unknown selector {name!r} in --selectors")
    all_selections = {
        name: plan_selections(arch, store, structure, name, cfg.seed) for name in names
    }
    reference = all_selections["rnf"]

    rows = []
    for layer in sorted(arch.conv_layers(), key=lambda l: l.id):
        ref = set(reference[layer.name].kept)
        for name in names:
            kept = set(all_selections[name][layer.name].kept)
            union = ref | kept
            jaccard = 1.0 if not union else len(ref & kept) / len(union)
            rows.append((layer.name, name, len(kept), jaccard))

    out = _out_dir(cfg)
    lines = ["layer,selector,kept,jaccard_vs_rnf"]
    for layer_name, selector_name, kept_n, jaccard in rows:
        lines.append(f"{layer_name},{selector_name},{kept_n},{jaccard:.6f}")
    (out / "selector_overlap.csv").write_text("\n".join(lines) + "\n")
    for name in names:
        mean = np.mean([j for (_, s, _, j) in rows if s == name])
        print(f"{name:8s} mean Jaccard vs rnf: {mean:.4f}")
    print(f"wrote {out / 'selector_overlap.csv'}")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    arch, store = _load_inputs(cfg)
    report = longtail_report(
        arch,
        store,
        rate=cfg.p,
        exponent=cfg.flops_exponent,
        flops=flops_by_name(arch),
        bins=cfg.parsed_bins(),
    )
    out = _out_dir(cfg)
    (out / "longtail_histogram.csv").write_text(report.histogram_csv())
    (out / "longtail_rates.csv").write_text(report.rates_csv())
    print(f"wrote magnitude-distribution reports to {out}")
    return 0


COMMANDS = {
    "flops": cmd_flops,
    "plan": cmd_plan,
    "prune": cmd_prune,
    "compare": cmd_compare,
    "report": cmd_report,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--arch", help="architecture JSON file")
    parser.add_argument("--weights", help="CLRW weights file")
    parser.add_argument("--p", type=float, help="global pruning rate in [0, 1)")
    parser.add_argument(
        "--lambda", dest="flops_exponent", type=float,
        help="FLOPs exponent of the importance score (0 = magnitude only)",
    )
    parser.add_argument("--selector", choices=SELECTOR_NAMES, help="filter selector")
    parser.add_argument("--seed", type=int, help="seed for randomized selectors")
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--count-bias", dest="count_bias", action=argparse.BooleanOptionalAction,
        default=None, help="include declared bias vectors in parameter counts",
    )
    parser.add_argument(
        "--count-bn", dest="count_bn", action=argparse.BooleanOptionalAction,
        default=None, help="also count batchnorm running statistics",
    )
    parser.add_argument("--bins", help="histogram bin count or comma-separated edges")
    parser.add_argument("--selectors", help="comma list of selectors to compare against rnf")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clr-rnf",
        description="Structured filter pruning via cross-layer weight ranking "
        "and reciprocal nearest-filter selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("flops", help="audit per-layer FLOPs and parameters")
    sub.add_parser("plan", help="derive the pruned network structure")
    sub.add_parser("prune", help="plan, select filters, and rewrite the model")
    sub.add_parser("compare", help="compare filter selectors on one structure")
    sub.add_parser("report", help="emit weight-magnitude distribution CSVs")
    for name in COMMANDS:
        _add_common(sub.choices[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except PruneToolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
