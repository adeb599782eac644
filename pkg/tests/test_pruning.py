import numpy as np
import pytest

from clr_rnf.errors import StructureError
from clr_rnf.graph import ArchSpec, Edge, LayerSpec, flops_by_name, total_flops, total_params
from clr_rnf.pruning import (
    PrunePlan,
    apply_plan,
    arch_with_structure,
    format_count,
    format_reduction,
    identity_plan,
    longtail_report,
    planned_flops,
    reduction_report,
)
from clr_rnf.ranking import StructurePlan, plan_structure
from clr_rnf.selection import SelectionResult
from clr_rnf.synthetic import random_store, toy_residual_network, two_regime_network
from clr_rnf.weights import WeightStore


def chain_arch():
    layers = (
        LayerSpec(0, "first", "conv", 4, 3, kernel=(3, 3), padding=1, bias=True),
        LayerSpec(1, "first.norm", "batchnorm", 4, 4),
        LayerSpec(2, "second", "conv", 2, 4, kernel=(1, 1)),
    )
    return ArchSpec("chain", (3, 4, 4), layers, (Edge(0, 1), Edge(1, 2)))


def manual_plan(arch, kept: dict[str, tuple[int, ...]]):
    convs = {l.name: l for l in arch.conv_layers()}
    structure = StructurePlan(
        global_rate=0.0,
        flops_exponent=0.0,
        rates={n: 1 - len(kept[n]) / convs[n].out_channels for n in convs},
        preserved={n: len(kept[n]) for n in convs},
        totals={n: convs[n].out_channels for n in convs},
        groups=tuple(
            tuple(sorted((arch.layer(i).name for i in g), key=lambda x: arch.layer_named(x).id))
            for g in arch.coupling_groups
        ),
    )
    selections = {n: SelectionResult(kept=kept[n], selector="manual") for n in convs}
    return PrunePlan(structure=structure, selections=selections)


class TestIdentity:
    def test_identity_plan_is_identity(self):
        arch = toy_residual_network()
        store = random_store(arch, 0)
        new_arch, new_store = apply_plan(arch, store, identity_plan(arch))
        assert new_arch.layers == arch.layers
        assert new_arch.edges == arch.edges
        assert new_store.equals(store)
        for name in store.names():
            np.testing.assert_array_equal(new_store[name], store[name])

    def test_identity_composes(self):
        arch = toy_residual_network()
        store = random_store(arch, 1)
        a1, s1 = apply_plan(arch, store, identity_plan(arch))
        a2, s2 = apply_plan(a1, s1, identity_plan(a1))
        assert a2.layers == arch.layers
        assert s2.equals(store)


class TestSlicing:
    def test_consumer_channels_follow_kept_filters(self):
        arch = chain_arch()
        rng = np.random.default_rng(2)
        w1 = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        w2 = rng.standard_normal((2, 4, 1, 1)).astype(np.float32)
        bias1 = rng.standard_normal(4).astype(np.float32)
        bn = rng.standard_normal((2, 4)).astype(np.float32)
        store = WeightStore({"first": w1, "first.bias": bias1, "first.norm": bn, "second": w2})

        plan = manual_plan(arch, {"first": (0, 2), "second": (0, 1)})
        new_arch, new_store = apply_plan(arch, store, plan)

        np.testing.assert_array_equal(new_store["first"], w1[[0, 2]])
        np.testing.assert_array_equal(new_store["first.bias"], bias1[[0, 2]])
        np.testing.assert_array_equal(new_store["first.norm"], bn[:, [0, 2]])
        np.testing.assert_array_equal(new_store["second"], w2[:, [0, 2]])
        assert new_arch.layer_named("first").out_channels == 2
        assert new_arch.layer_named("second").in_channels == 2

    def test_residual_alignment_keeps_add_operands_equal(self):
        arch = toy_residual_network()
        store = random_store(arch, 3)
        plan = manual_plan(
            arch,
            {"stem": (1, 4, 6), "block.conv1": (0, 2, 3, 7), "block.conv2": (0, 5, 7), "head": (0, 1)},
        )
        new_arch, new_store = apply_plan(arch, store, plan)
        add = new_arch.layer_named("block.add")
        assert add.in_channels == add.out_channels == 3
        # downstream consumer slices by the lowest-id operand (the stem)
        np.testing.assert_array_equal(
            new_store["head"], store["head"][np.ix_([0, 1], [1, 4, 6])]
        )
        for layer in new_arch.layers:
            assert layer.out_channels >= 1

    def test_concat_offsets_preserve_branch_order(self):
        layers = (
            LayerSpec(0, "stem", "conv", 3, 3, kernel=(1, 1)),
            LayerSpec(1, "branch.a", "conv", 2, 3, kernel=(1, 1)),
            LayerSpec(2, "branch.b", "conv", 3, 3, kernel=(1, 1)),
            LayerSpec(3, "merge", "concat", 5, 5),
            LayerSpec(4, "head", "conv", 2, 5, kernel=(1, 1)),
        )
        edges = (
            Edge(0, 1), Edge(0, 2),
            Edge(1, 3, "concat"), Edge(2, 3, "concat"),
            Edge(3, 4),
        )
        arch = ArchSpec("inception-ish", (3, 2, 2), layers, edges)
        rng = np.random.default_rng(4)
        store = WeightStore(
            {
                "stem": rng.standard_normal((3, 3, 1, 1)).astype(np.float32),
                "branch.a": rng.standard_normal((2, 3, 1, 1)).astype(np.float32),
                "branch.b": rng.standard_normal((3, 3, 1, 1)).astype(np.float32),
                "head": rng.standard_normal((2, 5, 1, 1)).astype(np.float32),
            }
        )
        plan = manual_plan(
            arch, {"stem": (0, 1, 2), "branch.a": (1,), "branch.b": (0, 2), "head": (0, 1)}
        )
        new_arch, new_store = apply_plan(arch, store, plan)
        # concat channels: branch.a keeps {1} -> global 1; branch.b keeps {0,2} -> global {2,4}
        np.testing.assert_array_equal(new_store["head"], store["head"][:, [1, 2, 4]])
        assert new_arch.layer_named("merge").out_channels == 3

    def test_fc_input_slice(self):
        layers = (
            LayerSpec(0, "conv", "conv", 4, 3, kernel=(2, 2), stride=2),
            LayerSpec(1, "pool", "pool", 4, 4, kernel=(2, 2), stride=2),
            LayerSpec(2, "fc", "fully-connected", 3, 4, bias=True),
        )
        arch = ArchSpec("tiny", (3, 4, 4), layers, (Edge(0, 1), Edge(1, 2)))
        rng = np.random.default_rng(5)
        store = WeightStore(
            {
                "conv": rng.standard_normal((4, 3, 2, 2)).astype(np.float32),
                "fc": rng.standard_normal((3, 4)).astype(np.float32),
                "fc.bias": rng.standard_normal(3).astype(np.float32),
            }
        )
        plan = manual_plan(arch, {"conv": (1, 3)})
        new_arch, new_store = apply_plan(arch, store, plan)
        np.testing.assert_array_equal(new_store["fc"], store["fc"][:, [1, 3]])
        np.testing.assert_array_equal(new_store["fc.bias"], store["fc.bias"])
        assert new_arch.layer_named("fc").in_channels == 2


class TestPlanValidation:
    def test_missing_selection(self):
        arch = chain_arch()
        store = random_store(arch, 0)
        plan = manual_plan(arch, {"first": (0,), "second": (0,)})
        plan.selections.pop("second")
        with pytest.raises(StructureError, match="second"):
            apply_plan(arch, store, plan)

    def test_selection_size_disagrees_with_structure(self):
        arch = chain_arch()
        store = random_store(arch, 0)
        plan = manual_plan(arch, {"first": (0, 1), "second": (0,)})
        plan.selections["first"] = SelectionResult(kept=(0, 1, 2), selector="manual")
        with pytest.raises(StructureError, match="first"):
            apply_plan(arch, store, plan)

    def test_out_of_range_indices(self):
        arch = chain_arch()
        store = random_store(arch, 0)
        plan = manual_plan(arch, {"first": (0, 9), "second": (0,)})
        with pytest.raises(StructureError, match="out of range"):
            apply_plan(arch, store, plan)

    def test_coupling_violation(self):
        arch = toy_residual_network()
        store = random_store(arch, 0)
        plan = manual_plan(
            arch,
            {"stem": (0, 1, 2), "block.conv1": (0, 1), "block.conv2": (0, 1), "head": (0,)},
        )
        with pytest.raises(StructureError, match="unequal filter counts"):
            apply_plan(arch, store, plan)


class TestCounts:
    def test_params_after_match_analytic_prediction(self):
        arch = toy_residual_network()
        store = random_store(arch, 6)
        plan = manual_plan(
            arch,
            {"stem": (0, 3), "block.conv1": (1, 2, 5), "block.conv2": (4, 7), "head": (2,)},
        )
        new_arch, _ = apply_plan(arch, store, plan)
        # stem 2x3x3x3, conv1 3x2x3x3, conv2 2x3x3x3, head 1x2x1x1
        assert total_params(new_arch) == 2 * 27 + 3 * 18 + 2 * 27 + 2
        assert total_params(new_arch) == total_params(arch_with_structure(arch, plan.structure))

    def test_planned_flops_equals_applied_flops(self):
        arch, store = two_regime_network()
        structure = plan_structure(arch, store, 0.5, 1.0, flops_by_name(arch))
        from clr_rnf.cli import plan_selections

        selections = plan_selections(arch, store, structure, "l1", 0)
        plan = PrunePlan(structure=structure, selections=selections)
        new_arch, _ = apply_plan(arch, store, plan)
        assert total_flops(new_arch) == planned_flops(arch, structure)


class TestReductionReport:
    def test_identity_reduction_is_zero(self):
        arch = toy_residual_network()
        report = reduction_report(arch, arch)
        assert report.flops_reduction == 0.0
        assert report.params_reduction == 0.0
        assert all(row["flops_pr_pct"] == 0.0 for row in report.rows)

    def test_published_style_formatting(self):
        assert format_reduction(314.04e6, 81.31e6) == "81.31M (74.1%)"
        assert format_count(4.11e9) == "4.11B"
        assert format_count(850_000) == "850.00K"

    def test_halved_toy_params_by_hand(self):
        arch = chain_arch()
        store = random_store(arch, 7)
        plan = manual_plan(arch, {"first": (0, 1), "second": (0,)})
        new_arch, _ = apply_plan(arch, store, plan)
        report = reduction_report(arch, new_arch)
        # first: 2*3*9+2=56 of 4*3*9+4=112, bn 4 of 8, second: 1*2=2 of 2*4=8
        assert report.params_before == 112 + 8 + 8
        assert report.params_after == 56 + 4 + 2
        assert "TOTAL" in report.to_csv()

    def test_csv_has_row_per_layer(self):
        arch = toy_residual_network()
        csv_text = reduction_report(arch, arch).to_csv()
        assert len(csv_text.strip().splitlines()) == 1 + len(arch.layers) + 1


class TestLongTail:
    def test_single_weight_fills_one_bin(self):
        layers = (LayerSpec(0, "only", "conv", 1, 1, kernel=(1, 1)),)
        arch = ArchSpec("one", (1, 1, 1), layers, ())
        store = WeightStore({"only": np.full((1, 1, 1, 1), 0.7, dtype=np.float32)})
        report = longtail_report(
            arch, store, rate=0.0, exponent=0.0, flops=flops_by_name(arch), bins=4
        )
        fractions = [row["fraction"] for row in report.histogram_rows]
        assert sum(fractions) == pytest.approx(1.0)
        assert max(fractions) == 1.0

    def test_fractions_sum_to_one_per_layer(self):
        arch, store = two_regime_network()
        report = longtail_report(
            arch, store, rate=0.5, exponent=1.0, flops=flops_by_name(arch), bins=10
        )
        per_layer: dict[str, float] = {}
        for row in report.histogram_rows:
            per_layer[row["layer"]] = per_layer.get(row["layer"], 0.0) + row["fraction"]
        for total in per_layer.values():
            assert total == pytest.approx(1.0)

    def test_magnitude_ranking_hits_top_layers_harder(self):
        arch, store = two_regime_network()
        report = longtail_report(
            arch, store, rate=0.5, exponent=1.0, flops=flops_by_name(arch)
        )
        rates = {row["layer"]: row for row in report.rate_rows}
        for top in ("top1", "top2"):
            for bottom in ("bottom1", "bottom2"):
                assert rates[top]["rate_magnitude_only"] > rates[bottom]["rate_magnitude_only"]

    def test_csv_headers(self):
        arch, store = two_regime_network()
        report = longtail_report(
            arch, store, rate=0.5, exponent=1.0, flops=flops_by_name(arch), bins=[0.0, 0.1, 2.0]
        )
        assert report.histogram_csv().splitlines()[0] == "layer,bin_lo,bin_hi,fraction"
        assert report.rates_csv().splitlines()[0] == (
            "layer,weights,rate_magnitude_only,rate_computation_aware"
        )


class TestPlanSerialization:
    def test_round_trip(self, tmp_path):
        arch = toy_residual_network()
        plan = identity_plan(arch)
        plan.save(tmp_path / "plan.json")
        clone = PrunePlan.load(tmp_path / "plan.json")
        assert clone.structure.preserved == plan.structure.preserved
        assert clone.selections.keys() == plan.selections.keys()
        for name in plan.selections:
            assert clone.selections[name].kept == plan.selections[name].kept
