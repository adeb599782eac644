import csv
import json

import numpy as np
import pytest

from clr_rnf.cli import main, plan_selections
from clr_rnf.graph import bundled_arch_path, flops_by_name, load_arch, save_arch
from clr_rnf.pruning import PrunePlan, apply_plan
from clr_rnf.ranking import plan_structure
from clr_rnf.synthetic import random_store, toy_residual_network, two_regime_network
from clr_rnf.weights import load_weights, save_weights


@pytest.fixture
def toy(tmp_path):
    arch = toy_residual_network()
    arch_path = tmp_path / "toy.json"
    weights_path = tmp_path / "toy.clrw"
    save_arch(arch, arch_path)
    save_weights(random_store(arch, 3), weights_path)
    return arch, arch_path, weights_path


@pytest.fixture
def regime(tmp_path):
    arch, store = two_regime_network()
    arch_path = tmp_path / "regime.json"
    weights_path = tmp_path / "regime.clrw"
    save_arch(arch, arch_path)
    save_weights(store, weights_path)
    return arch_path, weights_path


class TestFlopsCommand:
    def test_vgg_total(self, capsys, tmp_path):
        rc = main(["flops", "--arch", str(bundled_arch_path("vgg16-cifar")),
                   "--out", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "flops.json").read_text())
        assert doc["total_flops"] == pytest.approx(314.04e6, rel=0.01)
        assert doc["total_params"] == pytest.approx(14.73e6, rel=0.01)
        assert "313,201,664" in capsys.readouterr().out

    def test_toy_hand_count(self, toy, capsys):
        _, arch_path, _ = toy
        assert main(["flops", "--arch", str(arch_path)]) == 0
        out = capsys.readouterr().out
        assert "89,600" in out  # 13824 + 36864 + 36864 + 2048

    def test_invalid_spec_exits_4(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"name": "bad", "input_shape": [3, 8, 8], "layers": [],
                                   "edges": []}))
        assert main(["flops", "--arch", str(bad)]) == 4

    def test_missing_file_exits_3(self, tmp_path):
        assert main(["flops", "--arch", str(tmp_path / "nope.json")]) == 3


class TestPlanCommand:
    def test_rate_zero_gives_zero_everywhere(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        out = tmp_path / "plan0"
        rc = main(["plan", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0", "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "structure_plan.json").read_text())
        assert all(v["rate"] == 0.0 for v in doc["layers"].values())
        assert all(v["preserved"] == v["total"] for v in doc["layers"].values())

    def test_exponent_shifts_rates_off_top_layers(self, regime, tmp_path):
        arch_path, weights_path = regime
        rates = {}
        for lam in ("0", "1"):
            out = tmp_path / f"plan{lam}"
            rc = main(["plan", "--arch", str(arch_path), "--weights", str(weights_path),
                       "--p", "0.5", "--lambda", lam, "--out", str(out)])
            assert rc == 0
            doc = json.loads((out / "structure_plan.json").read_text())
            rates[lam] = {k: v["rate"] for k, v in doc["layers"].items()}
        assert rates["1"]["top1"] < rates["0"]["top1"]
        assert rates["1"]["top2"] < rates["0"]["top2"]

    def test_malformed_weights_exits_3(self, toy, tmp_path):
        _, arch_path, _ = toy
        bad = tmp_path / "bad.clrw"
        bad.write_bytes(b"not a weights file")
        assert main(["plan", "--arch", str(arch_path), "--weights", str(bad),
                     "--p", "0.5", "--out", str(tmp_path / "o")]) == 3

    def test_bad_rate_exits_2(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        assert main(["plan", "--arch", str(arch_path), "--weights", str(weights_path),
                     "--p", "1.5", "--out", str(tmp_path / "o")]) == 2


class TestPruneCommand:
    def test_identity_run_reproduces_weights_bytes(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        out = tmp_path / "identity"
        rc = main(["prune", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0", "--selector", "rnf", "--out", str(out)])
        assert rc == 0
        assert (out / "pruned_weights.clrw").read_bytes() == weights_path.read_bytes()
        pruned = load_arch(out / "pruned_arch.json")
        original = load_arch(arch_path)
        assert pruned.layers == original.layers

    def test_pipeline_equals_composed_stages(self, toy, tmp_path):
        arch, arch_path, weights_path = toy
        out = tmp_path / "full"
        rc = main(["prune", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0.4", "--lambda", "0.5", "--selector", "rnf",
                   "--seed", "11", "--out", str(out)])
        assert rc == 0
        store = load_weights(weights_path)
        structure = plan_structure(arch, store, 0.4, 0.5, flops_by_name(arch))
        selections = plan_selections(arch, store, structure, "rnf", 11)
        expected_arch, expected_store = apply_plan(
            arch, store, PrunePlan(structure=structure, selections=selections)
        )
        got_arch = load_arch(out / "pruned_arch.json")
        got_store = load_weights(out / "pruned_weights.clrw")
        assert got_arch.layers == expected_arch.layers
        assert got_store.equals(expected_store)
        plan_doc = json.loads((out / "prune_plan.json").read_text())
        assert plan_doc["provenance"]["selector"] == "rnf"
        assert plan_doc["provenance"]["seed"] == 11

    def test_reruns_are_byte_identical(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        blobs = []
        for stamp in ("a", "b"):
            out = tmp_path / stamp
            rc = main(["prune", "--arch", str(arch_path), "--weights", str(weights_path),
                       "--p", "0.3", "--lambda", "1", "--selector", "kmeans",
                       "--seed", "5", "--out", str(out)])
            assert rc == 0
            blobs.append(
                (
                    (out / "pruned_weights.clrw").read_bytes(),
                    (out / "prune_plan.json").read_bytes(),
                    (out / "pruned_arch.json").read_bytes(),
                    (out / "reduction_report.csv").read_bytes(),
                )
            )
        assert blobs[0] == blobs[1]

    def test_broken_coupling_exits_4(self, tmp_path):
        doc = {
            "name": "broken",
            "input_shape": [3, 8, 8],
            "layers": [
                {"id": 0, "name": "a", "kind": "conv", "out_channels": 4,
                 "in_channels": 3, "kernel": [1, 1]},
                {"id": 1, "name": "b", "kind": "conv", "out_channels": 6,
                 "in_channels": 4, "kernel": [1, 1]},
                {"id": 2, "name": "s", "kind": "add", "out_channels": 6,
                 "in_channels": 6},
            ],
            "edges": [[0, 1, "sequential"], [0, 2, "residual-add"], [1, 2, "residual-add"]],
        }
        bad = tmp_path / "broken.json"
        bad.write_text(json.dumps(doc))
        assert main(["flops", "--arch", str(bad)]) == 4


class TestCompareCommand:
    def test_rnf_vs_itself_is_one(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        out = tmp_path / "cmp"
        rc = main(["compare", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0.4", "--selectors", "l1,random,kmeans", "--seed", "1",
                   "--out", str(out)])
        assert rc == 0
        with open(out / "selector_overlap.csv") as fh:
            rows = list(csv.DictReader(fh))
        rnf_rows = [r for r in rows if r["selector"] == "rnf"]
        assert rnf_rows and all(float(r["jaccard_vs_rnf"]) == 1.0 for r in rnf_rows)

    def test_keeping_everything_makes_selectors_agree(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        out = tmp_path / "cmp0"
        rc = main(["compare", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0", "--seed", "1", "--out", str(out)])
        assert rc == 0
        with open(out / "selector_overlap.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["jaccard_vs_rnf"]) == 1.0 for r in rows)

    def test_jaccard_matches_set_arithmetic(self, toy, tmp_path):
        arch, arch_path, weights_path = toy
        out = tmp_path / "cmpj"
        rc = main(["compare", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0.4", "--selectors", "l1", "--seed", "7", "--out", str(out)])
        assert rc == 0
        store = load_weights(weights_path)
        structure = plan_structure(arch, store, 0.4, 0.0, flops_by_name(arch))
        ref = plan_selections(arch, store, structure, "rnf", 7)
        l1 = plan_selections(arch, store, structure, "l1", 7)
        with open(out / "selector_overlap.csv") as fh:
            rows = {(r["layer"], r["selector"]): r for r in csv.DictReader(fh)}
        for name in ref:
            a, b = set(ref[name].kept), set(l1[name].kept)
            expected = len(a & b) / len(a | b)
            assert float(rows[(name, "l1")]["jaccard_vs_rnf"]) == pytest.approx(
                expected, abs=1e-6
            )


class TestReportCommand:
    def test_writes_both_csvs(self, regime, tmp_path):
        arch_path, weights_path = regime
        out = tmp_path / "rep"
        rc = main(["report", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0.5", "--lambda", "1", "--bins", "8", "--out", str(out)])
        assert rc == 0
        hist = (out / "longtail_histogram.csv").read_text().splitlines()
        assert hist[0] == "layer,bin_lo,bin_hi,fraction"
        assert len(hist) == 1 + 4 * 8  # four conv layers, eight bins
        rates = (out / "longtail_rates.csv").read_text().splitlines()
        assert rates[0] == "layer,weights,rate_magnitude_only,rate_computation_aware"

    def test_explicit_bin_edges(self, regime, tmp_path):
        arch_path, weights_path = regime
        out = tmp_path / "rep2"
        rc = main(["report", "--arch", str(arch_path), "--weights", str(weights_path),
                   "--p", "0.5", "--lambda", "1", "--bins", "0,0.1,0.5,2", "--out", str(out)])
        assert rc == 0
        hist = (out / "longtail_histogram.csv").read_text().splitlines()
        assert len(hist) == 1 + 4 * 3


class TestConfigFile:
    def test_flags_override_config(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "arch": str(arch_path), "weights": str(weights_path),
            "p": 0.9, "lambda": 2.0,
        }))
        out = tmp_path / "cfgout"
        rc = main(["plan", "--config", str(cfg), "--p", "0", "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "structure_plan.json").read_text())
        assert doc["global_rate"] == 0.0
        assert doc["flops_exponent"] == 2.0

    def test_config_alone_supplies_inputs(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "arch": str(arch_path), "weights": str(weights_path), "p": 0.25,
        }))
        out = tmp_path / "cfgonly"
        rc = main(["plan", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "structure_plan.json").read_text())
        assert doc["global_rate"] == 0.25


class TestUsageErrors:
    def test_unknown_selector_exits_2(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        with pytest.raises(SystemExit) as exc:
            main(["prune", "--arch", str(arch_path), "--weights", str(weights_path),
                  "--p", "0.1", "--selector", "best", "--out", str(tmp_path / "o")])
        assert exc.value.code == 2

    def test_missing_out_for_prune(self, toy):
        _, arch_path, weights_path = toy
        assert main(["prune", "--arch", str(arch_path), "--weights", str(weights_path),
                     "--p", "0.1"]) == 2

    def test_bad_lambda_exits_2(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        assert main(["plan", "--arch", str(arch_path), "--weights", str(weights_path),
                     "--p", "0.1", "--lambda", "-1", "--out", str(tmp_path / "o")]) == 2

    def test_negative_seed_exits_2(self, toy, tmp_path):
        _, arch_path, weights_path = toy
        assert main(["prune", "--arch", str(arch_path), "--weights", str(weights_path),
                     "--p", "0.1", "--seed", "-3", "--out", str(tmp_path / "o")]) == 2
