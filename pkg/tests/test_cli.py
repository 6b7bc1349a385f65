import csv
import json
from pathlib import Path

import numpy as np
import pytest

from rockgraph import cli, data, mapper, voxel

CONFIG_PATH = Path(__file__).parent.parent / "configs" / "mineral_quartz.json"


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestGenAndMap:
    def test_gen_map_roundtrip(self, tmp_path):
        raw = tmp_path / "vol.raw"
        graph = tmp_path / "g.json"
        assert run("gen", "--dims", 16, 16, 16, "--n-spheres", 5,
                   "--radius-min", 2, "--radius-max", 4, "--seed", 3,
                   "--out", raw) == 0
        assert run("map", "--input", raw, "--n-intervals", 4,
                   "--overlap", 0.5, "--out", graph) == 0
        g = mapper.load_graph(graph)
        assert g.n_nodes > 0
        grid = voxel.read_raw(raw)
        assert grid.dims == (16, 16, 16)

    def test_gen_deterministic(self, tmp_path):
        a, b = tmp_path / "a.raw", tmp_path / "b.raw"
        for out in (a, b):
            run("gen", "--dims", 8, 8, 8, "--n-spheres", 3, "--radius-min", 1,
                "--radius-max", 2, "--seed", 9, "--out", out)
        assert a.read_bytes() == b.read_bytes()

    def test_map_overlap_one_usage_error(self, tmp_path):
        raw = tmp_path / "vol.raw"
        run("gen", "--dims", 8, 8, 8, "--n-spheres", 1, "--radius-min", 2,
            "--radius-max", 3, "--seed", 0, "--out", raw)
        assert run("map", "--input", raw, "--overlap", 1.0,
                   "--out", tmp_path / "g.json") == 2

    def test_unknown_flag_usage_error(self):
        assert run("gen", "--bogus", 1) == 2

    def test_missing_input_runtime_error(self, tmp_path):
        assert run("map", "--input", tmp_path / "nope.raw",
                   "--out", tmp_path / "g.json") == 1


class TestPhysics:
    def test_sweep_csv_and_figure(self, tmp_path):
        out = tmp_path / "physics.csv"
        assert run("physics", "--mineral-config", CONFIG_PATH, "--alpha", 0.15,
                   "--phi-min", 0, "--phi-max", 0.3, "--steps", 31,
                   "--out", out) == 0
        rows = read_csv(out)
        assert len(rows) == 31
        doc = json.loads(CONFIG_PATH.read_text())
        first = rows[0]
        # phi=0 limits: every model equals the mineral moduli
        for col in ("k_voigt", "k_reuss", "k_hs_low", "k_hs_high", "k_dem"):
            assert float(first[col]) == pytest.approx(doc["k_gpa"])
        for col in ("mu_voigt", "mu_reuss", "mu_hs_low", "mu_hs_high", "mu_dem"):
            assert float(first[col]) == pytest.approx(doc["mu_gpa"])
        png = out.with_suffix(".png")
        assert png.exists() and png.stat().st_size > 0

    def test_no_plot_skips_figure(self, tmp_path):
        out = tmp_path / "physics.csv"
        assert run("physics", "--mineral-k", 36, "--mineral-mu", 44,
                   "--steps", 5, "--no-plot", "--out", out) == 0
        assert not out.with_suffix(".png").exists()

    def test_requires_mineral(self, tmp_path):
        assert run("physics", "--out", tmp_path / "p.csv") == 2

    def test_bad_phi_range(self, tmp_path):
        assert run("physics", "--mineral-k", 36, "--mineral-mu", 44,
                   "--phi-min", 0.5, "--phi-max", 0.2,
                   "--out", tmp_path / "p.csv") == 2


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("corpus")
    code = run("make-dataset", "--out-dir", out_dir, "--count", 30,
               "--sizes", "16,24", "--mineral-config", CONFIG_PATH,
               "--noise-sigma", 0.2, "--seed", 11,
               "--n-intervals", 4, "--overlap", 0.5)
    assert code == 0
    return out_dir


class TestMakeDataset:
    def test_manifest_complete(self, tiny_corpus):
        samples = data.read_manifest(tiny_corpus / "manifest.csv")
        assert len(samples) == 30
        for s in samples:
            assert s.labels is not None
            assert Path(s.graph_path).exists()
            assert Path(s.voxel_path).exists()
            assert 0.0 <= s.porosity <= 1.0
        assert {s.subcube_size for s in samples} == {16, 24}

    def test_metrics_from_manifest(self, tiny_corpus, tmp_path):
        out = tmp_path / "summary.csv"
        assert run("metrics", "--manifest", tiny_corpus / "manifest.csv",
                   "--out", out) == 0
        rows = read_csv(out)
        assert len(rows) == 30
        assert "solid_avg_degree" in rows[0]
        assert float(rows[0]["porosity"]) >= 0.0

    def test_metrics_from_graphs(self, tiny_corpus, tmp_path):
        samples = data.read_manifest(tiny_corpus / "manifest.csv")
        out = tmp_path / "summary.csv"
        assert run("metrics", "--graphs", samples[0].graph_path,
                   samples[1].graph_path, "--out", out) == 0
        assert len(read_csv(out)) == 2


class TestTrainEvalPredict:
    def test_rf_train_eval_predict(self, tiny_corpus, tmp_path):
        model = tmp_path / "rf.json"
        importance = tmp_path / "importance.csv"
        assert run("train-rf", "--manifest", tiny_corpus / "manifest.csv",
                   "--split-seed", 1, "--trees", 10, "--seed", 2,
                   "--model-out", model, "--importance-out", importance) == 0
        assert importance.with_suffix(".png").exists()
        imp_rows = read_csv(importance)
        assert len(imp_rows) == 12
        total = sum(float(r["importance"]) for r in imp_rows)
        assert total == pytest.approx(1.0, abs=1e-9)

        parity = tmp_path / "parity.csv"
        assert run("eval", "--model", model, "--manifest",
                   tiny_corpus / "manifest.csv", "--partition", "test",
                   "--split-seed", 1, "--out", parity) == 0
        assert parity.with_suffix(".png").exists()
        assert len(read_csv(parity)) >= 1

        samples = data.read_manifest(tiny_corpus / "manifest.csv")
        pred_csv = tmp_path / "pred.csv"
        assert run("predict", "--model", model, "--graphs",
                   samples[0].graph_path, "--out", pred_csv) == 0
        rows = read_csv(pred_csv)
        assert len(rows) == 1
        assert float(rows[0]["k_gpa"]) >= 0.0

    def test_gnn_train_smoke(self, tiny_corpus, tmp_path):
        model = tmp_path / "gnn.json"
        history = tmp_path / "history.csv"
        assert run("train-gnn", "--manifest", tiny_corpus / "manifest.csv",
                   "--split-seed", 1, "--epochs", 3, "--batch-size", 8,
                   "--dropout", 0.0, "--seed", 4, "--model-out", model,
                   "--history-out", history) == 0
        rows = read_csv(history)
        assert len(rows) == 3
        assert history.with_suffix(".png").exists()

        parity = tmp_path / "parity.csv"
        assert run("eval", "--model", model, "--manifest",
                   tiny_corpus / "manifest.csv", "--partition", "val",
                   "--split-seed", 1, "--out", parity, "--no-plot") == 0
        assert not parity.with_suffix(".png").exists()

    def test_eval_deterministic_partition(self, tiny_corpus, tmp_path):
        # same split seed picks the same partition in separate invocations
        samples = data.read_manifest(tiny_corpus / "manifest.csv")
        split_a = data.make_split([s.id for s in samples], seed=5)
        split_b = data.make_split([s.id for s in samples], seed=5)
        assert split_a == split_b

    def test_thread_env_does_not_change_output(self, tiny_corpus, tmp_path,
                                               monkeypatch):
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        run("metrics", "--manifest", tiny_corpus / "manifest.csv", "--out", out_a)
        monkeypatch.setenv("ROCKGRAPH_THREADS", "4")
        run("metrics", "--manifest", tiny_corpus / "manifest.csv", "--out", out_b)
        assert out_a.read_text() == out_b.read_text()
