"""Acceptance suite: one test per shipped criterion, each printing a
PASS line with its headline numbers after its assertions hold.

Criteria 8, 9 and 11 share one session-scoped 500-sample synthetic corpus
(sphere packs at cube sizes 32/48/64, DEM labels with 0.5 GPa noise).
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import (closeness_oracle, eigencentrality_oracle, pagerank_oracle,
                     random_connected_graph, rk4_dem_oracle)
from rockgraph import data, forest, gin, mapper, metrics, physics, voxel
from rockgraph.physics import DemParams, ElasticModuli, VACUUM

CONFIG_PATH = Path(__file__).parent.parent / "configs" / "mineral_quartz.json"
_CFG = json.loads(CONFIG_PATH.read_text())
MINERAL = ElasticModuli(_CFG["k_gpa"], _CFG["mu_gpa"])

# pinned experiment knobs for the learning criteria
CORPUS_SEED = 0
CORPUS_SIZE = 500
SIZES = (32, 48, 64)
RADIUS_FRAC = (0.12, 0.22)
PHI_RANGE = (0.05, 0.40)
NOISE_SIGMA = 0.5
MAPPER_PARAMS = mapper.MapperParams(n_intervals=10, overlap=0.5)
GNN_SEED = 1
GNN_TRAIN = dict(epochs=200, batch_size=32, learning_rate=1e-3, dropout=0.3)
TRANSFER_SEED = 0
RF_SEED = 0


def report(criterion, message):
    print(f"\nACCEPTANCE {criterion}: PASS ({message})")


def solid_cube(w):
    return voxel.VoxelGrid.from_volume(np.ones((w, w, w), dtype=np.uint8), 1e-6)


def build_sample(index):
    size = SIZES[index % len(SIZES)]
    sample_id = f"s{index:04d}_d{size}"
    seed = data.sample_seed(CORPUS_SEED, sample_id)
    phi_target = PHI_RANGE[0] + (PHI_RANGE[1] - PHI_RANGE[0]) * \
        np.random.default_rng(seed).random()
    grid = voxel.gen_sphere_pack_to_porosity(
        (size, size, size), phi_target,
        (RADIUS_FRAC[0] * size, RADIUS_FRAC[1] * size), seed)
    graph = mapper.build_graph(grid, MAPPER_PARAMS)
    labels = data.synth_labels(grid, DemParams(mineral=MINERAL, aspect_ratio=0.25),
                               noise_sigma=NOISE_SIGMA, seed=seed)
    return size, graph, labels


@pytest.fixture(scope="session")
def corpus():
    t0 = time.time()
    sizes, graphs, labels = [], [], []
    for i in range(CORPUS_SIZE):
        size, graph, lab = build_sample(i)
        sizes.append(size)
        graphs.append(graph)
        labels.append([lab.k, lab.mu])
    return {
        "sizes": np.array(sizes),
        "graphs": graphs,
        "labels": np.array(labels),
        "build_seconds": time.time() - t0,
    }


@pytest.fixture(scope="session")
def gnn_run(corpus):
    """Mixed-size training shared by criteria 8 and 11."""
    split = data.make_split([str(i) for i in range(CORPUS_SIZE)], seed=0)
    tr = [int(i) for i in split.train]
    va = [int(i) for i in split.val]
    te = [int(i) for i in split.test]
    t0 = time.time()
    model = gin.GinModel.new(gin.GinConfig(dropout=GNN_TRAIN["dropout"]), seed=GNN_SEED)
    history = gin.train(model, [corpus["graphs"][i] for i in tr], corpus["labels"][tr],
                        [corpus["graphs"][i] for i in va], corpus["labels"][va],
                        gin.TrainConfig(epochs=GNN_TRAIN["epochs"],
                                        batch_size=GNN_TRAIN["batch_size"],
                                        learning_rate=GNN_TRAIN["learning_rate"],
                                        seed=GNN_SEED))
    preds = np.array([[p.k, p.mu] for p in
                      (gin.predict(model, corpus["graphs"][i]) for i in te)])
    return {
        "model": model, "history": history, "splits": (tr, va, te),
        "test_pred": preds, "test_truth": corpus["labels"][te],
        "train_seconds": time.time() - t0,
    }


@pytest.fixture(scope="session")
def rf_run(corpus):
    """Random-forest training shared by criteria 9 and 11."""
    split = data.make_split([str(i) for i in range(CORPUS_SIZE)], seed=0)
    tr = [int(i) for i in split.train]
    te = [int(i) for i in split.test]
    feats = np.array([metrics.summarize(g).as_vector() for g in corpus["graphs"]])
    t0 = time.time()
    model = forest.train_forest(feats[tr], corpus["labels"][tr], n_trees=50,
                                seed=RF_SEED,
                                feature_names=metrics.SUMMARY_FEATURE_NAMES)
    preds = forest.predict(model, feats[te])
    return {
        "model": model, "features": feats, "splits": (tr, te),
        "test_pred": preds, "test_truth": corpus["labels"][te],
        "train_seconds": time.time() - t0,
    }


class TestCriterion1Mapper:
    def test_path_graphs(self):
        t0 = time.time()
        for w in (8, 16, 32):
            graph = mapper.build_graph(solid_cube(w),
                                       mapper.MapperParams(n_intervals=4, overlap=0.25))
            assert graph.n_nodes == 4
            assert graph.n_edges == 3
            assert np.all(graph.phases == voxel.SOLID)
            assert graph.edges.tolist() == [[0, 1], [1, 2], [2, 3]]
            flat = mapper.build_graph(solid_cube(w),
                                      mapper.MapperParams(n_intervals=4, overlap=0.0))
            assert flat.n_nodes == 4
            assert flat.n_edges == 0
        elapsed = time.time() - t0
        assert elapsed < 1.0
        report(1, f"path graphs for W in 8/16/32, {elapsed:.2f}s")


class TestCriterion2MetricOracles:
    def test_200_random_graphs(self):
        t0 = time.time()
        rng = np.random.default_rng(2024)
        for _ in range(200):
            n = int(rng.integers(2, 13))
            g = random_connected_graph(n, rng)
            assert np.allclose(metrics.closeness(g), closeness_oracle(g), atol=1e-6)
            assert np.allclose(metrics.eigencentrality(g),
                               eigencentrality_oracle(g), atol=1e-6)
            assert np.allclose(metrics.pagerank(g), pagerank_oracle(g), atol=1e-6)
        elapsed = time.time() - t0
        assert elapsed < 30.0
        report(2, f"200 graphs vs Floyd-Warshall/eigh/linear-solve, {elapsed:.1f}s")


class TestCriterion3BoundsOrdering:
    def test_ordering(self):
        t0 = time.time()
        # thin-crack regime: the approximate penny factors respect the
        # classical ordering here (moderate alpha can exceed the HS shear
        # bound slightly)
        params = DemParams(mineral=MINERAL, aspect_ratio=0.15)
        for phi in np.linspace(0.0035, 0.35, 100):
            phi = float(phi)
            v_hi, v_lo = physics.voigt_reuss_bounds(MINERAL, VACUUM, phi)
            hs_hi, hs_lo = physics.hashin_shtrikman(MINERAL, VACUUM, phi)
            dem = physics.dem_moduli(params, phi)
            for attr in ("k", "mu"):
                assert getattr(v_lo, attr) == 0.0
                assert getattr(hs_lo, attr) == 0.0
                assert getattr(dem, attr) >= -1e-9
                assert getattr(dem, attr) <= getattr(hs_hi, attr) + 1e-9
                assert getattr(hs_hi, attr) <= getattr(v_hi, attr) + 1e-9
        elapsed = time.time() - t0
        assert elapsed < 5.0
        report(3, f"Reuss=HS-=0 <= DEM <= HS+ <= Voigt over 100 porosities, {elapsed:.1f}s")


class TestCriterion4DemIntegrator:
    def test_adaptive_vs_fixed_step(self):
        t0 = time.time()
        params = DemParams(mineral=MINERAL, aspect_ratio=0.25)
        assert physics.dem_moduli(params, 0.0) == MINERAL
        for phi in (0.05, 0.15, 0.30):
            adaptive = physics.dem_moduli(params, phi)
            oracle = rk4_dem_oracle(params, phi, step=1e-4)
            assert abs(adaptive.k - oracle.k) <= 1e-6 * abs(oracle.k)
            assert abs(adaptive.mu - oracle.mu) <= 1e-6 * abs(oracle.mu)
        elapsed = time.time() - t0
        assert elapsed < 5.0
        report(4, f"adaptive vs RK4(1e-4) within 1e-6 rel at 3 porosities, {elapsed:.1f}s")


class TestCriterion5VoigtIdentity:
    def test_thousand_identities(self):
        t0 = time.time()
        rng = np.random.default_rng(7)
        for _ in range(1000):
            k, mu = rng.uniform(1e-3, 500.0, 2)
            back = physics.voigt_average(physics.isotropic_stiffness(ElasticModuli(k, mu)))
            assert abs(back.k - k) <= 1e-12 * max(1.0, abs(k))
            assert abs(back.mu - mu) <= 1e-12 * max(1.0, abs(mu))
        elapsed = time.time() - t0
        assert elapsed < 1.0
        report(5, f"1000 random (K, mu) closures at 1e-12, {elapsed:.2f}s")


def _random_feature_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    feats = rng.normal(0, 1, (n, 12))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return mapper.RockGraph(params=mapper.MapperParams(), features=feats,
                            phases=np.zeros(n, dtype=np.uint8), edges=edges)


def _permuted(graph, perm):
    inv = np.empty(len(perm), dtype=np.int64)
    inv[perm] = np.arange(len(perm))
    edges = np.array([[min(inv[a], inv[b]), max(inv[a], inv[b])]
                      for a, b in graph.edges], dtype=np.int64).reshape(-1, 2)
    return mapper.RockGraph(params=graph.params, features=graph.features[perm],
                            phases=graph.phases[perm], edges=edges)


class TestCriterion6GradientCheck:
    def test_20_instances(self):
        t0 = time.time()
        worst = 0.0
        for inst in range(20):
            model = gin.GinModel.new(gin.GinConfig(hidden=4, head_hidden=4,
                                                   dropout=0.0), seed=100 + inst)
            graphs = [_random_feature_graph(2 + inst % 5, 0.5, 2 * inst),
                      _random_feature_graph(3 + inst % 4, 0.5, 2 * inst + 1)]
            targets = np.random.default_rng(inst).normal(0, 1, (2, 2))
            _, grads = gin.loss_and_grads(model, graphs, targets)
            h = 1e-5
            for name, t in model.parameters():
                flat = t.value.ravel()
                g = grads[name].ravel()
                for idx in range(flat.size):
                    orig = flat[idx]
                    flat[idx] = orig + h
                    lp, _ = gin.loss_and_grads(model, graphs, targets)
                    flat[idx] = orig - h
                    lm, _ = gin.loss_and_grads(model, graphs, targets)
                    flat[idx] = orig
                    fd = (lp - lm) / (2 * h)
                    rel = abs(fd - g[idx]) / max(abs(fd) + abs(g[idx]), 1e-8)
                    worst = max(worst, rel)
                    assert rel < 1e-4, f"inst {inst} {name}[{idx}]"
        elapsed = time.time() - t0
        assert elapsed < 60.0
        report(6, f"20 models, worst relative error {worst:.1e}, {elapsed:.0f}s")


class TestCriterion7Invariance:
    def test_invariance_and_sizes(self):
        t0 = time.time()
        model = gin.GinModel.new(gin.GinConfig(dropout=0.0), seed=3)
        rng = np.random.default_rng(11)
        for trial in range(100):
            n = int(rng.integers(2, 40))
            g = _random_feature_graph(n, 0.3, 500 + trial)
            perm = rng.permutation(n)
            assert np.array_equal(gin.forward(model, g),
                                  gin.forward(model, _permuted(g, perm)))
        for n in (1, 10, 500):
            out = gin.forward(model, _random_feature_graph(n, 0.01, n))
            assert out.shape == (2,)
            assert np.all(np.isfinite(out))
        elapsed = time.time() - t0
        assert elapsed < 30.0
        report(7, f"100 permutation pairs bit-exact; sizes 1/10/500 forwarded, {elapsed:.0f}s")


class TestCriterion8GnnLearning:
    def test_mixed_and_unseen_size(self, corpus, gnn_run):
        t0 = time.time()
        pred, truth = gnn_run["test_pred"], gnn_run["test_truth"]
        r2_k = data.r2(pred[:, 0], truth[:, 0])
        r2_mu = data.r2(pred[:, 1], truth[:, 1])
        assert r2_k >= 0.90
        assert r2_mu >= 0.90

        # held-out size: train on 32/48 only, evaluate on every 64 sample
        sizes = corpus["sizes"]
        small = [int(i) for i in np.flatnonzero(sizes != 64)]
        big = np.flatnonzero(sizes == 64)
        sub = data.make_split([str(i) for i in small], seed=0)
        tr = [int(i) for i in sub.train] + [int(i) for i in sub.test]
        va = [int(i) for i in sub.val]
        model = gin.GinModel.new(gin.GinConfig(dropout=GNN_TRAIN["dropout"]),
                                 seed=TRANSFER_SEED)
        gin.train(model, [corpus["graphs"][i] for i in tr], corpus["labels"][tr],
                  [corpus["graphs"][i] for i in va], corpus["labels"][va],
                  gin.TrainConfig(epochs=GNN_TRAIN["epochs"],
                                  batch_size=GNN_TRAIN["batch_size"],
                                  learning_rate=GNN_TRAIN["learning_rate"],
                                  seed=TRANSFER_SEED))
        pred_big = np.array([[p.k, p.mu] for p in
                             (gin.predict(model, corpus["graphs"][i]) for i in big)])
        truth_big = corpus["labels"][big]
        r2_k_unseen = data.r2(pred_big[:, 0], truth_big[:, 0])
        r2_mu_unseen = data.r2(pred_big[:, 1], truth_big[:, 1])
        assert r2_k_unseen >= 0.85
        assert r2_mu_unseen >= 0.85

        elapsed = corpus["build_seconds"] + gnn_run["train_seconds"] + (time.time() - t0)
        assert elapsed < 15 * 60
        report(8, f"test R2 K={r2_k:.3f} mu={r2_mu:.3f}; unseen-size "
                  f"K={r2_k_unseen:.3f} mu={r2_mu_unseen:.3f}; {elapsed:.0f}s total")


class TestCriterion9ForestLearning:
    def test_summary_forest(self, corpus, rf_run):
        t0 = time.time()
        pred, truth = rf_run["test_pred"], rf_run["test_truth"]
        r2_k = data.r2(pred[:, 0], truth[:, 0])
        r2_mu = data.r2(pred[:, 1], truth[:, 1])
        assert r2_k >= 0.80
        assert r2_mu >= 0.80
        importance = forest.feature_importance(rf_run["model"])
        assert np.all(importance >= 0.0)
        assert abs(importance.sum() - 1.0) <= 1e-9
        elapsed = rf_run["train_seconds"] + (time.time() - t0)
        assert elapsed < 120.0
        report(9, f"test R2 K={r2_k:.3f} mu={r2_mu:.3f}; importances sum to 1; "
                  f"{elapsed:.0f}s")


class TestCriterion10AspectRatioFit:
    def test_self_consistency(self):
        t0 = time.time()
        gen = DemParams(mineral=MINERAL, aspect_ratio=0.3)
        phis = np.linspace(0.05, 0.30, 10)
        samples = [(float(p), physics.dem_moduli(gen, float(p))) for p in phis]
        fit = physics.fit_aspect_ratio(samples, [0.1, 0.2, 0.25, 0.3, 0.4],
                                       mineral=MINERAL)
        assert fit.alpha == 0.3
        assert fit.r2_k == 1.0
        assert fit.r2_mu == 1.0
        elapsed = time.time() - t0
        assert elapsed < 30.0
        report(10, f"recovered alpha=0.3 with R2=1.0, {elapsed:.1f}s")


class TestCriterion11Determinism:
    def test_mapper_rerun_bit_identical(self, corpus):
        for i in (0, 1, 2, 249, 499):
            size, graph, lab = build_sample(i)
            assert size == corpus["sizes"][i]
            assert np.array_equal(graph.features, corpus["graphs"][i].features)
            assert np.array_equal(graph.edges, corpus["graphs"][i].edges)
            assert np.array_equal(graph.phases, corpus["graphs"][i].phases)
            assert [lab.k, lab.mu] == list(corpus["labels"][i])
        for w in (8, 16, 32):
            p = mapper.MapperParams(n_intervals=4, overlap=0.25)
            a = mapper.build_graph(solid_cube(w), p)
            b = mapper.build_graph(solid_cube(w), p)
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.edges, b.edges)

    def test_gnn_rerun_bit_identical(self, corpus, gnn_run):
        tr, va, te = gnn_run["splits"]
        model = gin.GinModel.new(gin.GinConfig(dropout=GNN_TRAIN["dropout"]),
                                 seed=GNN_SEED)
        history = gin.train(model, [corpus["graphs"][i] for i in tr],
                            corpus["labels"][tr],
                            [corpus["graphs"][i] for i in va], corpus["labels"][va],
                            gin.TrainConfig(epochs=GNN_TRAIN["epochs"],
                                            batch_size=GNN_TRAIN["batch_size"],
                                            learning_rate=GNN_TRAIN["learning_rate"],
                                            seed=GNN_SEED))
        assert history == gnn_run["history"]
        preds = np.array([[p.k, p.mu] for p in
                          (gin.predict(model, corpus["graphs"][i]) for i in te)])
        assert np.array_equal(preds, gnn_run["test_pred"])

    def test_rf_rerun_bit_identical(self, corpus, rf_run):
        tr, te = rf_run["splits"]
        feats = rf_run["features"]
        model = forest.train_forest(feats[tr], corpus["labels"][tr], n_trees=50,
                                    seed=RF_SEED,
                                    feature_names=metrics.SUMMARY_FEATURE_NAMES)
        preds = forest.predict(model, feats[te])
        assert np.array_equal(preds, rf_run["test_pred"])
        assert np.array_equal(forest.feature_importance(model),
                              forest.feature_importance(rf_run["model"]))
        report(11, "criteria 1, 8, 9 reruns reproduce graphs, histories and "
                   "predictions bit-identically")
