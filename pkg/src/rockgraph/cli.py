"""Subcommand CLI composing the pipeline end to end.

Every report-producing subcommand writes machine-readable CSV and, unless
--no-plot is given, a rendered PNG figure next to it. All subcommands are
deterministic given their flags and seeds. ROCKGRAPH_THREADS sets the worker
count for corpus-level operations (default 1).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import data, forest, gin, mapper, metrics, physics, voxel
from .errors import ConvergenceError, IntegrationError, RawFormatError


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("ROCKGRAPH_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    workers = _thread_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _mineral_from_args(parser, args) -> tuple[physics.ElasticModuli, float]:
    """(mineral moduli, aspect ratio) from --mineral-config or explicit flags."""
    alpha = args.alpha
    if args.mineral_config:
        doc = json.loads(Path(args.mineral_config).read_text())
        mineral = physics.ElasticModuli(float(doc["k_gpa"]), float(doc["mu_gpa"]))
        if alpha is None:
            alpha = float(doc.get("aspect_ratio", 0.25))
    elif args.mineral_k is not None and args.mineral_mu is not None:
        mineral = physics.ElasticModuli(args.mineral_k, args.mineral_mu)
    else:
        parser.error("provide --mineral-config or both --mineral-k and --mineral-mu")
    if alpha is None:
        alpha = 0.25
    if not (0.0 < alpha <= 1.0):
        parser.error(f"--alpha must be in (0, 1], got {alpha}")
    return mineral, alpha


def _add_mineral_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mineral-config", default=None,
                   help="JSON file with k_gpa, mu_gpa and optional aspect_ratio")
    p.add_argument("--mineral-k", type=float, default=None, help="mineral bulk modulus, GPa")
    p.add_argument("--mineral-mu", type=float, default=None, help="mineral shear modulus, GPa")
    p.add_argument("--alpha", type=float, default=None,
                   help="penny-crack aspect ratio in (0, 1] (default from config or 0.25)")


def cmd_gen(parser, args) -> int:
    if min(args.dims) <= 0:
        parser.error("--dims must be positive")
    if args.radius_min <= 0 or args.radius_max < args.radius_min:
        parser.error("need 0 < --radius-min <= --radius-max")
    grid = voxel.gen_sphere_pack(args.dims, args.n_spheres,
                                 (args.radius_min, args.radius_max),
                                 args.seed, args.resolution)
    voxel.write_raw(grid, args.out)
    print(f"wrote {args.out}: dims={grid.dims} porosity={voxel.porosity(grid):.4f}")
    return 0


def cmd_map(parser, args) -> int:
    try:
        params = mapper.MapperParams(n_intervals=args.n_intervals,
                                     overlap=args.overlap, axis=args.axis)
    except ValueError as exc:
        parser.error(str(exc))
    grid = voxel.read_raw(args.input)
    graph = mapper.build_graph(grid, params)
    mapper.save_graph(graph, args.out)
    print(f"wrote {args.out}: {graph.n_nodes} nodes, {graph.n_edges} edges")
    return 0


def cmd_metrics(parser, args) -> int:
    rows = []
    if args.manifest:
        samples = data.read_manifest(args.manifest)
        graphs = _pmap(lambda s: mapper.load_graph(s.graph_path), samples)
        for s, g in zip(samples, graphs):
            labels = None if s.labels is None else (s.labels.k, s.labels.mu)
            rows.append((s.id, s.porosity, metrics.summarize(g), labels))
    elif args.graphs:
        graphs = _pmap(mapper.load_graph, args.graphs)
        for path, g in zip(args.graphs, graphs):
            rows.append((Path(path).stem, None, metrics.summarize(g), None))
    else:
        parser.error("provide --graphs or --manifest")
    metrics.write_summary_csv(rows, args.out)
    print(f"wrote {args.out}: {len(rows)} rows")
    return 0


PHYSICS_HEADER = ["phi", "k_voigt", "k_reuss", "k_hs_low", "k_hs_high", "k_dem",
                  "mu_voigt", "mu_reuss", "mu_hs_low", "mu_hs_high", "mu_dem"]


def cmd_physics(parser, args) -> int:
    mineral, alpha = _mineral_from_args(parser, args)
    if args.steps < 1:
        parser.error("--steps must be >= 1")
    if not (0.0 <= args.phi_min <= args.phi_max < 1.0):
        parser.error("need 0 <= --phi-min <= --phi-max < 1")
    pore = physics.VACUUM
    dem_params = physics.DemParams(mineral=mineral, inclusion=pore, aspect_ratio=alpha)
    phis = np.linspace(args.phi_min, args.phi_max, args.steps)
    table = []
    for phi in phis:
        phi = float(phi)
        v_hi, v_lo = physics.voigt_reuss_bounds(mineral, pore, phi)
        hs_hi, hs_lo = physics.hashin_shtrikman(mineral, pore, phi)
        dem = physics.dem_moduli(dem_params, phi)
        table.append([phi, v_hi.k, v_lo.k, hs_lo.k, hs_hi.k, dem.k,
                      v_hi.mu, v_lo.mu, hs_lo.mu, hs_hi.mu, dem.mu])
    with Path(args.out).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PHYSICS_HEADER)
        for row in table:
            writer.writerow([repr(v) for v in row])
    print(f"wrote {args.out}: {len(table)} rows")
    if args.plot:
        from . import plots
        arr = np.asarray(table)
        series = {name: arr[:, i] for i, name in enumerate(PHYSICS_HEADER)}
        png = Path(args.out).with_suffix(".png")
        plots.plot_physics_sweep(arr[:, 0], series, png)
        print(f"wrote {png}")
    return 0


def _make_one_sample(job) -> data.Sample:
    (sample_id, size, target_phi, radius_range, seed, resolution, params,
     dem_params, noise_sigma, voxel_path, graph_path) = job
    grid = voxel.gen_sphere_pack_to_porosity(
        (size, size, size), target_phi, radius_range, seed, resolution)
    voxel.write_raw(grid, voxel_path)
    graph = mapper.build_graph(grid, params)
    mapper.save_graph(graph, graph_path)
    labels = data.synth_labels(grid, dem_params, noise_sigma, seed)
    return data.Sample(id=sample_id, graph_path=str(graph_path),
                       voxel_path=str(voxel_path), subcube_size=size,
                       porosity=voxel.porosity(grid), labels=labels)


def cmd_make_dataset(parser, args) -> int:
    mineral, alpha = _mineral_from_args(parser, args)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes or min(sizes) <= 0:
        parser.error("--sizes must be a comma list of positive ints")
    if args.count < 1:
        parser.error("--count must be >= 1")
    if not (0.0 <= args.phi_min <= args.phi_max <= 1.0):
        parser.error("need 0 <= --phi-min <= --phi-max <= 1")
    try:
        params = mapper.MapperParams(n_intervals=args.n_intervals,
                                     overlap=args.overlap, axis=args.axis)
    except ValueError as exc:
        parser.error(str(exc))
    dem_params = physics.DemParams(mineral=mineral, aspect_ratio=alpha)
    out_dir = Path(args.out_dir)
    (out_dir / "voxels").mkdir(parents=True, exist_ok=True)
    (out_dir / "graphs").mkdir(parents=True, exist_ok=True)

    jobs = []
    for i in range(args.count):
        size = sizes[i % len(sizes)]
        sample_id = f"s{i:04d}_d{size}"
        seed = data.sample_seed(args.seed, sample_id)
        # porosity target from the per-sample stream, radii scaled to size
        target_phi = args.phi_min + (args.phi_max - args.phi_min) * \
            np.random.default_rng(seed).random()
        radius_range = (args.radius_frac_min * size, args.radius_frac_max * size)
        jobs.append((sample_id, size, target_phi, radius_range, seed,
                     args.resolution, params, dem_params, args.noise_sigma,
                     out_dir / "voxels" / f"{sample_id}.raw",
                     out_dir / "graphs" / f"{sample_id}.json"))
    samples = _pmap(_make_one_sample, jobs)
    manifest = out_dir / "manifest.csv"
    data.write_manifest(samples, manifest)
    phis = [s.porosity for s in samples]
    print(f"wrote {manifest}: {len(samples)} samples, porosity "
          f"[{min(phis):.3f}, {max(phis):.3f}]")
    return 0


def _split_samples(samples, split_seed):
    by_id = {s.id: s for s in samples}
    split = data.make_split([s.id for s in samples], seed=split_seed)
    return split, by_id


def _summary_features(samples):
    graphs = _pmap(lambda s: mapper.load_graph(s.graph_path), samples)
    feats = np.array([metrics.summarize(g).as_vector() for g in graphs])
    labels = np.array([[s.labels.k, s.labels.mu] for s in samples])
    return feats, labels


def cmd_train_rf(parser, args) -> int:
    samples = data.read_manifest(args.manifest)
    if any(s.labels is None for s in samples):
        parser.error("manifest must carry labels for training")
    split, by_id = _split_samples(samples, args.split_seed)
    x_train, y_train = _summary_features([by_id[i] for i in split.train])
    model = forest.train_forest(
        x_train, y_train, n_trees=args.trees, seed=args.seed,
        max_depth=args.max_depth, min_leaf=args.min_leaf,
        feature_names=metrics.SUMMARY_FEATURE_NAMES)
    forest.save_forest(model, args.model_out)
    importance = forest.feature_importance(model)
    with Path(args.importance_out).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "importance"])
        for name, value in zip(metrics.SUMMARY_FEATURE_NAMES, importance):
            writer.writerow([name, repr(float(value))])
    for part in ("val", "test"):
        ids = getattr(split, part)
        if not ids:
            continue
        x, y = _summary_features([by_id[i] for i in ids])
        pred = forest.predict(model, x)
        print(f"{part}: R2_K={data.r2(pred[:, 0], y[:, 0]):.4f} "
              f"R2_mu={data.r2(pred[:, 1], y[:, 1]):.4f} "
              f"MSE={data.mse(pred, y):.4f}")
    print(f"wrote {args.model_out} and {args.importance_out}")
    if args.plot:
        from . import plots
        png = Path(args.importance_out).with_suffix(".png")
        plots.plot_importance(metrics.SUMMARY_FEATURE_NAMES, importance, png)
        print(f"wrote {png}")
    return 0


def cmd_train_gnn(parser, args) -> int:
    samples = data.read_manifest(args.manifest)
    if any(s.labels is None for s in samples):
        parser.error("manifest must carry labels for training")
    split, by_id = _split_samples(samples, args.split_seed)
    try:
        train_cfg = gin.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                                    learning_rate=args.lr, dropout=args.dropout,
                                    seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))

    def load_part(ids):
        part = [by_id[i] for i in ids]
        graphs = _pmap(lambda s: mapper.load_graph(s.graph_path), part)
        labels = np.array([[s.labels.k, s.labels.mu] for s in part])
        return graphs, labels

    train_graphs, train_labels = load_part(split.train)
    val_graphs, val_labels = load_part(split.val)
    model = gin.GinModel.new(gin.GinConfig(), seed=args.seed)
    history = gin.train(model, train_graphs, train_labels, val_graphs,
                        val_labels, train_cfg)
    gin.save_model(model, args.model_out)
    with Path(args.history_out).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, train_mse, val_mse in history:
            writer.writerow([epoch, repr(train_mse), repr(val_mse)])
    print(f"wrote {args.model_out} and {args.history_out}; "
          f"final train_mse={history[-1][1]:.5f} val_mse={history[-1][2]:.5f}")
    if args.plot:
        from . import plots
        png = Path(args.history_out).with_suffix(".png")
        arr = np.asarray(history, dtype=np.float64)
        plots.plot_history(arr[:, 0], arr[:, 1], arr[:, 2], png)
        print(f"wrote {png}")
    return 0


def _load_any_model(path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("model_type")
    if kind == "gin":
        return "gin", gin.load_model(path)
    if kind == "forest":
        return "forest", forest.load_forest(path)
    raise ValueError(f"unknown model_type {kind!r} in {path}")


def _predict_graph(kind, model, graph) -> tuple[float, float]:
    if kind == "gin":
        pred = gin.predict(model, graph)
        return pred.k, pred.mu
    vec = metrics.summarize(graph).as_vector()
    k, mu = forest.predict(model, vec)
    return max(float(k), 0.0), max(float(mu), 0.0)


def cmd_predict(parser, args) -> int:
    kind, model = _load_any_model(args.model)
    graphs = _pmap(mapper.load_graph, args.graphs)
    with Path(args.out).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "k_gpa", "mu_gpa"])
        for path, graph in zip(args.graphs, graphs):
            k, mu = _predict_graph(kind, model, graph)
            writer.writerow([Path(path).stem, repr(k), repr(mu)])
    print(f"wrote {args.out}: {len(args.graphs)} predictions")
    return 0


def cmd_eval(parser, args) -> int:
    kind, model = _load_any_model(args.model)
    samples = data.read_manifest(args.manifest)
    if any(s.labels is None for s in samples):
        parser.error("manifest must carry labels for evaluation")
    if args.partition == "all":
        part = samples
    else:
        split, by_id = _split_samples(samples, args.split_seed)
        part = [by_id[i] for i in getattr(split, args.partition)]
    if not part:
        parser.error(f"partition {args.partition!r} is empty")
    graphs = _pmap(lambda s: mapper.load_graph(s.graph_path), part)
    preds = np.array([_predict_graph(kind, model, g) for g in graphs])
    truth = np.array([[s.labels.k, s.labels.mu] for s in part])
    with Path(args.out).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "true_k_gpa", "true_mu_gpa", "pred_k_gpa", "pred_mu_gpa"])
        for s, (pk, pmu) in zip(part, preds):
            writer.writerow([s.id, repr(s.labels.k), repr(s.labels.mu),
                             repr(float(pk)), repr(float(pmu))])
    r2_k = data.r2(preds[:, 0], truth[:, 0])
    r2_mu = data.r2(preds[:, 1], truth[:, 1])
    print(f"{args.partition}: n={len(part)} R2_K={r2_k:.4f} R2_mu={r2_mu:.4f} "
          f"MSE_K={data.mse(preds[:, 0], truth[:, 0]):.4f} "
          f"MSE_mu={data.mse(preds[:, 1], truth[:, 1]):.4f}")
    print(f"wrote {args.out}")
    if args.plot:
        from . import plots
        png = Path(args.out).with_suffix(".png")
        plots.plot_parity(truth, preds, png, r2_values=(r2_k, r2_mu))
        print(f"wrote {png}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rockgraph",
        description="Voxel volumes to cluster graphs to elastic-moduli predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a sphere-pack voxel volume")
    p.add_argument("--dims", type=int, nargs=3, required=True, metavar=("NX", "NY", "NZ"))
    p.add_argument("--n-spheres", type=int, required=True)
    p.add_argument("--radius-min", type=float, required=True)
    p.add_argument("--radius-max", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=float, default=2e-6, help="meters per voxel")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("map", help="convert a voxel volume to a cluster graph")
    p.add_argument("--input", required=True, help="raw voxel file (with .json sidecar)")
    p.add_argument("--n-intervals", type=int, default=10)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--axis", choices=("x", "y", "z"), default="x")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("metrics", help="emit per-graph summary feature rows")
    p.add_argument("--graphs", nargs="*", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("physics", help="bounds and DEM sweep over porosity")
    _add_mineral_flags(p)
    p.add_argument("--phi-min", type=float, default=0.0)
    p.add_argument("--phi-max", type=float, default=0.35)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_physics)

    p = sub.add_parser("make-dataset",
                       help="generate a labeled synthetic corpus plus manifest")
    _add_mineral_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--sizes", default="32,48,64", help="comma list of cube sizes")
    p.add_argument("--phi-min", type=float, default=0.05)
    p.add_argument("--phi-max", type=float, default=0.40)
    p.add_argument("--radius-frac-min", type=float, default=0.12,
                   help="sphere radius lower bound as a fraction of cube size")
    p.add_argument("--radius-frac-max", type=float, default=0.22)
    p.add_argument("--n-intervals", type=int, default=10)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--axis", choices=("x", "y", "z"), default="x")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="label noise std, GPa")
    p.add_argument("--resolution", type=float, default=2e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train-rf", help="train the random-forest regressor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--min-leaf", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-out", required=True)
    p.add_argument("--importance-out", required=True)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_train_rf)

    p = sub.add_parser("train-gnn", help="train the graph network regressor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--dropout", type=float, default=gin.DROPOUT_TUNED)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-out", required=True)
    p.add_argument("--history-out", required=True)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_train_gnn)

    p = sub.add_parser("predict", help="predict moduli for graph files")
    p.add_argument("--model", required=True)
    p.add_argument("--graphs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="evaluate a model on a manifest partition")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--partition", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(parser, args)
    except SystemExit as exc:  # parser.error inside a command
        return int(exc.code or 0)
    except (ValueError, RuntimeError, OSError, ConvergenceError,
            IntegrationError, RawFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
