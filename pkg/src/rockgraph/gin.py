"""Graph-level regressor for elastic moduli.

Three rounds of sum-aggregation message passing with a learnable self-weight
per round (the GIN update), a per-round sum readout concatenated into one
graph vector, and a dense head with dropout. Differentiation is reverse-mode
via the autodiff module; optimization is Adam on mean-squared error.

Nodes are put into a canonical order (Weisfeiler-Lehman color refinement on
the standardized features) before any forward pass, which fixes every
summation order. Outputs are therefore bit-identical under node permutation
and across isomorphic inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import Standardizer, apply_standardizer, fit_standardizer, invert_standardizer
from .mapper import N_FEATURES, RockGraph
from .physics import ElasticModuli

# dropout presets: the tuned rate and the architecture-table reference rate
DROPOUT_TUNED = 0.5
DROPOUT_REFERENCE = 0.3


@dataclass(frozen=True)
class GinConfig:
    in_dim: int = 12
    hidden: int = 16
    n_layers: int = 3
    head_hidden: int = 32
    out_dim: int = 2
    dropout: float = DROPOUT_TUNED

    def __post_init__(self):
        if min(self.in_dim, self.hidden, self.n_layers, self.head_hidden, self.out_dim) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def readout_dim(self) -> int:
        return self.n_layers * self.hidden


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    dropout: float | None = None  # overrides the model rate when set
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.dropout is not None and not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


class GinLayer:
    """One message-passing round: h <- MLP((1 + eps) h + sum of neighbors)."""

    def __init__(self, eps, w1, b1, w2, b2):
        self.eps = eps
        self.w1, self.b1 = w1, b1
        self.w2, self.b2 = w2, b2

    def tensors(self):
        return [("eps", self.eps), ("w1", self.w1), ("b1", self.b1),
                ("w2", self.w2), ("b2", self.b2)]


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


class GinModel:
    """Layered message-passing regressor plus standardization state."""

    def __init__(self, config: GinConfig, layers, head,
                 feature_standardizer=None, label_standardizer=None,
                 readout_standardizer=None):
        self.config = config
        self.layers = layers
        self.head = head
        self.feature_standardizer = feature_standardizer
        self.label_standardizer = label_standardizer
        # conditions the head input: sum pooling scales with node count, so
        # raw readouts sit far from the head's initialization regime
        self.readout_standardizer = readout_standardizer
        self.history: list[tuple[int, float, float]] = []
        self.trained = False

    @classmethod
    def new(cls, config: GinConfig, seed: int = 0) -> "GinModel":
        rng = np.random.default_rng(seed)

        def bias(dim):
            # small random offsets keep ReLU pre-activations off the exact kink
            return ad.parameter(rng.uniform(-0.05, 0.05, dim))

        layers = []
        in_dim = config.in_dim
        for _ in range(config.n_layers):
            layers.append(GinLayer(
                eps=ad.parameter(0.0),
                w1=ad.parameter(_glorot(rng, in_dim, config.hidden)),
                b1=bias(config.hidden),
                w2=ad.parameter(_glorot(rng, config.hidden, config.hidden)),
                b2=bias(config.hidden),
            ))
            in_dim = config.hidden
        dims = [config.readout_dim, config.head_hidden, config.head_hidden, config.out_dim]
        head = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            head.append((ad.parameter(_glorot(rng, d_in, d_out)), bias(d_out)))
        return cls(config, layers, head)

    def parameters(self) -> list[tuple[str, ad.Tensor]]:
        params = []
        for i, layer in enumerate(self.layers):
            for name, t in layer.tensors():
                params.append((f"layer{i}.{name}", t))
        for i, (w, b) in enumerate(self.head):
            params.append((f"head{i}.w", w))
            params.append((f"head{i}.b", b))
        return params

    def zero_grads(self) -> None:
        for _, t in self.parameters():
            t.zero_grad()


def _wl_colors(features: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Color refinement: nodes get equal colors iff the message-passing
    scheme cannot distinguish them."""
    n = features.shape[0]
    _, colors = np.unique(features, axis=0, return_inverse=True)
    if n == 0:
        return colors
    nbrs = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    for _ in range(n):
        if colors.max() == n - 1:
            break  # all nodes already distinguishable
        keys = [(int(colors[v]), tuple(sorted(int(colors[u]) for u in nbrs[v])))
                for v in range(n)]
        uniq = {k: i for i, k in enumerate(sorted(set(keys)))}
        new = np.array([uniq[k] for k in keys], dtype=np.int64)
        if np.array_equal(new, colors):
            break
        colors = new
    return colors


@dataclass
class PreparedGraph:
    """Standardized features in canonical node order plus edge index arrays."""

    features: np.ndarray  # (n, in_dim) float64
    src: np.ndarray       # directed endpoints, both directions, sorted by (dst, src)
    dst: np.ndarray
    n: int


def prepare_graph(graph: RockGraph, standardizer: Standardizer | None,
                  in_dim: int = N_FEATURES) -> PreparedGraph:
    feats = graph.features
    if feats.shape[1] != in_dim:
        raise ValueError(f"expected {in_dim} node features, got {feats.shape[1]}")
    if standardizer is not None:
        feats = apply_standardizer(standardizer, feats)
    else:
        feats = np.array(feats, dtype=np.float64)
    edges = graph.edges
    colors = _wl_colors(feats, edges)
    perm = np.argsort(colors, kind="stable")
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    feats = feats[perm]
    if edges.size:
        e = inv[edges]
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((src, dst))
        src, dst = src[order], dst[order]
    else:
        src = np.empty(0, dtype=np.int64)
        dst = np.empty(0, dtype=np.int64)
    return PreparedGraph(features=feats, src=src, dst=dst, n=feats.shape[0])


def _readout(model: GinModel, prep: PreparedGraph) -> ad.Tensor:
    h = ad.Tensor(prep.features)
    seg = np.zeros(prep.n, dtype=np.int64)
    reads = []
    for layer in model.layers:
        agg = ad.scatter_rows(h, prep.src, prep.dst, prep.n)
        s = ad.add(ad.mul(h, ad.add(layer.eps, 1.0)), agg)
        z = ad.relu(ad.add(ad.matmul(s, layer.w1), layer.b1))
        h = ad.relu(ad.add(ad.matmul(z, layer.w2), layer.b2))
        reads.append(ad.segment_sum(h, seg, 1))
    return ad.concat_cols(reads)


def _forward_prepared(model: GinModel, prep: PreparedGraph, train_mode: bool,
                      rng: np.random.Generator | None) -> ad.Tensor:
    rate = model.config.dropout
    if train_mode and rate > 0.0 and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")
    x = _readout(model, prep)
    rs = model.readout_standardizer
    if rs is not None:
        x = ad.mul(ad.add(x, ad.Tensor(-rs.mean)), ad.Tensor(1.0 / rs.std))
    for i, (w, b) in enumerate(model.head):
        x = ad.add(ad.matmul(x, w), b)
        if i < len(model.head) - 1:
            x = ad.relu(x)
            if train_mode and rate > 0.0:
                mask = (rng.random(x.value.shape) >= rate) / (1.0 - rate)
                x = ad.dropout_mask(x, mask)
    return x


def forward(model: GinModel, graph: RockGraph, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Model-space (standardized) output pair for one graph."""
    prep = prepare_graph(graph, model.feature_standardizer, model.config.in_dim)
    return _forward_prepared(model, prep, train_mode, rng).value[0]


def loss_and_grads(model: GinModel, graphs, targets, train_mode: bool = False,
                   rng: np.random.Generator | None = None):
    """Mean squared error over the batch plus gradients for every parameter.

    graphs may be RockGraph or PreparedGraph instances; targets is (n, 2) in
    model (standardized) space. Gradients are returned as a name -> array
    dict and are also left on the parameter tensors.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if len(graphs) == 0:
        raise ValueError("batch must be nonempty")
    if targets.shape[0] != len(graphs):
        raise ValueError("graphs and targets length mismatch")
    model.zero_grads()
    total = 0.0
    scale = 1.0 / len(graphs)
    for g, y in zip(graphs, targets):
        if not isinstance(g, PreparedGraph):
            g = prepare_graph(g, model.feature_standardizer, model.config.in_dim)
        out = _forward_prepared(model, g, train_mode, rng)
        loss = ad.mse_loss(out, y.reshape(1, -1))
        ad.backward(loss, seed=scale)
        total += float(loss.value)
    grads = {}
    for name, t in model.parameters():
        grads[name] = np.zeros_like(t.value) if t.grad is None else t.grad
    return total * scale, grads


def _eval_mse(model: GinModel, preps, targets) -> float:
    total = 0.0
    for prep, y in zip(preps, targets):
        out = _forward_prepared(model, prep, False, None).value[0]
        total += float(((out - y) ** 2).mean())
    return total / len(preps)


def train(model: GinModel, train_graphs, train_labels, val_graphs, val_labels,
          config: TrainConfig) -> list[tuple[int, float, float]]:
    """Adam training loop; returns per-epoch (epoch, train_mse, val_mse).

    Standardizers are fit on the training set only. The model keeps the
    weights from the epoch with the lowest validation MSE. Fully
    deterministic for a fixed config seed.
    """
    if len(train_graphs) == 0 or len(val_graphs) == 0:
        raise ValueError("train and validation sets must be nonempty")
    if config.dropout is not None:
        model.config = replace(model.config, dropout=config.dropout)
    train_y_raw = np.atleast_2d(np.asarray(train_labels, dtype=np.float64))
    val_y_raw = np.atleast_2d(np.asarray(val_labels, dtype=np.float64))
    model.feature_standardizer = fit_standardizer(
        np.vstack([g.features for g in train_graphs]))
    model.label_standardizer = fit_standardizer(train_y_raw)
    train_y = apply_standardizer(model.label_standardizer, train_y_raw)
    val_y = apply_standardizer(model.label_standardizer, val_y_raw)
    in_dim = model.config.in_dim
    train_prep = [prepare_graph(g, model.feature_standardizer, in_dim) for g in train_graphs]
    val_prep = [prepare_graph(g, model.feature_standardizer, in_dim) for g in val_graphs]
    model.readout_standardizer = fit_standardizer(
        np.vstack([_readout(model, p).value for p in train_prep]))

    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    adam_m = {name: np.zeros_like(t.value) for name, t in params}
    adam_v = {name: np.zeros_like(t.value) for name, t in params}
    beta1, beta2, eps_hat = 0.9, 0.999, 1e-8
    step = 0
    history = []
    best_val = np.inf
    best_state = [t.value.copy() for _, t in params]
    n = len(train_prep)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_loss, grads = loss_and_grads(
                model, [train_prep[i] for i in idx], train_y[idx],
                train_mode=True, rng=rng)
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite training loss {batch_loss} at epoch {epoch}")
            step += 1
            for name, t in params:
                g = grads[name]
                adam_m[name] = beta1 * adam_m[name] + (1 - beta1) * g
                adam_v[name] = beta2 * adam_v[name] + (1 - beta2) * g * g
                m_hat = adam_m[name] / (1 - beta1 ** step)
                v_hat = adam_v[name] / (1 - beta2 ** step)
                t.value = t.value - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps_hat)
            batch_losses.append(batch_loss)
        train_mse = float(np.mean(batch_losses))
        val_mse = _eval_mse(model, val_prep, val_y)
        if not np.isfinite(val_mse):
            raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
        history.append((epoch, train_mse, val_mse))
        if val_mse < best_val:
            best_val = val_mse
            best_state = [t.value.copy() for _, t in params]
    for (name, t), value in zip(params, best_state):
        t.value = value
    model.history = history
    model.trained = True
    return history


def predict(model: GinModel, graph: RockGraph) -> ElasticModuli:
    """De-standardized (K, mu) prediction in GPa, clamped at >= 0."""
    if not model.trained:
        raise RuntimeError("model has not been trained")
    out = forward(model, graph, train_mode=False)
    if model.label_standardizer is not None:
        out = invert_standardizer(model.label_standardizer, out)
    return ElasticModuli(max(float(out[0]), 0.0), max(float(out[1]), 0.0))


def _standardizer_doc(s: Standardizer | None):
    if s is None:
        return None
    return {"mean": [float(v) for v in s.mean], "std": [float(v) for v in s.std]}


def _standardizer_from(doc):
    if doc is None:
        return None
    return Standardizer(mean=np.asarray(doc["mean"], dtype=np.float64),
                        std=np.asarray(doc["std"], dtype=np.float64))


def save_model(model: GinModel, path) -> None:
    doc = {
        "format_version": 1,
        "model_type": "gin",
        "config": {
            "in_dim": model.config.in_dim,
            "hidden": model.config.hidden,
            "n_layers": model.config.n_layers,
            "head_hidden": model.config.head_hidden,
            "out_dim": model.config.out_dim,
            "dropout": model.config.dropout,
        },
        "layers": [
            {
                "eps": float(layer.eps.value),
                "w1": layer.w1.value.tolist(),
                "b1": layer.b1.value.tolist(),
                "w2": layer.w2.value.tolist(),
                "b2": layer.b2.value.tolist(),
            }
            for layer in model.layers
        ],
        "head": [
            {"w": w.value.tolist(), "b": b.value.tolist()} for w, b in model.head
        ],
        "feature_standardizer": _standardizer_doc(model.feature_standardizer),
        "label_standardizer": _standardizer_doc(model.label_standardizer),
        "readout_standardizer": _standardizer_doc(model.readout_standardizer),
        "history": [[e, t, v] for e, t, v in model.history],
        "trained": model.trained,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path) -> GinModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("model_type") != "gin":
        raise ValueError(f"{path} is not a gin model file")
    config = GinConfig(**doc["config"])
    layers = [
        GinLayer(
            eps=ad.parameter(layer["eps"]),
            w1=ad.parameter(np.asarray(layer["w1"])),
            b1=ad.parameter(np.asarray(layer["b1"])),
            w2=ad.parameter(np.asarray(layer["w2"])),
            b2=ad.parameter(np.asarray(layer["b2"])),
        )
        for layer in doc["layers"]
    ]
    head = [(ad.parameter(np.asarray(h["w"])), ad.parameter(np.asarray(h["b"])))
            for h in doc["head"]]
    model = GinModel(config, layers, head,
                     feature_standardizer=_standardizer_from(doc["feature_standardizer"]),
                     label_standardizer=_standardizer_from(doc["label_standardizer"]),
                     readout_standardizer=_standardizer_from(doc["readout_standardizer"]))
    model.history = [(int(e), float(t), float(v)) for e, t, v in doc["history"]]
    model.trained = bool(doc["trained"])
    return model
