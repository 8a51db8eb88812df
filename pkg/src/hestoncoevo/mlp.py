"""Evolvable multilayer perceptrons mapping flattened price surfaces to Heston
parameters.

Networks are plain numpy: a stack of hidden layers with one of four
activations, a linear 5-wide output head, and a logistic squash that pins
predictions inside the feasible box. Training is Adam on mini-batches of the
squared parameter error measured in unit-cube coordinates, so all five
outputs contribute on the same scale despite very different box ranges.

Variation operates on two levels: element-wise weight crossover/mutation for
architecturally identical parents, and structural mutations (insert/remove a
layer, resize a layer, swap the activation) plus a hybrid crossover when the
parents disagree on shape.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .params import HestonParams, ParamBox, clamp

ACTIVATION_NAMES = ("relu", "tanh", "leaky_relu", "elu")

ADD_WIDTHS = (32, 64, 128, 256)
MOD_WIDTHS = (16, 32, 64, 128, 256, 512)


class TrainingDiverged(Exception):
    """Loss went non-finite; callers drop the network to sentinel fitness."""


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    if name == "leaky_relu":
        return np.where(x > 0, x, 0.01 * x)
    if name == "elu":
        return np.where(x > 0, x, np.expm1(x))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0).astype(float)
    if name == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if name == "leaky_relu":
        return np.where(x > 0, 1.0, 0.01)
    if name == "elu":
        return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))
    raise ValueError(f"unknown activation {name!r}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _init_weight(n_out: int, n_in: int, activation: str, rng: np.random.Generator) -> np.ndarray:
    # He-uniform for the ReLU family, Xavier-uniform for tanh.
    if activation == "tanh":
        bound = math.sqrt(6.0 / (n_in + n_out))
    else:
        bound = math.sqrt(6.0 / n_in)
    return rng.uniform(-bound, bound, size=(n_out, n_in))


@dataclass
class NeuroConfig:
    population_size: int = 20
    survive_fraction: float = 0.2
    weight_mut_prob: float = 0.1
    weight_mut_std: float = 0.02
    arch_mut_prob: float = 0.05
    p_add: float = 0.3
    p_rm: float = 0.3
    p_mod: float = 0.5
    p_act: float = 0.2
    epochs_per_gen: int = 5
    feedback_epochs: int = 2
    learning_rate: float = 0.001
    lr_decay: float = 0.9
    batch_size: int = 64
    train_ratio: float = 0.7
    initial_widths: tuple = (128, 64)
    initial_activation: str = "relu"

    def arch_kind_probs(self) -> np.ndarray:
        """The four structural-mutation weights normalized to sum to one."""
        w = np.array([self.p_add, self.p_rm, self.p_mod, self.p_act], dtype=float)
        return w / w.sum()


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-feature affine input transform, frozen once fitted."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("scale components must be positive")

    @staticmethod
    def identity(dim: int) -> "NormalizationSpec":
        return NormalizationSpec(np.zeros(dim), np.ones(dim))

    @staticmethod
    def fit(features: np.ndarray) -> "NormalizationSpec":
        """Standardize from a batch of flattened surfaces (rows = samples).
        The transform is invariant to an overall price scale, so dividing by
        spot beforehand is unnecessary."""
        x = np.asarray(features, dtype=float)
        shift = x.mean(axis=0)
        scale = x.std(axis=0)
        return NormalizationSpec(shift, np.where(scale > 1e-8, scale, 1.0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale


class MlpGenome:
    """Architecture descriptor plus weights.

    ``widths`` are hidden-layer sizes; weights[ℓ] has shape (d_ℓ, d_{ℓ-1})
    with d_0 the flattened surface length and d_{L+1} = 5.
    """

    def __init__(self, widths, activation: str, weights, biases):
        self.widths = tuple(int(w) for w in widths)
        self.activation = str(activation)
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.validate()

    @staticmethod
    def create(input_dim: int, widths, activation: str, rng: np.random.Generator) -> "MlpGenome":
        dims = [int(input_dim)] + [int(w) for w in widths] + [5]
        weights = [_init_weight(dims[i + 1], dims[i], activation, rng) for i in range(len(dims) - 1)]
        biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        return MlpGenome(widths, activation, weights, biases)

    def validate(self) -> None:
        if len(self.widths) < 1:
            raise ValueError("at least one hidden layer is required")
        if any(w < 1 for w in self.widths):
            raise ValueError("hidden widths must be >= 1")
        if self.activation not in ACTIVATION_NAMES:
            raise ValueError(f"unknown activation {self.activation!r}")
        dims = [self.weights[0].shape[1]] + list(self.widths) + [5]
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match widths")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]):
                raise ValueError(f"layer {i} weight shape {w.shape} != {(dims[i + 1], dims[i])}")
            if b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} bias shape {b.shape} != {(dims[i + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite entries")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.widths)

    @property
    def total_nodes(self) -> int:
        return int(sum(self.widths))

    def arch_key(self) -> tuple:
        return (self.widths, self.activation)

    def clone(self) -> "MlpGenome":
        return MlpGenome(self.widths, self.activation,
                         [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def forward_unit(self, x: np.ndarray) -> np.ndarray:
        """Batch forward pass to unit-cube outputs, shape (B, 5)."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(self.activation, a @ w.T + b)
        z = a @ self.weights[-1].T + self.biases[-1]
        return _sigmoid(z)

    def _forward_backward(self, x: np.ndarray, y_unit: np.ndarray):
        """Loss and parameter gradients for one batch; loss is the plain mean
        over batch and the 5 outputs of the squared unit-cube error."""
        acts = [x]
        pre = []
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w.T + b
            pre.append(z)
            a = _act(self.activation, z)
            acts.append(a)
        z_out = a @ self.weights[-1].T + self.biases[-1]
        y_hat = _sigmoid(z_out)
        diff = y_hat - y_unit
        loss = float(np.mean(diff * diff))
        n = diff.size
        dz = (2.0 / n) * diff * y_hat * (1.0 - y_hat)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = dz.T @ acts[layer]
            grads_b[layer] = dz.sum(axis=0)
            if layer > 0:
                da = dz @ self.weights[layer]
                dz = da * _act_grad(self.activation, pre[layer - 1])
        return loss, grads_w, grads_b

    def to_json_dict(self) -> dict:
        return {"widths": list(self.widths),
                "activation": self.activation,
                "weights": [w.reshape(-1).tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @staticmethod
    def from_json_dict(d: dict) -> "MlpGenome":
        widths = [int(w) for w in d["widths"]]
        input_dim = None
        weights, biases = [], []
        dims_out = widths + [5]
        flat_ws = d["weights"]
        # Infer input dim from the first matrix size.
        input_dim = len(flat_ws[0]) // dims_out[0]
        dims = [input_dim] + dims_out
        for i, flat in enumerate(flat_ws):
            weights.append(np.asarray(flat, dtype=float).reshape(dims[i + 1], dims[i]))
        for b in d["biases"]:
            biases.append(np.asarray(b, dtype=float))
        return MlpGenome(widths, d["activation"], weights, biases)


def forward(net: MlpGenome, surface_flat: np.ndarray, norm: NormalizationSpec,
            box: ParamBox) -> HestonParams:
    """Predict parameters for one flattened surface: normalize, run the net,
    map the logistic outputs affinely into the box (then through the standard
    clamp, which only matters for boxes whose variance bounds touch zero)."""
    x = norm.apply(np.asarray(surface_flat, dtype=float).reshape(1, -1))
    unit = net.forward_unit(x)[0]
    return clamp(box.from_unit(unit), box)


@dataclass
class AdamState:
    """Per-layer first/second moment estimates; persists across training calls
    within a network's lifetime and is discarded on architecture change."""

    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0

    @staticmethod
    def for_net(net: MlpGenome) -> "AdamState":
        return AdamState(m_w=[np.zeros_like(w) for w in net.weights],
                         v_w=[np.zeros_like(w) for w in net.weights],
                         m_b=[np.zeros_like(b) for b in net.biases],
                         v_b=[np.zeros_like(b) for b in net.biases])


def _dataset_arrays(dataset, box: ParamBox):
    """Accepts either a list of (surface, params) pairs or a pre-built
    (features, unit_targets) array tuple; the latter lets drivers convert a
    growing dataset once per generation instead of once per network."""
    if isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        return dataset
    x = np.asarray([np.asarray(s, dtype=float) for s, _ in dataset])
    y = np.asarray([box.to_unit(theta) for _, theta in dataset])
    return x, y


def train_epochs(net: MlpGenome, adam: AdamState, dataset, cfg: NeuroConfig,
                 rng: np.random.Generator, norm: NormalizationSpec, box: ParamBox,
                 epochs: int | None = None, val_dataset=None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> list:
    """Adam mini-batch training on (surface, params) pairs.

    The dataset is shuffled once into a train/validation split per
    ``train_ratio``, then trained for ``epochs`` (default
    ``cfg.epochs_per_gen``) with per-epoch shuffling and a learning rate of
    ``learning_rate * lr_decay**epoch`` within this call. Returns one
    ``(train_mse, val_mse)`` tuple per epoch; ``val_mse`` is NaN when the
    validation split is empty. ``val_dataset`` substitutes an external
    validation set (e.g. held-out surfaces) for the internal split in that
    second column. Raises :class:`TrainingDiverged` on non-finite loss.
    """
    if epochs is None:
        epochs = cfg.epochs_per_gen
    if epochs == 0:
        return []
    x_all, y_all = _dataset_arrays(dataset, box)
    if len(x_all) == 0:
        raise ValueError("dataset must be non-empty")
    x_all = norm.apply(x_all)
    n = len(x_all)
    perm = rng.permutation(n)
    n_train = max(1, math.ceil(cfg.train_ratio * n))
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    x_tr, y_tr = x_all[train_idx], y_all[train_idx]
    x_va, y_va = x_all[val_idx], y_all[val_idx]
    if val_dataset is not None:
        x_va, y_va = _dataset_arrays(val_dataset, box)
        x_va = norm.apply(x_va)

    curve = []
    for epoch in range(epochs):
        lr = cfg.learning_rate * (cfg.lr_decay ** epoch)
        order = rng.permutation(len(x_tr))
        for start in range(0, len(order), cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            loss, gw, gb = net._forward_backward(x_tr[sel], y_tr[sel])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite batch loss at epoch {epoch}")
            adam.t += 1
            bc1 = 1.0 - beta1 ** adam.t
            bc2 = 1.0 - beta2 ** adam.t
            for i in range(len(net.weights)):
                adam.m_w[i] = beta1 * adam.m_w[i] + (1 - beta1) * gw[i]
                adam.v_w[i] = beta2 * adam.v_w[i] + (1 - beta2) * gw[i] * gw[i]
                net.weights[i] -= lr * (adam.m_w[i] / bc1) / (np.sqrt(adam.v_w[i] / bc2) + eps)
                adam.m_b[i] = beta1 * adam.m_b[i] + (1 - beta1) * gb[i]
                adam.v_b[i] = beta2 * adam.v_b[i] + (1 - beta2) * gb[i] * gb[i]
                net.biases[i] -= lr * (adam.m_b[i] / bc1) / (np.sqrt(adam.v_b[i] / bc2) + eps)
        train_mse = float(np.mean((net.forward_unit(x_tr) - y_tr) ** 2))
        val_mse = float(np.mean((net.forward_unit(x_va) - y_va) ** 2)) if len(x_va) else math.nan
        if not math.isfinite(train_mse):
            raise TrainingDiverged(f"non-finite epoch loss at epoch {epoch}")
        curve.append((train_mse, val_mse))
    return curve


def prediction_mse(net: MlpGenome, dataset, norm: NormalizationSpec, box: ParamBox) -> float:
    """Mean squared unit-cube parameter error of the net on a dataset."""
    x, y = _dataset_arrays(dataset, box)
    return float(np.mean((net.forward_unit(norm.apply(x)) - y) ** 2))


def weight_crossover(a: MlpGenome, b: MlpGenome) -> MlpGenome:
    """Element-wise mean of two architecturally identical parents."""
    if a.arch_key() != b.arch_key():
        raise ValueError("weight_crossover requires identical architectures")
    return MlpGenome(a.widths, a.activation,
                     [(wa + wb) / 2.0 for wa, wb in zip(a.weights, b.weights)],
                     [(ba + bb) / 2.0 for ba, bb in zip(a.biases, b.biases)])


def hybrid_crossover(a: MlpGenome, b: MlpGenome, rng: np.random.Generator) -> MlpGenome:
    """Structural blend for parents of different architecture.

    Depth is the deeper parent's; widths shared by both become floor means
    while the deeper parent's extra layers keep their width; the activation is
    picked uniformly. Weights are freshly initialized and, wherever both
    parents supply a layer at the same position (hidden layers aligned from
    the input, output heads aligned with each other), the overlapping
    top-left block is overwritten with the element-wise parent mean.
    """
    la, lb = a.n_hidden_layers, b.n_hidden_layers
    deep, shallow = (a, b) if la >= lb else (b, a)
    widths = []
    for i in range(deep.n_hidden_layers):
        if i < shallow.n_hidden_layers:
            widths.append((a.widths[i] + b.widths[i]) // 2)
        else:
            widths.append(deep.widths[i])
    activation = a.activation if rng.random() < 0.5 else b.activation
    child = MlpGenome.create(a.input_dim, widths, activation, rng)

    def _blend(target_w, target_b, wa, ba, wb, bb):
        r = min(target_w.shape[0], wa.shape[0], wb.shape[0])
        c = min(target_w.shape[1], wa.shape[1], wb.shape[1])
        target_w[:r, :c] = 0.5 * (wa[:r, :c] + wb[:r, :c])
        rb = min(len(target_b), len(ba), len(bb))
        target_b[:rb] = 0.5 * (ba[:rb] + bb[:rb])

    n_shared_hidden = min(la, lb)
    for i in range(n_shared_hidden):
        _blend(child.weights[i], child.biases[i],
               a.weights[i], a.biases[i], b.weights[i], b.biases[i])
    _blend(child.weights[-1], child.biases[-1],
           a.weights[-1], a.biases[-1], b.weights[-1], b.biases[-1])
    child.validate()
    return child


def mutate_weights(net: MlpGenome, prob: float, std: float, rng: np.random.Generator) -> MlpGenome:
    """Perturb each scalar weight/bias independently with probability ``prob``
    by N(0, std^2) noise. Returns a new genome; draws are unconditional so the
    stream is mask-independent."""
    new = net.clone()
    for arrs in (new.weights, new.biases):
        for arr in arrs:
            mask = rng.random(arr.shape) < prob
            noise = rng.standard_normal(arr.shape) * std
            arr += mask * noise
    return new


def _insert_layer(net: MlpGenome, rng: np.random.Generator) -> MlpGenome:
    pos = int(rng.integers(0, net.n_hidden_layers + 1))
    width = int(ADD_WIDTHS[rng.integers(0, len(ADD_WIDTHS))])
    widths = list(net.widths)
    widths.insert(pos, width)
    dims_in = [net.input_dim] + list(net.widths)
    new_weights = []
    new_biases = []
    for i in range(len(net.weights) + 1):
        if i < pos:
            new_weights.append(net.weights[i].copy())
            new_biases.append(net.biases[i].copy())
        elif i == pos:
            new_weights.append(_init_weight(width, dims_in[pos], net.activation, rng))
            new_biases.append(np.zeros(width))
        elif i == pos + 1:
            out_dim = net.weights[pos].shape[0]
            new_weights.append(_init_weight(out_dim, width, net.activation, rng))
            new_biases.append(net.biases[pos].copy())
        else:
            new_weights.append(net.weights[i - 1].copy())
            new_biases.append(net.biases[i - 1].copy())
    return MlpGenome(widths, net.activation, new_weights, new_biases)


def _remove_layer(net: MlpGenome, rng: np.random.Generator) -> MlpGenome:
    pos = int(rng.integers(0, net.n_hidden_layers))
    widths = [w for i, w in enumerate(net.widths) if i != pos]
    in_dim = net.input_dim if pos == 0 else net.widths[pos - 1]
    out_dim = net.weights[pos + 1].shape[0]
    new_weights, new_biases = [], []
    for i in range(len(net.weights)):
        if i < pos:
            new_weights.append(net.weights[i].copy())
            new_biases.append(net.biases[i].copy())
        elif i == pos:
            new_weights.append(_init_weight(out_dim, in_dim, net.activation, rng))
            new_biases.append(net.biases[pos + 1].copy())
        elif i > pos + 1:
            new_weights.append(net.weights[i].copy())
            new_biases.append(net.biases[i].copy())
    return MlpGenome(widths, net.activation, new_weights, new_biases)


def _resize_layer(net: MlpGenome, rng: np.random.Generator) -> MlpGenome:
    pos = int(rng.integers(0, net.n_hidden_layers))
    width = int(MOD_WIDTHS[rng.integers(0, len(MOD_WIDTHS))])
    old = net.widths[pos]
    widths = list(net.widths)
    widths[pos] = width
    new = net.clone()
    new.widths = tuple(widths)
    in_dim = net.weights[pos].shape[1]
    w_in = _init_weight(width, in_dim, net.activation, rng)
    b_in = np.zeros(width)
    keep = min(old, width)
    w_in[:keep, :] = net.weights[pos][:keep, :]
    b_in[:keep] = net.biases[pos][:keep]
    out_dim = net.weights[pos + 1].shape[0]
    w_out = _init_weight(out_dim, width, net.activation, rng)
    w_out[:, :keep] = net.weights[pos + 1][:, :keep]
    new.weights[pos] = w_in
    new.biases[pos] = b_in
    new.weights[pos + 1] = w_out
    new.validate()
    return new


def _swap_activation(net: MlpGenome, rng: np.random.Generator) -> MlpGenome:
    options = [a for a in ACTIVATION_NAMES if a != net.activation]
    choice = options[rng.integers(0, len(options))]
    new = net.clone()
    new.activation = choice
    return new


def mutate_architecture(net: MlpGenome, cfg: NeuroConfig, rng: np.random.Generator) -> MlpGenome:
    """With probability ``arch_mut_prob`` apply one structural mutation, its
    kind drawn from the normalized (add, remove, resize, activation) weights.
    A remove drawn on a single-hidden-layer net is redrawn. Returns the input
    genome unchanged (same object) when no mutation fires, so callers can
    detect architecture changes with ``is`` and reset optimizer state."""
    if rng.random() >= cfg.arch_mut_prob:
        return net
    probs = cfg.arch_kind_probs()
    while True:
        kind = int(rng.choice(4, p=probs))
        if kind == 1 and net.n_hidden_layers <= 1:
            continue
        break
    if kind == 0:
        out = _insert_layer(net, rng)
    elif kind == 1:
        out = _remove_layer(net, rng)
    elif kind == 2:
        out = _resize_layer(net, rng)
    else:
        out = _swap_activation(net, rng)
    out.validate()
    return out


def architecture_stats(pop: list) -> dict:
    """Population summary: average depth, node-count statistics, the modal
    architecture with its frequency, the modal activation and the number of
    distinct activations."""
    if not pop:
        raise ValueError("population is empty")
    layers = np.array([g.n_hidden_layers for g in pop], dtype=float)
    nodes = np.array([g.total_nodes for g in pop], dtype=float)
    arch_counts: dict = {}
    act_counts: dict = {}
    for g in pop:
        arch_counts[g.widths] = arch_counts.get(g.widths, 0) + 1
        act_counts[g.activation] = act_counts.get(g.activation, 0) + 1
    most_common = max(arch_counts.items(), key=lambda kv: (kv[1], -list(arch_counts).index(kv[0])))
    primary_act = max(act_counts.items(), key=lambda kv: (kv[1], -list(act_counts).index(kv[0])))
    return {
        "avg_layers": float(layers.mean()),
        "avg_nodes": float(nodes.mean()),
        "std_nodes": float(nodes.std()),
        "min_nodes": int(nodes.min()),
        "max_nodes": int(nodes.max()),
        "most_common_arch": "[" + ",".join(str(w) for w in most_common[0]) + "]",
        "frequency": f"{most_common[1]}/{len(pop)}",
        "primary_activation": primary_act[0],
        "activation_diversity": len(act_counts),
    }
