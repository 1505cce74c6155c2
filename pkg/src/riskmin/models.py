"""Trainable function families and the supervised training loop.

``TableModel`` holds one free output per discrete input, so on a finite input
set it can represent every function y -> W. ``MlpModel`` and ``ConvNet`` are
ordinary approximators for continuous inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .distributions import DiscreteJoint
from .numerics import Tensor, backward, make_optimizer, ops, step_tensors
from .numerics.tensor import ShapeError
from .risk import LabelMap, label_table


class TrainingDiverged(FloatingPointError):
    def __init__(self, iteration: int, value: float):
        self.iteration = iteration
        super().__init__(f"training objective became {value} at iteration {iteration}")


# ---------------------------------------------------------------- models


class Model:
    head = "identity"  # "identity" | "softmax"

    def parameters(self) -> list[Tensor]:
        raise NotImplementedError

    def logits(self, inputs) -> Tensor:
        raise NotImplementedError

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, arrays) -> None:
        for p, a in zip(self.parameters(), arrays):
            if p.data.shape != np.shape(a):
                raise ValueError(f"snapshot shape {np.shape(a)} != parameter {p.data.shape}")
            p.data = np.array(a, dtype=np.float64)

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, inputs) -> np.ndarray:
        return predict(self, inputs)


class TableModel(Model):
    """One parameter vector per discrete input index."""

    def __init__(self, n_inputs: int, dim: int, head: str = "identity"):
        self.head = head
        # zeros: the uniform simplex point under softmax, the origin otherwise
        self.table = Tensor(np.zeros((n_inputs, dim)), requires_grad=True, name="table")

    @property
    def n_inputs(self) -> int:
        return self.table.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.table]

    def logits(self, inputs) -> Tensor:
        idx = np.asarray(inputs).reshape(-1).astype(np.int64)
        onehot = np.zeros((len(idx), self.n_inputs))
        onehot[np.arange(len(idx)), idx] = 1.0
        return ops.matmul(onehot, self.table)


def _init_weight(gen: np.random.Generator, fan_in: int, shape, init: str, scale: float) -> np.ndarray:
    if init == "uniform":
        return gen.uniform(-scale, scale, size=shape)
    if init == "he":
        bound = np.sqrt(6.0 / fan_in)
        return gen.uniform(-bound, bound, size=shape)
    raise ValueError(f"unknown init {init!r}")


class MlpModel(Model):
    def __init__(
        self,
        sizes: list[int],
        head: str = "identity",
        activation: str = "relu",
        seed: int = 0,
        init: str = "uniform",
        init_scale: float = 0.05,
    ):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = list(sizes)
        self.head = head
        self.activation = activation
        gen = rngmod.stream(seed, "init/mlp")
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.weights.append(Tensor(_init_weight(gen, a, (a, b), init, init_scale), True, f"W{i}"))
            self.biases.append(Tensor(np.zeros(b), True, f"b{i}"))

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def logits(self, inputs) -> Tensor:
        h = inputs if isinstance(inputs, Tensor) else Tensor(np.asarray(inputs, dtype=np.float64).reshape(-1, self.sizes[0]))
        act = ops.relu if self.activation == "relu" else ops.tanh
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ops.add(ops.matmul(h, w), b)
            if i < last:
                h = act(h)
        return h


class ConvNet(Model):
    """conv(6,k5)-relu-pool-conv(16,k5)-relu-pool-flatten-128-relu-64-relu-classes."""

    def __init__(
        self,
        image_size: int = 28,
        n_classes: int = 10,
        seed: int = 0,
        conv_stride: int = 1,
        init: str = "uniform",
        init_scale: float = 0.05,
    ):
        self.head = "softmax"
        self.image_size = image_size
        self.conv_stride = conv_stride
        gen = rngmod.stream(seed, "init/convnet")
        s = image_size
        for _ in range(2):
            s = (s - 5) // conv_stride + 1
            if s < 2:
                raise ShapeError("convnet", [(1, 1, image_size, image_size)], f"conv stride {conv_stride} collapses the feature map")
            s //= 2
        if s < 1:
            raise ShapeError("convnet", [(1, 1, image_size, image_size)], "feature map vanished after pooling")
        self.flat = 16 * s * s
        self.c1w = Tensor(_init_weight(gen, 25, (6, 1, 5, 5), init, init_scale), True, "conv1.w")
        self.c1b = Tensor(np.zeros(6), True, "conv1.b")
        self.c2w = Tensor(_init_weight(gen, 150, (16, 6, 5, 5), init, init_scale), True, "conv2.w")
        self.c2b = Tensor(np.zeros(16), True, "conv2.b")
        self.mlp = MlpModel([self.flat, 128, 64, n_classes], head="softmax", seed=seed, init=init, init_scale=init_scale)

    def layers(self) -> list[str]:
        return [
            "conv(6,k5)", "relu", "maxpool", "conv(16,k5)", "relu", "maxpool",
            "flatten", "linear(128)", "relu", "linear(64)", "relu", "linear(10)",
        ]

    def parameters(self) -> list[Tensor]:
        return [self.c1w, self.c1b, self.c2w, self.c2b] + self.mlp.parameters()

    def logits(self, inputs) -> Tensor:
        x = np.asarray(inputs, dtype=np.float64).reshape(-1, 1, self.image_size, self.image_size)
        h = ops.maxpool2d(ops.relu(ops.conv2d(x, self.c1w, self.c1b, stride=self.conv_stride)))
        h = ops.maxpool2d(ops.relu(ops.conv2d(h, self.c2w, self.c2b, stride=self.conv_stride)))
        h = ops.reshape(h, (h.shape[0], self.flat))
        return self.mlp.logits(h)


def predict(model: Model, inputs, chunk: int = 8192) -> np.ndarray:
    """Model output in W: probabilities for softmax heads, raw values otherwise."""
    inputs = np.asarray(inputs)
    outs = []
    for start in range(0, len(inputs), chunk):
        z = model.logits(inputs[start : start + chunk]).data
        if model.head == "softmax":
            z = z - z.max(axis=1, keepdims=True)
            z = np.exp(z)
            z /= z.sum(axis=1, keepdims=True)
        outs.append(z)
    return np.concatenate(outs) if outs else np.zeros((0,))


def predict_class(model: Model, inputs) -> np.ndarray:
    """Index of the largest predicted probability; ties go to the lowest index."""
    return np.argmax(predict(model, inputs), axis=1)


# ---------------------------------------------------------------- data & config


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    weights: np.ndarray | None = None  # per-row probability mass for exact objectives

    def __post_init__(self) -> None:
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if len(self.inputs) == 0:
            raise ValueError("empty dataset")
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets differ in length")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.inputs)

    @classmethod
    def from_joint(cls, joint: DiscreteJoint, g: LabelMap, inputs: str = "index") -> "Dataset":
        """Every (y_i, x_j) cell as a row weighted by p_ij: the exact population objective."""
        G = label_table(joint, g)
        ii, jj = np.nonzero(joint.prob > 0)
        x_in = ii if inputs == "index" else joint.y_support[ii]
        return cls(x_in, G[ii, jj], joint.prob[ii, jj])


@dataclass
class TrainConfig:
    loss: str = "l2"
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 128  # 0 trains on the full dataset every step
    iterations: int = 1000
    checkpoint_every: int = 100
    seed: int = 0
    weight_decay: float | None = None
    select: str = "min_loss"  # or "last"

    def __post_init__(self) -> None:
        if self.checkpoint_every <= 0 or self.iterations % self.checkpoint_every:
            raise ValueError("iterations must be a multiple of checkpoint_every")
        if self.loss not in ("l2", "cross_entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.select not in ("min_loss", "last"):
            raise ValueError(f"unknown checkpoint rule {self.select!r}")


@dataclass
class TrainRecord:
    iterations: list[int] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    snapshots: list[list[np.ndarray]] = field(default_factory=list)
    selected: int | None = None

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "objectives": self.objectives, "selected": self.selected}


def objective(model: Model, data: Dataset, loss: str, rows=None) -> Tensor:
    inputs = data.inputs if rows is None else data.inputs[rows]
    targets = data.targets if rows is None else data.targets[rows]
    w = None
    if data.weights is not None:
        w = data.weights if rows is None else data.weights[rows]
        w = w / w.sum()
    z = model.logits(inputs)
    if loss == "l2":
        return ops.weighted_l2(z, targets, w)
    return ops.weighted_cross_entropy(z, targets, w)


def evaluate_objective(model: Model, data: Dataset, loss: str, chunk: int = 8192) -> float:
    if data.weights is not None or len(data) <= chunk:
        return float(objective(model, data, loss).data)
    total = 0.0
    for start in range(0, len(data), chunk):
        rows = np.arange(start, min(start + chunk, len(data)))
        total += float(objective(model, data, loss, rows).data) * len(rows)
    return total / len(data)


def _batches(n: int, batch: int, gen: np.random.Generator, weights=None):
    if weights is not None:
        p = weights / weights.sum()
        while True:
            yield gen.choice(n, size=batch, p=p)
    while True:
        perm = gen.permutation(n)
        for start in range(0, n - batch + 1, batch):
            yield perm[start : start + batch]


def train_supervised(model: Model, data, cfg: TrainConfig, g: LabelMap | None = None) -> tuple[Model, TrainRecord]:
    """Minimise the mean (or p-weighted) loss between model outputs and labels.

    ``data`` is a :class:`Dataset` or a :class:`DiscreteJoint` (enumerated into
    weighted cells with label map ``g``). The snapshot chosen by ``cfg.select``
    is loaded into ``model`` before returning.
    """
    if isinstance(data, DiscreteJoint):
        data = Dataset.from_joint(data, g or LabelMap())
    params = model.parameters()
    opt = make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    gen = rngmod.stream(cfg.seed, "train/batches")
    full = cfg.batch_size <= 0 or (data.weights is None and cfg.batch_size >= len(data))
    batches = None if full else _batches(len(data), cfg.batch_size, gen, data.weights)
    record = TrainRecord()

    def checkpoint(it: int) -> None:
        value = evaluate_objective(model, data, cfg.loss)
        if not np.isfinite(value):
            raise TrainingDiverged(it, value)
        record.iterations.append(it)
        record.objectives.append(value)
        record.snapshots.append(model.state())

    checkpoint(0)
    for it in range(1, cfg.iterations + 1):
        rows = None if full else next(batches)
        loss = objective(model, data, cfg.loss, rows)
        if not np.isfinite(loss.data):
            raise TrainingDiverged(it, float(loss.data))
        backward(loss)
        step_tensors(opt, params)
        if it % cfg.checkpoint_every == 0:
            checkpoint(it)

    record.selected = len(record.snapshots) - 1 if cfg.select == "last" else select_index(record)
    model.load_state(record.snapshots[record.selected])
    return model, record


def select_index(record: TrainRecord) -> int:
    if not record.objectives:
        raise ValueError("no checkpoints recorded")
    return int(np.argmin(record.objectives))  # first minimum = earliest on ties


def select_checkpoint(record: TrainRecord) -> list[np.ndarray]:
    """Snapshot with the smallest recorded training objective."""
    return record.snapshots[select_index(record)]


def exact_step_size(joint: DiscreteJoint, loss: str) -> float:
    """1 / Lipschitz constant of the gradient of the exact table objective.

    Row i of the table sees curvature 2 P(y_i) under L2 and at most P(y_i)/2
    under softmax cross-entropy.
    """
    p_max = float(joint.marginal_y().max())
    return 1.0 / (2.0 * p_max) if loss == "l2" else 2.0 / p_max
