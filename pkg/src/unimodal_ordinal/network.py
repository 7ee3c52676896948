"""Small fully-connected network with analytic backprop, Adam and a plateau schedule.

The hidden stack is ReLU layers with He-normal weights.  The output layer
depends on the head:

* ``poisson``    1 unit, softplus -> Poisson head
* ``binomial``   1 unit, sigmoid  -> binomial head
* ``softmax``    K units, plain softmax (cross-entropy baseline)
* ``regression`` 1 unit, identity; the loss squashes it to (K-1)*sigmoid
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import losses as L
from . import metrics as M
from .errors import TrainingDivergedError
from .heads import (
    BINOMIAL,
    POISSON,
    HeadConfig,
    head_backward_batch,
    head_forward,
    sigmoid,
    softplus,
)

SOFTMAX = "softmax"
REGRESSION = "regression"
MODEL_HEADS = (POISSON, BINOMIAL, SOFTMAX, REGRESSION)

# softplus underflows to 0 for very negative inputs; keep the rate positive
LAMBDA_FLOOR = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass
class ModelState:
    layer_dims: list[int]
    head: str
    num_classes: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    tau: float = 1.0
    learn_tau: bool = False
    tau_raw: float = 0.0
    seed: int = 0

    @property
    def out_dim(self) -> int:
        return self.num_classes if self.head == SOFTMAX else 1

    def head_config(self) -> HeadConfig:
        return HeadConfig(self.head, self.num_classes, self.tau, self.learn_tau, self.tau_raw)

    @property
    def tau_effective(self) -> float:
        if self.head not in (POISSON, BINOMIAL):
            return float("nan")
        return self.head_config().temperature

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved, layer by layer."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    tau_raw: float | None = None

    def flat(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out


def _check_loss(head: str, loss) -> L.LossKind:
    loss = L.LossKind(loss)
    if (head == REGRESSION) != (loss is L.LossKind.SQUASHED_REGRESSION):
        raise ValueError(f"loss {loss.value!r} is not compatible with head {head!r}")
    return loss


def init_model(layer_dims, head: str, num_classes: int, seed: int = 0, tau: float = 1.0, learn_tau: bool = False) -> ModelState:
    """He-normal weights (std sqrt(2/fan_in)), zero biases, tau_raw = 0.

    ``layer_dims`` is ``[input_dim, hidden_1, ..., hidden_L]``; the output
    layer is added according to ``head``.
    """
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError("need an input width and at least one hidden layer")
    if any(d < 1 for d in dims):
        raise ValueError(f"layer widths must be positive, got {dims}")
    if head not in MODEL_HEADS:
        raise ValueError(f"head must be one of {MODEL_HEADS}, got {head!r}")
    if head in (POISSON, BINOMIAL):
        HeadConfig(head, num_classes, tau, learn_tau)  # validates
    elif num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    out_dim = num_classes if head == SOFTMAX else 1
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:] + [out_dim]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelState(
        layer_dims=dims,
        head=head,
        num_classes=int(num_classes),
        weights=weights,
        biases=biases,
        tau=float(tau),
        learn_tau=bool(learn_tau) and head in (POISSON, BINOMIAL),
        tau_raw=0.0,
        seed=int(seed),
    )


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _run(model: ModelState, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.layer_dims[0]:
        raise ValueError(f"expected features of shape (N, {model.layer_dims[0]}), got {X.shape}")
    acts = [X]
    pre = []
    a = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        if i < last:
            acts.append(a)
    return acts, pre


def _head_input(model: ModelState, z_out):
    z = z_out[:, 0]
    if model.head == POISSON:
        return np.maximum(softplus(z), LAMBDA_FLOOR)
    return sigmoid(z)


def forward(model: ModelState, X) -> np.ndarray:
    """Per-example probability rows (N, K), or (N,) class-scale scores for regression."""
    _, pre = _run(model, X)
    z = pre[-1]
    if model.head == SOFTMAX:
        return _softmax(z)
    if model.head == REGRESSION:
        return (model.num_classes - 1) * sigmoid(z[:, 0])
    return head_forward(_head_input(model, z), model.head_config())


def _data_loss_and_dz(model: ModelState, z_out, y, loss: L.LossKind):
    K = model.num_classes
    if model.head == REGRESSION:
        f = z_out[:, 0]
        val = L.squashed_regression(f, y, K)
        return val, L.squashed_regression_grad(f, y, K)[:, None], None
    if model.head == SOFTMAX:
        mass = _softmax(z_out)
        G = L.loss_backward(loss, mass, y)
        dz = mass * (G - (G * mass).sum(axis=1, keepdims=True))
        return L.loss_value(loss, mass, y), dz, None
    cfg = model.head_config()
    f = _head_input(model, z_out)
    mass = head_forward(f, cfg)
    G = L.loss_backward(loss, mass, y)
    d_f, d_raw = head_backward_batch(f, cfg, G)
    z = z_out[:, 0]
    if model.head == POISSON:
        d_z = np.where(f > LAMBDA_FLOOR, d_f * sigmoid(z), 0.0)
    else:
        d_z = d_f * f * (1.0 - f)
    return L.loss_value(loss, mass, y), d_z[:, None], d_raw


def l2_penalty(model: ModelState, l2: float) -> float:
    return float(l2 * sum(np.sum(W * W) for W in model.weights))


def objective(model: ModelState, X, y, loss, l2: float = 0.0) -> float:
    """Mean data loss plus ``l2 * sum(W**2)`` over weight matrices."""
    loss = _check_loss(model.head, loss)
    _, pre = _run(model, X)
    val, _, _ = _data_loss_and_dz(model, pre[-1], np.asarray(y), loss)
    return val + l2_penalty(model, l2)


def backward(model: ModelState, X, y, loss, l2: float = 0.0):
    """Returns ``(data_loss, Gradients)``; gradients include the l2 term.

    Decay applies to weight matrices only, not biases or tau_raw.
    """
    loss = _check_loss(model.head, loss)
    y = np.asarray(y)
    acts, pre = _run(model, X)
    val, dz, d_raw = _data_loss_and_dz(model, pre[-1], y, loss)
    n_layers = len(model.weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        gW[i] = acts[i].T @ dz + 2.0 * l2 * model.weights[i]
        gb[i] = dz.sum(axis=0)
        if i:
            dz = (dz @ model.weights[i].T) * (pre[i - 1] > 0)
    return val, Gradients(gW, gb, d_raw if model.learn_tau else None)


@dataclass
class OptimizerState:
    lr: float = 1e-3
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def init_optimizer(model: ModelState, lr: float = 1e-3) -> OptimizerState:
    shapes = [p.shape for p in model.parameters()] + ([()] if model.learn_tau else [])
    return OptimizerState(lr=lr, step=0, m=[np.zeros(s) for s in shapes], v=[np.zeros(s) for s in shapes])


def adam_step(model: ModelState, grads: Gradients, opt: OptimizerState):
    """One bias-corrected Adam update.  Returns new ``(model, opt)``; inputs are untouched."""
    params = model.parameters()
    g = grads.flat()
    if model.learn_tau:
        params = params + [np.array(model.tau_raw)]
        g = g + [np.array(grads.tau_raw)]
    if len(g) != len(opt.m):
        raise ValueError("gradient list does not match optimizer state")
    t = opt.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    new_p, new_m, new_v = [], [], []
    for p, gi, m, v in zip(params, g, opt.m, opt.v):
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * gi
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * gi * gi
        new_p.append(p - opt.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    n = len(model.weights)
    updated = replace(
        model,
        weights=[new_p[2 * i] for i in range(n)],
        biases=[new_p[2 * i + 1] for i in range(n)],
        tau_raw=float(new_p[-1]) if model.learn_tau else model.tau_raw,
    )
    return updated, OptimizerState(lr=opt.lr, step=t, m=new_m, v=new_v)


class PlateauSchedule:
    """Divide the learning rate by ``factor`` after ``patience`` epochs without
    improvement of a higher-is-better signal, never going below ``floor``."""

    def __init__(self, lr: float, patience: int = 10, factor: float = 10.0, floor: float = 1e-5):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.floor = floor
        self.best = -math.inf
        self.wait = 0

    def update(self, value: float) -> float:
        if value > self.best:
            self.best = value
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr = max(self.lr / self.factor, self.floor)
                self.wait = 0
        return self.lr


@dataclass
class TrainConfig:
    head: str = POISSON
    loss: str = L.LossKind.CROSS_ENTROPY.value
    tau: float = 1.0
    learn_tau: bool = False
    hidden: tuple[int, ...] = (64, 32)
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    l2: float = 1e-4
    patience: int = 10
    lr_floor: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.head not in MODEL_HEADS:
            raise ValueError(f"head must be one of {MODEL_HEADS}, got {self.head!r}")
        _check_loss(self.head, self.loss)
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")
        if not self.lr > 0 or self.l2 < 0:
            raise ValueError("lr must be positive and l2 nonnegative")
        if not 0 < self.lr_floor <= self.lr:
            raise ValueError("lr_floor must lie in (0, lr]")
        if not self.hidden:
            raise ValueError("need at least one hidden layer")


HISTORY_COLUMNS = (
    "epoch", "lr", "train_loss", "valid_loss", "acc_argmax", "acc_exp", "qwk_argmax",
    "qwk_exp", "top2", "top3", "frac_unimodal", "tau_effective",
)


def evaluate_model(model: ModelState, X, y):
    """MetricsReport under the argmax and the expectation rule."""
    out = forward(model, X)
    if model.head == REGRESSION:
        return (
            M.evaluate_regression(out, y, model.num_classes, M.PredictionRule.ARGMAX),
            M.evaluate_regression(out, y, model.num_classes, M.PredictionRule.EXPECTATION),
        )
    return M.evaluate(out, y, M.PredictionRule.ARGMAX), M.evaluate(out, y, M.PredictionRule.EXPECTATION)


def train(train_set, valid_set, cfg: TrainConfig):
    """Fit a model; returns ``(model, history)`` with one dict per epoch.

    Each epoch shuffles with a generator seeded only by ``cfg.seed``, so runs
    with different heads see the same batch order.  ``train_loss`` is the
    data loss over the whole training set after the epoch's last update.  The
    learning rate drops when validation QWK (argmax rule) plateaus.
    """
    K = train_set.num_classes
    if valid_set.num_classes != K or valid_set.num_features != train_set.num_features:
        raise ValueError("train and validation sets disagree on K or feature width")
    loss = _check_loss(cfg.head, cfg.loss)
    model = init_model([train_set.num_features, *cfg.hidden], cfg.head, K, cfg.seed, cfg.tau, cfg.learn_tau)
    opt = init_optimizer(model, cfg.lr)
    sched = PlateauSchedule(cfg.lr, cfg.patience, 10.0, cfg.lr_floor)
    order_rng = np.random.default_rng([cfg.seed, 2])
    X, y = train_set.features, train_set.labels
    N = len(train_set)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        perm = order_rng.permutation(N)
        for b, start in enumerate(range(0, N, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            val, grads = backward(model, X[idx], y[idx], loss, cfg.l2)
            if not math.isfinite(val):
                raise TrainingDivergedError(epoch, b, val)
            model, opt = adam_step(model, grads, opt)
        lr_used = opt.lr
        train_loss = objective(model, X, y, loss, 0.0)
        valid_loss = objective(model, valid_set.features, valid_set.labels, loss, 0.0)
        r_arg, r_exp = evaluate_model(model, valid_set.features, valid_set.labels)
        history.append({
            "epoch": epoch,
            "lr": lr_used,
            "train_loss": train_loss,
            "valid_loss": valid_loss,
            "acc_argmax": r_arg.accuracy,
            "acc_exp": r_exp.accuracy,
            "qwk_argmax": r_arg.qwk,
            "qwk_exp": r_exp.qwk,
            "top2": r_arg.top2,
            "top3": r_arg.top3,
            "frac_unimodal": r_arg.frac_unimodal,
            "tau_effective": model.tau_effective,
        })
        opt.lr = sched.update(r_arg.qwk)
    return model, history


def format_value(v) -> str:
    """CSV cell text; floats use the shortest round-trip repr."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_history(history, path, extra: dict | None = None) -> None:
    cols = list(extra or {}) + list(HISTORY_COLUMNS)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in history:
            vals = list((extra or {}).values()) + [row[c] for c in HISTORY_COLUMNS]
            fh.write(",".join(format_value(v) for v in vals) + "\n")


def checkpoint_dict(model: ModelState) -> dict:
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "layer_dims": list(model.layer_dims),
        "head": {
            "kind": model.head,
            "num_classes": model.num_classes,
            "tau": model.tau,
            "learn_tau": model.learn_tau,
        },
        "tau_raw": model.tau_raw,
        "rng_seed": model.seed,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def dumps_checkpoint(model: ModelState) -> str:
    return json.dumps(checkpoint_dict(model), indent=1, sort_keys=True) + "\n"


def save_checkpoint(model: ModelState, path) -> None:
    Path(path).write_text(dumps_checkpoint(model))


def loads_checkpoint(text: str) -> ModelState:
    doc = json.loads(text)
    version = doc.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema_version {version!r}")
    head = doc["head"]
    model = ModelState(
        layer_dims=[int(d) for d in doc["layer_dims"]],
        head=head["kind"],
        num_classes=int(head["num_classes"]),
        weights=[np.array(W, dtype=np.float64) for W in doc["weights"]],
        biases=[np.array(b, dtype=np.float64) for b in doc["biases"]],
        tau=float(head["tau"]),
        learn_tau=bool(head["learn_tau"]),
        tau_raw=float(doc["tau_raw"]),
        seed=int(doc["rng_seed"]),
    )
    dims = model.layer_dims + [model.out_dim]
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        if W.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
            raise ValueError(f"checkpoint layer {i} has inconsistent shapes {W.shape}, {b.shape}")
    if len(model.weights) != len(dims) - 1:
        raise ValueError("checkpoint layer count does not match layer_dims")
    return model


def load_checkpoint(path) -> ModelState:
    return loads_checkpoint(Path(path).read_text())
