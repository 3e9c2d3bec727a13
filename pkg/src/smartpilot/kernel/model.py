"""Sequential models: specs, parameters, forward, gradients, training, checkpoints.

A model is an ordered list of (LayerSpec, weight, bias) plus the seed that
produced its initialization. Identical (seed, specs) give bit-identical
parameters; training with identical (seed, config, data) gives bit-identical
results. Parameters are value snapshots: forward/gradients never mutate them,
train returns a fresh ModelParams.

Sequence handling: an lstm layer always computes the full hidden sequence.
Consecutive lstm layers pass sequences along; any non-lstm successor (or the
model end) consumes the final step's hidden vector, which is how a two-layer
recurrent stack feeds a dense head.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .losses import Composite, CrossEntropy, make_loss
from .optim import make_optimizer
from .rng import glorot_uniform, layer_rng

CHECKPOINT_VERSION = 1


class DimensionError(ValueError):
    """Input/parameter shape mismatch; message names the offending layer."""


class NumericError(ArithmeticError):
    """Non-finite loss or gradient."""


class InputError(ValueError):
    """Invalid training input (empty dataset, bad config)."""


@dataclass
class Tensor:
    """Flat row-major float64 storage with an explicit shape."""

    shape: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        n = 1
        for s in self.shape:
            if s <= 0:
                raise ValueError(f"non-positive dim in shape {self.shape}")
            n *= s
        if n != self.values.size:
            raise ValueError(f"shape {self.shape} holds {n} values, got {self.values.size}")

    @classmethod
    def from_array(cls, arr) -> "Tensor":
        a = np.asarray(arr, dtype=np.float64)
        return cls(a.shape if a.ndim > 0 else (1,), a.reshape(-1).copy())

    def array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # dense | lstm | activation
    input_dim: int
    output_dim: int
    activation: str = "identity"
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in ("dense", "lstm", "activation"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ValueError(f"non-positive dims in {self}")
        if self.activation not in L.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "activation" and self.input_dim != self.output_dim:
            raise ValueError("activation layer must keep its dimension")
        if self.kind == "lstm" and self.activation != "identity":
            raise ValueError("lstm gates are fixed; use activation='identity'")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 10
    batch_size: int = 32
    optimizer: str = "adam"
    loss_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InputError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")


def _param_shapes(spec: LayerSpec) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if spec.kind == "dense":
        return (spec.output_dim, spec.input_dim), (spec.output_dim,)
    if spec.kind == "lstm":
        H = spec.output_dim
        return (4 * H, spec.input_dim + H), (4 * H,)
    return (1,), (1,)  # activation: placeholder scalars, never used


def init_layer(spec: LayerSpec, seed: int, layer_index: int) -> tuple[Tensor, Tensor]:
    w_shape, b_shape = _param_shapes(spec)
    if spec.kind == "activation":
        return Tensor.from_array(np.zeros(w_shape)), Tensor.from_array(np.zeros(b_shape))
    rng = layer_rng(seed, layer_index)
    if spec.kind == "dense":
        W = glorot_uniform(rng, w_shape, spec.input_dim, spec.output_dim)
        b = np.zeros(b_shape)
    else:  # lstm: fan over the stacked matmul input and the useful output width
        H = spec.output_dim
        W = glorot_uniform(rng, w_shape, spec.input_dim + H, H)
        b = np.zeros(b_shape)
        b[H : 2 * H] = 1.0  # forget-gate bias opens the memory path at init
    return Tensor.from_array(W), Tensor.from_array(b)


@dataclass
class ModelParams:
    layers: list  # list of (LayerSpec, Tensor weight, Tensor bias)
    seed: int

    def __post_init__(self):
        prev_out = None
        for idx, (spec, W, b) in enumerate(self.layers):
            w_shape, b_shape = _param_shapes(spec)
            if tuple(W.shape) != w_shape or tuple(b.shape) != b_shape:
                raise DimensionError(
                    f"layer {idx}: parameter shapes {W.shape}/{b.shape} do not match spec {spec}"
                )
            if prev_out is not None and spec.input_dim != prev_out:
                raise DimensionError(
                    f"layer {idx}: input_dim {spec.input_dim} != previous output_dim {prev_out}"
                )
            prev_out = spec.output_dim

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].output_dim

    def copy(self) -> "ModelParams":
        return ModelParams(
            [(s, Tensor(W.shape, W.values.copy()), Tensor(b.shape, b.values.copy())) for s, W, b in self.layers],
            self.seed,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams) or self.seed != other.seed:
            return False
        if len(self.layers) != len(other.layers):
            return False
        for (s1, w1, b1), (s2, w2, b2) in zip(self.layers, other.layers):
            if s1 != s2 or w1 != w2 or b1 != b2:
                return False
        return True


def build_model(specs: list[LayerSpec], seed: int) -> ModelParams:
    return ModelParams([(spec, *init_layer(spec, seed, i)) for i, spec in enumerate(specs)], seed)


def _prepare_input(model: ModelParams, x: Tensor) -> tuple[np.ndarray, bool]:
    """Normalize to batched form; returns (array, was_batched)."""
    first = model.layers[0][0]
    a = x.array()
    want = 3 if first.kind == "lstm" else 2
    if a.ndim == want - 1:
        return a[None, ...], False
    if a.ndim == want:
        return a, True
    raise DimensionError(
        f"layer 0: expected {want - 1}-D (or batched {want}-D) input for {first.kind}, got shape {x.shape}"
    )


def _forward_pass(model: ModelParams, x: np.ndarray, keep_caches: bool = False):
    """Run all layers; returns (output, caches, pre_act_of_last_dense).

    x is batched. Between layers the value is either a vector batch [B, D] or
    a sequence batch [B, T, D] (only while lstm layers are consuming it).
    """
    caches = []
    val = x
    n = len(model.layers)
    last_z = None
    for idx, (spec, W, b) in enumerate(model.layers):
        Wa, ba = W.array(), b.array()
        if spec.kind == "lstm":
            if val.ndim != 3:
                raise DimensionError(f"layer {idx}: lstm expects a sequence, got shape {val.shape}")
            if val.shape[-1] != spec.input_dim:
                raise DimensionError(
                    f"layer {idx}: lstm input_dim {spec.input_dim} != data dim {val.shape[-1]}"
                )
            h_seq, cache = L.lstm_forward(val, Wa, ba)
            nxt_is_lstm = idx + 1 < n and model.layers[idx + 1][0].kind == "lstm"
            caches.append(("lstm", cache, nxt_is_lstm))
            val = h_seq if nxt_is_lstm else h_seq[:, -1, :]
            last_z = None
        elif spec.kind == "dense":
            if val.ndim != 2 or val.shape[-1] != spec.input_dim:
                raise DimensionError(
                    f"layer {idx}: dense expects [B, {spec.input_dim}], got shape {val.shape}"
                )
            val, cache = L.dense_forward(val, Wa, ba, spec.activation)
            caches.append(("dense", cache, None))
            last_z = cache[1]
        else:  # activation
            if val.ndim != 2 or val.shape[-1] != spec.input_dim:
                raise DimensionError(
                    f"layer {idx}: activation expects [B, {spec.input_dim}], got shape {val.shape}"
                )
            z = val
            val = L.act_forward(spec.activation, z)
            caches.append(("act", (z, val), None))
            last_z = z
    return val, (caches if keep_caches else None), last_z


def forward(model: ModelParams, x: Tensor) -> Tensor:
    """Evaluate the model; output shape mirrors the (possibly batched) input."""
    arr, batched = _prepare_input(model, x)
    out, _, _ = _forward_pass(model, arr)
    if not batched:
        out = out[0]
    return Tensor.from_array(out)


def _loss_on_output(model, loss, out, last_z, target: np.ndarray):
    """Loss value and gradient w.r.t. the model's final pre-activation stage.

    Returns (value, grad, fused): fused marks that grad is w.r.t. the logits
    feeding a trailing softmax (the stable p - y path), so the softmax layer's
    own backward must be skipped.
    """
    final_act = model.layers[-1][0].activation
    ce_like = isinstance(loss, CrossEntropy)
    if ce_like and final_act == "softmax":
        if last_z is None:
            raise DimensionError("softmax after lstm output is not supported")
        val, dz = loss.value_and_grad(last_z, target)
        return val, dz, True
    val, dout = loss.value_and_grad(out, target)
    return val, dout, False


def _grads_and_loss(model: ModelParams, x: Tensor, target: Tensor, loss) -> tuple[dict, float]:
    loss = make_loss(loss)
    arr, batched = _prepare_input(model, x)
    t = target.array()
    if not batched:
        t = t[None, ...]
    out, caches, last_z = _forward_pass(model, arr, keep_caches=True)
    if t.shape != out.shape:
        raise DimensionError(f"target shape {t.shape} != output shape {out.shape}")
    val, grad, fused = _loss_on_output(model, loss, out, last_z, t)
    if not np.isfinite(val):
        raise NumericError(f"non-finite loss: {val}")

    grads: dict = {}
    d = grad
    d_is_seq = False
    last = len(model.layers) - 1
    for idx in range(last, -1, -1):
        spec, W, b = model.layers[idx]
        kind, cache, nxt_is_lstm = caches[idx]
        if kind == "dense":
            if fused and idx == last:
                dx, dW, db = L.dense_backward_from_dz(d, W.array(), cache)
            else:
                dx, dW, db = L.dense_backward(d, W.array(), spec.activation, cache)
            d = dx
        elif kind == "act":
            if not (fused and idx == last):  # fused grad is already w.r.t. the logits
                z, a = cache
                d = L.act_backward(spec.activation, d, z, a)
            dW = db = None
        else:  # lstm
            h_seq = cache[1]
            B, T, H = h_seq.shape
            if d_is_seq:
                dh_seq = d
            else:
                dh_seq = np.zeros((B, T, H))
                dh_seq[:, -1, :] = d
            dx, dW, db = L.lstm_backward(dh_seq, W.array(), cache)
            d = dx
            d_is_seq = True
        if kind != "lstm":
            d_is_seq = False
        if spec.trainable and spec.kind != "activation":
            grads[(idx, "weight")] = Tensor.from_array(dW)
            grads[(idx, "bias")] = Tensor.from_array(db)
    return grads, val


def gradients(model: ModelParams, x: Tensor, target: Tensor, loss="mse") -> dict:
    """Per-parameter gradients for every trainable layer.

    Keys are (layer_index, "weight") and (layer_index, "bias") as Tensors;
    frozen layers get no entry. loss is a name from losses.LOSS_NAMES or a
    loss instance (Composite must come as an instance).
    """
    return _grads_and_loss(model, x, target, loss)[0]


def loss_value(model: ModelParams, x: Tensor, target: Tensor, loss="mse") -> float:
    """Loss evaluated exactly as gradients() sees it (used by FD checks)."""
    loss = make_loss(loss)
    arr, batched = _prepare_input(model, x)
    t = target.array()
    if not batched:
        t = t[None, ...]
    out, _, last_z = _forward_pass(model, arr)
    final_act = model.layers[-1][0].activation
    if isinstance(loss, CrossEntropy) and final_act == "softmax":
        return loss.value(last_z, t)
    return loss.value(out, t)


def train(model: ModelParams, data, config: TrainConfig, loss="mse"):
    """Run the optimizer over (input, target) batches; returns (model, history).

    data is an iterable of (Tensor, Tensor) batches; it is materialized once
    and swept in order every epoch, so (seed, config, data) fully determines
    the result. history is the per-epoch mean loss.
    """
    batches = list(data)
    if not batches:
        raise InputError("empty dataset")
    loss = make_loss(loss)
    work = model.copy()
    opt = make_optimizer(config.optimizer, config.learning_rate)
    history: list[float] = []
    for _ in range(config.epochs):
        epoch_losses = []
        for x, t in batches:
            g, val = _grads_and_loss(work, x, t, loss)
            epoch_losses.append(val)
            params = {}
            for (idx, name) in g:
                _, W, b = work.layers[idx]
                params[(idx, name)] = (W if name == "weight" else b).values
            opt.step(params, {k: v.values for k, v in g.items()})
        history.append(float(np.mean(epoch_losses)))
    return work, history


def save_checkpoint(model: ModelParams, path) -> None:
    """Versioned npz checkpoint; load(save(m)) == m bit-exactly."""
    header = {
        "version": CHECKPOINT_VERSION,
        "seed": model.seed,
        "specs": [
            {
                "kind": s.kind,
                "input_dim": s.input_dim,
                "output_dim": s.output_dim,
                "activation": s.activation,
                "trainable": s.trainable,
            }
            for s, _, _ in model.layers
        ],
    }
    arrays = {"header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    for i, (_, W, b) in enumerate(model.layers):
        arrays[f"w{i}"] = W.array()
        arrays[f"b{i}"] = b.array()
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ModelParams:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"].tobytes()).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise InputError(f"unsupported checkpoint version {header.get('version')}")
        layers = []
        for i, sd in enumerate(header["specs"]):
            spec = LayerSpec(**sd)
            layers.append((spec, Tensor.from_array(data[f"w{i}"]), Tensor.from_array(data[f"b{i}"])))
    return ModelParams(layers, header["seed"])
