"""Fusion architecture: autoencoder branch, image branch, decision head.

The time-series branch is a frame-level autoencoder (channels -> latent ->
channels). For a window it contributes three vectors: the decoded last
frame, the per-channel reconstruction error averaged over the window, and
the per-channel peak reconstruction error (defect signatures are localized
bursts, which the window mean dilutes). The image branch is a small dense
classifier over precomputed feature vectors. The forecast is the decoded
last frame plus a linear correction read from that frame's code: one step
ahead is a small state-conditional drift, so the residual readout converges
in a few epochs. The decision head maps the fused vector [decoded last frame,
mean reconstruction error, peak reconstruction error, image logits] plus
that forecast to class logits. Separate heads keep the two losses from
competing for hidden units, and the forecast input hands the class head
the expected-versus-observed displacement as a linear feature.

This graph is a DAG, not a sequential stack, so forward/backward are written
here from the kernel's layer primitives; gradients are validated against
finite differences in the test suite. Training uses the kernel's composite
loss so the per-sample objective is

    wmse(next_frame, target) + lam * range_penalty(next_frame) + beta * ce(logits, label)

with the penalty active only for variant P3.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..kernel import (
    Composite,
    DimensionError,
    InputError,
    LayerSpec,
    ModelParams,
    NumericError,
    Tensor,
    TrainConfig,
    build_model,
)
from ..kernel import train as kernel_train
from ..kernel.layers import act_forward, dense_backward, dense_forward
from ..kernel.optim import make_optimizer
from ..ontology import ProcessOntology, batch_range_penalty
from .types import (
    AnomalyClass,
    FusionConfig,
    FusionSample,
    FusionVariant,
    ImageFeatures,
    N_CLASSES,
    PredictionResult,
    SensorWindow,
)

# Independent Philox key streams for the four sub-networks.
_AE_SEED_OFFSET = 0
_IMG_SEED_OFFSET = 1
_HEAD_SEED_OFFSET = 2
_FORE_SEED_OFFSET = 3


@dataclass
class FusionModel:
    """Trained (or initialized) parameter snapshot for one variant.

    Sub-models are kernel ModelParams; absent branches are None (B1 has no
    image branch, B2 has only the image branch). Snapshots are immutable by
    convention: training copies, inference only reads.
    """

    variant: FusionVariant
    n_channels: int
    window_len: int
    img_dim: int
    ae: Optional[ModelParams]
    img: Optional[ModelParams]
    head: Optional[ModelParams]
    fore: Optional[ModelParams]
    config: FusionConfig

    def copy(self) -> "FusionModel":
        return FusionModel(
            self.variant,
            self.n_channels,
            self.window_len,
            self.img_dim,
            self.ae.copy() if self.ae else None,
            self.img.copy() if self.img else None,
            self.head.copy() if self.head else None,
            self.fore.copy() if self.fore else None,
            self.config,
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FusionModel)
            and self.variant == other.variant
            and (self.n_channels, self.window_len, self.img_dim)
            == (other.n_channels, other.window_len, other.img_dim)
            and self.ae == other.ae
            and self.img == other.img
            and self.head == other.head
            and self.fore == other.fore
        )


def _ae_specs(n_channels: int, latent_dim: int, freeze_encoder: bool = False):
    return [
        LayerSpec("dense", n_channels, latent_dim, "tanh", trainable=not freeze_encoder),
        LayerSpec("dense", latent_dim, n_channels, "identity"),
    ]


def _img_specs(img_dim: int, hidden: int):
    return [
        LayerSpec("dense", img_dim, hidden, "tanh"),
        LayerSpec("dense", hidden, N_CLASSES, "identity"),
    ]


def _head_specs(in_dim: int, hidden: int, out_dim: int):
    return [
        LayerSpec("dense", in_dim, hidden, "tanh"),
        LayerSpec("dense", hidden, out_dim, "identity"),
    ]


def build_fusion(
    variant: FusionVariant,
    n_channels: int,
    window_len: int,
    img_dim: int,
    config: FusionConfig,
) -> FusionModel:
    """Initialize all branches a variant needs (untrained)."""
    seed = config.seed
    ae = img = head = fore = None
    if variant is not FusionVariant.B2:
        ae = build_model(_ae_specs(n_channels, config.latent_dim), seed + _AE_SEED_OFFSET)
    if variant is not FusionVariant.B1:
        img = build_model(_img_specs(img_dim, config.img_hidden), seed + _IMG_SEED_OFFSET)
    if variant is not FusionVariant.B2:
        # Classification and forecasting are separate heads so their losses
        # do not fight over hidden units. The forecast corrects the decoded
        # last frame with a linear readout of that frame's code, so it only
        # learns the one-step drift. The class head additionally sees the
        # forecast: next to the decoded last frame it exposes the
        # expected-versus-observed displacement as a linear feature.
        feat = 3 * n_channels + (0 if variant is FusionVariant.B1 else N_CLASSES)
        head = build_model(
            _head_specs(feat + 2 * n_channels, config.head_hidden, N_CLASSES),
            seed + _HEAD_SEED_OFFSET,
        )
        fore = build_model(
            [LayerSpec("dense", config.latent_dim, n_channels, "identity")],
            seed + _FORE_SEED_OFFSET,
        )
    return FusionModel(variant, n_channels, window_len, img_dim if img else 0, ae, img, head, fore, config)


def _layer(mp: ModelParams, i: int):
    spec, W, b = mp.layers[i]
    return spec, W.array(), b.array()


def fusion_forward(model: FusionModel, frames: np.ndarray, img: Optional[np.ndarray]):
    """Batched forward: frames [B, T, C], img [B, F] -> (next_frame [B, C],
    class_logits [B, 7], caches for backward)."""
    B, T, C = frames.shape
    if C != model.n_channels:
        raise DimensionError(f"expected {model.n_channels} channels, got {C}")

    if model.variant is FusionVariant.B2:
        logits, caches = _img_forward(model, img)
        return frames[:, -1, :].copy(), logits, {"img": caches}

    flat = frames.reshape(B * T, C)
    e_spec, We, be = _layer(model.ae, 0)
    d_spec, Wd, bd = _layer(model.ae, 1)
    enc, enc_cache = dense_forward(flat, We, be, e_spec.activation)
    dec, dec_cache = dense_forward(enc, Wd, bd, d_spec.activation)
    diff = dec - flat
    sq = (diff * diff).reshape(B, T, C)
    recon_err = sq.mean(axis=1)
    # Defect signatures are localized bursts; the window mean dilutes them,
    # so the head also sees the per-channel peak error and where it peaked.
    peak_idx = sq.argmax(axis=1)
    peak_err = np.take_along_axis(sq, peak_idx[:, None, :], axis=1)[:, 0, :]
    dec_last = dec.reshape(B, T, C)[:, -1, :]

    parts = [dec_last, recon_err, peak_err]
    img_caches = None
    if model.img is not None:
        img_logits, img_caches = _img_forward(model, img)
        parts.append(img_logits)
    z = np.concatenate(parts, axis=1)

    # Forecast = decoded last frame + linear correction from its code. The
    # residual form keeps the readout's weights near the origin: it only has
    # to learn the state's one-step drift, not absolute channel scales.
    enc_last = enc.reshape(B, T, -1)[:, -1, :]
    f1_spec, Wf1, bf1 = _layer(model.fore, 0)
    delta, f1_cache = dense_forward(enc_last, Wf1, bf1, f1_spec.activation)
    next_frame = dec_last + delta

    # The head sees the forecast and its displacement from the decoded last
    # frame. Where training keeps forecasts inside operating ranges, the
    # displacement reads out how far the observed trajectory left them.
    zc = np.concatenate([z, next_frame, dec_last - next_frame], axis=1)
    h1_spec, W1, b1 = _layer(model.head, 0)
    h2_spec, W2, b2 = _layer(model.head, 1)
    h, h1_cache = dense_forward(zc, W1, b1, h1_spec.activation)
    logits, h2_cache = dense_forward(h, W2, b2, h2_spec.activation)

    caches = {
        "shape": (B, T, C),
        "enc": enc_cache,
        "dec": dec_cache,
        "diff": diff,
        "peak_idx": peak_idx,
        "img": img_caches,
        "head": (h1_cache, h2_cache),
        "fore": f1_cache,
    }
    return next_frame, logits, caches


def _img_forward(model: FusionModel, img: Optional[np.ndarray]):
    if img is None:
        raise InputError(f"variant {model.variant.value} requires image features")
    if img.ndim != 2 or img.shape[1] != model.img_dim:
        raise DimensionError(f"expected image features [B, {model.img_dim}], got {img.shape}")
    s1, W1, b1 = _layer(model.img, 0)
    s2, W2, b2 = _layer(model.img, 1)
    h, c1 = dense_forward(img, W1, b1, s1.activation)
    logits, c2 = dense_forward(h, W2, b2, s2.activation)
    return logits, (c1, c2)


def fusion_backward(model: FusionModel, caches, d_next: np.ndarray, d_logits: np.ndarray) -> dict:
    """Gradients for every trainable parameter.

    Keys are (branch, layer_index, "weight" | "bias"); frozen layers get no
    entry. d_next/d_logits are the loss gradients on the two output slices.
    """
    grads: dict = {}

    def store(branch: str, mp: ModelParams, idx: int, dW, db):
        if mp.layers[idx][0].trainable:
            grads[(branch, idx, "weight")] = dW
            grads[(branch, idx, "bias")] = db

    if model.variant is FusionVariant.B2:
        _img_backward(model, caches["img"], d_logits, store)
        return grads

    B, T, C = caches["shape"]
    h1_cache, h2_cache = caches["head"]
    s1 = model.head.layers[0][0]
    s2, W2, _ = _layer(model.head, 1)
    dh, dW2, db2 = dense_backward(d_logits, W2, s2.activation, h2_cache)
    store("head", model.head, 1, dW2, db2)
    _, W1, _ = _layer(model.head, 0)
    dzc, dW1, db1 = dense_backward(dh, W1, s1.activation, h1_cache)
    store("head", model.head, 0, dW1, db1)

    # The class head's input ends with the forecast and its displacement
    # from the decoded last frame, so their gradients join the loss gradient
    # on the forecast output. The forecast is the decoded last frame plus a
    # correction read from that frame's code, so its gradient splits between
    # the decoder path and the encoder below.
    zdim = dzc.shape[1] - 2 * C
    d_nf = dzc[:, zdim : zdim + C]
    d_diff = dzc[:, zdim + C :]
    d_fore = d_next + d_nf - d_diff
    fs1 = model.fore.layers[0][0]
    _, Wf1, _ = _layer(model.fore, 0)
    d_enc_last, dWf1, dbf1 = dense_backward(d_fore, Wf1, fs1.activation, caches["fore"])
    store("fore", model.fore, 0, dWf1, dbf1)
    dz = dzc[:, :zdim]

    d_dec_last = dz[:, :C] + d_fore + d_diff
    if model.img is not None:
        _img_backward(model, caches["img"], dz[:, 3 * C :], store)

    # recon_err_bc = mean_t diff_btc^2, peak_err_bc = diff at the argmax
    # frame squared, dec_last_bc = dec_b,T-1,c; all funnel back into d(dec)
    # for the decoder pass (peak gradient routes to the argmax frame only).
    diff = caches["diff"]
    d_err = dz[:, C : 2 * C]
    d_peak = dz[:, 2 * C : 3 * C]
    d_dec = (2.0 / T) * diff * np.repeat(d_err, T, axis=0).reshape(B * T, C)
    d_dec_3d = d_dec.reshape(B, T, C)
    diff_3d = diff.reshape(B, T, C)
    peak_idx = caches["peak_idx"]
    rows = np.arange(B)[:, None]
    cols = np.arange(C)[None, :]
    d_dec_3d[rows, peak_idx, cols] += 2.0 * diff_3d[rows, peak_idx, cols] * d_peak
    d_dec_3d[:, -1, :] += d_dec_last
    d_dec = d_dec_3d.reshape(B * T, C)
    # diff = dec - flat: the -flat side is input data, no gradient needed.

    dspec, Wd, _ = _layer(model.ae, 1)
    d_enc, dWd, dbd = dense_backward(d_dec, Wd, dspec.activation, caches["dec"])
    store("ae", model.ae, 1, dWd, dbd)
    espec = model.ae.layers[0][0]
    if espec.trainable:
        d_enc_3d = d_enc.reshape(B, T, -1)
        d_enc_3d[:, -1, :] += d_enc_last
        d_enc = d_enc_3d.reshape(B * T, -1)
        _, We, _ = _layer(model.ae, 0)
        _, dWe, dbe = dense_backward(d_enc, We, espec.activation, caches["enc"])
        store("ae", model.ae, 0, dWe, dbe)
    return grads


def _img_backward(model: FusionModel, img_caches, d_logits, store):
    c1, c2 = img_caches
    s1 = model.img.layers[0][0]
    s2, W2, _ = _layer(model.img, 1)
    dh, dW2, db2 = dense_backward(d_logits, W2, s2.activation, c2)
    store("img", model.img, 1, dW2, db2)
    _, W1, _ = _layer(model.img, 0)
    _, dW1, db1 = dense_backward(dh, W1, s1.activation, c1)
    store("img", model.img, 0, dW1, db1)


def _stack_windows(windows) -> np.ndarray:
    if not windows:
        raise InputError("need at least one window")
    C = windows[0].n_channels
    T = windows[0].window_len
    for w in windows:
        if w.n_channels != C or w.window_len != T:
            raise InputError(
                f"inconsistent window shapes: [{T}, {C}] vs [{w.window_len}, {w.n_channels}]"
            )
    return np.stack([w.frames for w in windows])


def train_autoencoder(windows, config: TrainConfig, latent_dim: int = 8, seed: int = 0) -> ModelParams:
    """Train the frame-level autoencoder on every frame of every window.

    The stream is unlabeled, so anomalous frames are in the training set;
    with defects rare and brief, the minimum-error manifold still tracks
    normal operation.
    """
    frames = _stack_windows(windows)
    B, T, C = frames.shape
    flat = frames.reshape(B * T, C)
    model = build_model(_ae_specs(C, latent_dim), seed)
    batches = []
    for i in range(0, flat.shape[0], config.batch_size):
        chunk = flat[i : i + config.batch_size]
        batches.append((Tensor.from_array(chunk), Tensor.from_array(chunk)))
    trained, _ = kernel_train(model, batches, config, loss="mse")
    return trained


def _materialize(dataset, variant: FusionVariant):
    if not dataset:
        raise InputError("empty dataset")
    windows = [s.window for s in dataset]
    X = _stack_windows(windows)
    C = X.shape[2]
    IMG = None
    if variant is not FusionVariant.B1:
        dims = {s.image.vector.shape[0] for s in dataset}
        if len(dims) != 1:
            raise InputError(f"inconsistent image feature dims: {sorted(dims)}")
        IMG = np.stack([s.image.vector for s in dataset])
    TGT = np.stack([s.target for s in dataset])
    if TGT.shape[1] != C:
        raise InputError("target dim must match channel count")
    labels = np.array([int(s.window.label) for s in dataset])
    onehot = np.zeros((len(dataset), N_CLASSES))
    onehot[np.arange(len(dataset)), labels] = 1.0
    states = [s.penalty_state_id for s in dataset]
    return X, IMG, TGT, onehot, states


def _check_penalty_coverage(states, onto: ProcessOntology, variables):
    """Raise the ontology's lookup error before any training happens."""
    for sid in sorted(set(states)):
        onto.bounds(sid, variables)


def train_fusion(
    variant: FusionVariant,
    dataset,
    onto: Optional[ProcessOntology],
    config: FusionConfig,
) -> FusionModel:
    """Train one ablation variant from scratch (plus pretraining for P2/P3)."""
    X, IMG, TGT, onehot, states = _materialize(dataset, variant)
    B, T, C = X.shape

    if variant is FusionVariant.B2:
        return _train_b2(X, IMG, onehot, config)

    use_penalty = variant is FusionVariant.P3 and config.lam > 0
    variables = config.variables
    if use_penalty:
        if onto is None or variables is None:
            raise InputError("P3 needs an ontology and channel-name variables for the range penalty")
        if len(variables) != C:
            raise InputError(f"{len(variables)} variable names for {C} channels")
        _check_penalty_coverage(states, onto, variables)

    img_dim = IMG.shape[1] if IMG is not None else 0
    model = build_fusion(variant, C, T, img_dim, config)
    if model.img is not None:
        # The image classifier is trained on its own task first and then
        # fine-tuned jointly; gradients reaching it only through the head
        # are too indirect to lift it off its random start.
        model.img = _train_b2(X, IMG, onehot, config).img
    if variant in (FusionVariant.P2, FusionVariant.P3):
        pre_cfg = TrainConfig(
            learning_rate=config.learning_rate,
            epochs=config.pretrain_epochs,
            batch_size=config.batch_size,
            optimizer=config.optimizer,
        )
        # Pretraining is unsupervised: the raw stream, anomalous windows
        # included. The range hinge stays out of this stage; it belongs to
        # the fusion objective, applied to the predicted next frame.
        pre_windows = [s.window for s in dataset]
        ae = train_autoencoder(
            pre_windows, pre_cfg, config.latent_dim, config.seed + _AE_SEED_OFFSET)
        frozen = [(replace(ae.layers[0][0], trainable=False),) + tuple(ae.layers[0][1:])] + ae.layers[1:]
        model.ae = ModelParams(frozen, ae.seed)

    opt = make_optimizer(config.optimizer, config.learning_rate)
    weights = None if config.channel_weights is None else np.asarray(config.channel_weights)
    n = B
    order = np.arange(n)
    for _ in range(config.epochs):
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, tb, yb = X[idx], TGT[idx], onehot[idx]
            ib = IMG[idx] if IMG is not None else None
            penalty = None
            if use_penalty:
                batch_states = [states[i] for i in idx]
                penalty = lambda pred, s=batch_states: batch_range_penalty(pred, s, onto, variables)
            loss = Composite(
                reg_dim=C,
                n_classes=N_CLASSES,
                wmse_weights=weights,
                beta=config.beta,
                lam=config.lam if use_penalty else 0.0,
                penalty=penalty,
            )
            next_p, logits, caches = fusion_forward(model, xb, ib)
            out = np.concatenate([next_p, logits], axis=1)
            target = np.concatenate([tb, yb], axis=1)
            val, dout = loss.value_and_grad(out, target)
            if not np.isfinite(val):
                raise NumericError(f"non-finite loss: {val}")
            grads = fusion_backward(model, caches, dout[:, :C], dout[:, C:])
            params = {}
            for (branch, li, name) in grads:
                mp = {"ae": model.ae, "img": model.img, "head": model.head,
                      "fore": model.fore}[branch]
                _, W, bias = mp.layers[li]
                params[(branch, li, name)] = (W if name == "weight" else bias).values
            opt.step(params, {k: np.asarray(v).reshape(-1) for k, v in grads.items()})
    return model


def _train_b2(X, IMG, onehot, config: FusionConfig) -> FusionModel:
    clf = build_model(_img_specs(IMG.shape[1], config.img_hidden), config.seed + _IMG_SEED_OFFSET)
    cfg = TrainConfig(
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        batch_size=config.batch_size,
        optimizer=config.optimizer,
    )
    batches = []
    for i in range(0, IMG.shape[0], config.batch_size):
        batches.append(
            (Tensor.from_array(IMG[i : i + config.batch_size]), Tensor.from_array(onehot[i : i + config.batch_size]))
        )
    trained, _ = kernel_train(clf, batches, cfg, loss="cross_entropy")
    B, T, C = X.shape
    return FusionModel(FusionVariant.B2, C, T, IMG.shape[1], None, trained, None, None, config)


def fuse_predict(model: FusionModel, window: SensorWindow, img: Optional[ImageFeatures]) -> PredictionResult:
    """Pure single-sample inference; latency is wall-clock and excluded from
    any determinism contract."""
    t0 = time.perf_counter()
    if window.window_len != model.window_len:
        raise DimensionError(f"expected window_len {model.window_len}, got {window.window_len}")
    frames = window.frames[None, ...]
    vec = None
    if model.img is not None:
        if img is None:
            raise InputError(f"variant {model.variant.value} requires image features")
        vec = img.vector[None, :]
    next_p, logits, _ = fusion_forward(model, frames, vec)
    probs = act_forward("softmax", logits)[0]
    cls = AnomalyClass(int(np.argmax(probs)))
    latency = (time.perf_counter() - t0) * 1000.0
    return PredictionResult(
        next_frame=next_p[0],
        class_probs=probs,
        predicted_class=cls,
        explanation=None,
        latency_ms=latency,
    )


def predict_batch(model: FusionModel, frames: np.ndarray, img: Optional[np.ndarray]):
    """Vectorized inference for evaluation: returns (next_frames, probs, classes)."""
    next_p, logits, _ = fusion_forward(model, frames, img)
    probs = act_forward("softmax", logits)
    classes = [AnomalyClass(int(i)) for i in np.argmax(probs, axis=1)]
    return next_p, probs, classes


FUSION_CHECKPOINT_VERSION = 1


def save_fusion(model: FusionModel, path) -> None:
    """Single-file npz checkpoint; load(save(m)) == m bit-exactly."""
    import dataclasses
    import json

    header = {
        "version": FUSION_CHECKPOINT_VERSION,
        "variant": model.variant.value,
        "n_channels": model.n_channels,
        "window_len": model.window_len,
        "img_dim": model.img_dim,
        "config": dataclasses.asdict(model.config),
        "branches": {},
    }
    arrays = {}
    for name, mp in (("ae", model.ae), ("img", model.img), ("head", model.head),
                     ("fore", model.fore)):
        if mp is None:
            continue
        header["branches"][name] = {
            "seed": mp.seed,
            "specs": [
                {
                    "kind": s.kind,
                    "input_dim": s.input_dim,
                    "output_dim": s.output_dim,
                    "activation": s.activation,
                    "trainable": s.trainable,
                }
                for s, _, _ in mp.layers
            ],
        }
        for i, (_, W, b) in enumerate(mp.layers):
            arrays[f"{name}_w{i}"] = W.array()
            arrays[f"{name}_b{i}"] = b.array()
    arrays["header"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_fusion(path) -> FusionModel:
    import json

    with np.load(path) as data:
        header = json.loads(bytes(data["header"].tobytes()).decode())
        if header.get("version") != FUSION_CHECKPOINT_VERSION:
            raise InputError(f"unsupported fusion checkpoint version {header.get('version')}")
        cfg_dict = dict(header["config"])
        for key in ("channel_weights", "variables"):
            if cfg_dict.get(key) is not None:
                cfg_dict[key] = tuple(cfg_dict[key])
        config = FusionConfig(**cfg_dict)
        branches = {}
        for name, meta in header["branches"].items():
            layers = []
            for i, sd in enumerate(meta["specs"]):
                spec = LayerSpec(**sd)
                layers.append(
                    (spec, Tensor.from_array(data[f"{name}_w{i}"]), Tensor.from_array(data[f"{name}_b{i}"]))
                )
            branches[name] = ModelParams(layers, meta["seed"])
    return FusionModel(
        FusionVariant(header["variant"]),
        header["n_channels"],
        header["window_len"],
        header["img_dim"],
        branches.get("ae"),
        branches.get("img"),
        branches.get("head"),
        branches.get("fore"),
        config,
    )
