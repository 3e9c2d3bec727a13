"""Synthetic assembly-line streams with planted, range-violating anomalies.

Each anomaly class pushes a documented channel subset out of its
state-conditional range on a burst of final frames (forecast target
included) AND, when the defect is in the camera's view, shifts the image
feature vector along a documented class direction, so both modalities carry
signal. Normal windows keep every channel strictly in range, making an
anomalous label equivalent to "nonzero range penalty on some frame".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from smartpilot.ontology import ProcessOntology, load_ontology
from smartpilot.predictx import AnomalyClass, FusionSample, ImageFeatures, SensorWindow
from smartpilot.runtime import STATE_TAG, TagUpdate

# Base defects and how they map onto the composite anomaly classes.
DEFECTS = ("nose", "body1", "body2")
CLASS_DEFECTS: Dict[AnomalyClass, Tuple[str, ...]] = {
    AnomalyClass.NoNose: ("nose",),
    AnomalyClass.NoBody1: ("body1",),
    AnomalyClass.NoBody2: ("body2",),
    AnomalyClass.NoNose_NoBody2: ("nose", "body2"),
    AnomalyClass.NoBody2_NoBody1: ("body2", "body1"),
    AnomalyClass.NoNose_NoBody2_NoBody1: ("nose", "body2", "body1"),
}
# Which side of the range each defect pushes its channels.
DEFECT_SIGN = {"nose": 1, "body1": -1, "body2": 1}

# State-conditional operating ranges: center and half-width bounds. Values
# stay small enough that tanh layers see them unsaturated.
MU_RANGE = (-5.0, 5.0)
HALF_RANGE = (1.0, 2.0)

# Severity of the out-of-range shift, in units of the state's half-width.
# Defects appear as a contiguous burst of violating frames, not a constant
# offset over the whole window. Two defect populations: borderline bursts are
# short and barely past the boundary, so sensor noise swallows them; strong
# bursts are long and deep. The eta factor bends in-burst noise outward so
# every burst frame is a genuine violation.
STRONG_SHIFT = (0.5, 0.9)
BORDERLINE_SHIFT = (0.05, 0.25)
BORDERLINE_FRACTION = 0.7
STRONG_BURST = (0.5, 1.0)
BORDERLINE_BURST = (0.1, 0.25)
STRONG_ETA = 0.5
BORDERLINE_ETA = 0.25
MIN_BURST_FRAMES = 3
NOISE_CLIP = 0.8

# Image-space geometry: class direction = normalized sum of its defects'
# base directions, so composite classes sit between their parts. A defect is
# only sometimes in the camera's view, so the image identifies it in a
# fraction of anomalous windows and the sensor branch must carry the rest.
IMAGE_NOISE = 0.5
IMAGE_SHIFT = (1.8, 2.6)
IMAGE_VISIBILITY = 0.6

FRAME_PERIOD_MS = 100
_UNITS = ("N", "mm", "Nm", "C", "bar", "V")


def default_anomaly_mix() -> Dict[AnomalyClass, float]:
    mix = {AnomalyClass.Normal: 0.6}
    for cls in CLASS_DEFECTS:
        mix[cls] = 0.4 / len(CLASS_DEFECTS)
    return mix


@dataclass
class GenConfig:
    """Knobs for the assembly-stream generator."""

    seed: int = 42
    n_channels: int = 12
    n_states: int = 21
    window_len: int = 30
    n_windows: int = 2000
    anomaly_mix: Optional[Dict[AnomalyClass, float]] = None
    image_feature_dim: int = 64
    noise_sigma: float = 0.9

    def __post_init__(self):
        if self.anomaly_mix is None:
            self.anomaly_mix = default_anomaly_mix()
        for name in ("n_channels", "n_states", "window_len", "n_windows", "image_feature_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_channels < 3:
            raise ValueError("n_channels must be >= 3 so each defect owns a channel group")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        total = 0.0
        for cls, p in self.anomaly_mix.items():
            cls = AnomalyClass(cls)
            if p < 0:
                raise ValueError(f"negative proportion {p} for {cls.name}")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"anomaly mix must sum to 1, got {total}")


def channel_names(n_channels: int) -> Tuple[str, ...]:
    group = max(1, n_channels // 4)
    names = []
    for defect in DEFECTS:
        names.extend(f"{defect}_s{k}" for k in range(group))
    k = 0
    while len(names) < n_channels:
        names.append(f"ctx_s{k}")
        k += 1
    return tuple(names[:n_channels])


def defect_channels(defect: str, n_channels: int) -> Tuple[int, ...]:
    group = max(1, n_channels // 4)
    base = DEFECTS.index(defect) * group
    return tuple(range(base, base + group))


def class_channels(cls: AnomalyClass, n_channels: int) -> Tuple[int, ...]:
    out: List[int] = []
    for defect in CLASS_DEFECTS[cls]:
        out.extend(defect_channels(defect, n_channels))
    return tuple(sorted(out))


@dataclass(frozen=True)
class AssemblyMetadata:
    """Planted structure, emitted so tests can assert against it."""

    channel_names: Tuple[str, ...]
    signature_channels: Dict[str, Tuple[int, ...]]
    defect_signs: Dict[str, int]
    image_directions: Dict[str, Tuple[float, ...]]
    strong_shift: Tuple[float, float] = STRONG_SHIFT
    borderline_shift: Tuple[float, float] = BORDERLINE_SHIFT
    borderline_fraction: float = BORDERLINE_FRACTION
    image_noise: float = IMAGE_NOISE
    image_shift: Tuple[float, float] = IMAGE_SHIFT


@dataclass
class AssemblyDataset:
    samples: List[FusionSample]
    ontology: ProcessOntology
    channel_names: Tuple[str, ...]
    metadata: AssemblyMetadata

    def labels(self) -> List[AnomalyClass]:
        return [s.window.label for s in self.samples]


def _gen_world(rng: np.random.Generator, cfg: GenConfig):
    """Ontology ranges, channel names, and image directions for one seed."""
    names = channel_names(cfg.n_channels)
    mu = rng.uniform(*MU_RANGE, size=(cfg.n_states, cfg.n_channels))
    half = rng.uniform(*HALF_RANGE, size=(cfg.n_states, cfg.n_channels))
    units = [str(rng.choice(_UNITS)) for _ in range(cfg.n_channels)]
    verbs = ("grip", "align", "press", "fasten", "scan", "transfer")
    states = []
    for i in range(cfg.n_states):
        ranges = {
            names[c]: {"lo": float(mu[i, c] - half[i, c]), "hi": float(mu[i, c] + half[i, c]),
                       "unit": units[c]}
            for c in range(cfg.n_channels)
        }
        states.append({
            "state_id": f"s{i:02d}",
            "description": f"assembly step {i}",
            "robot_functions": {
                "r1": f"{verbs[int(rng.integers(len(verbs)))]} part at step {i}",
                "r2": f"{verbs[int(rng.integers(len(verbs)))]} fixture at step {i}",
            },
            "variable_ranges": ranges,
        })
    onto = load_ontology(json.dumps(
        {"version": 1, "facility_id": "assembly-line", "states": states}))

    base_dirs = {}
    for defect in DEFECTS:
        v = rng.normal(0.0, 1.0, size=cfg.image_feature_dim)
        for prev in base_dirs.values():
            v = v - np.dot(v, prev) * prev
        base_dirs[defect] = v / np.linalg.norm(v)
    class_dirs = {}
    for cls, defects in CLASS_DEFECTS.items():
        d = np.sum([base_dirs[name] for name in defects], axis=0)
        class_dirs[cls] = d / np.linalg.norm(d)
    return onto, names, mu, half, class_dirs


def _label_sequence(rng: np.random.Generator, cfg: GenConfig) -> List[AnomalyClass]:
    """Exact largest-remainder class counts, then a seeded shuffle."""
    items = sorted(cfg.anomaly_mix.items(), key=lambda kv: int(kv[0]))
    counts = {cls: int(np.floor(p * cfg.n_windows)) for cls, p in items}
    remainders = sorted(
        ((p * cfg.n_windows - counts[cls], cls) for cls, p in items),
        key=lambda t: (-t[0], int(t[1])),
    )
    short = cfg.n_windows - sum(counts.values())
    for _, cls in remainders[:short]:
        counts[cls] += 1
    labels: List[AnomalyClass] = []
    for cls, _ in items:
        labels.extend([AnomalyClass(cls)] * counts[cls])
    rng.shuffle(labels)
    return labels


def gen_assembly(cfg: GenConfig) -> AssemblyDataset:
    """Deterministic dataset of labeled windows plus the matching ontology."""
    rng = np.random.default_rng(cfg.seed)
    onto, names, mu, half, class_dirs = _gen_world(rng, cfg)
    labels = _label_sequence(rng, cfg)

    T, C, S = cfg.window_len, cfg.n_channels, cfg.n_states
    samples: List[FusionSample] = []
    t0 = 1000
    for i, label in enumerate(labels):
        # The line dwells on one station per window: every frame and the
        # forecast target share a state, so next-frame prediction is a
        # denoising task rather than a state-transition lookup.
        state = int(rng.integers(S))
        state_idx = [state] * (T + 1)
        eta = np.clip(rng.normal(0.0, cfg.noise_sigma, size=(T + 1, C)),
                      -NOISE_CLIP * half[state_idx, :], NOISE_CLIP * half[state_idx, :])
        values = mu[state_idx, :] + eta

        if label.is_anomalous:
            borderline = rng.random() < BORDERLINE_FRACTION
            lo_s, hi_s = BORDERLINE_SHIFT if borderline else STRONG_SHIFT
            lo_b, hi_b = BORDERLINE_BURST if borderline else STRONG_BURST
            eta_k = BORDERLINE_ETA if borderline else STRONG_ETA
            severity = rng.uniform(lo_s, hi_s)
            burst_len = max(MIN_BURST_FRAMES,
                            int(round(rng.uniform(lo_b, hi_b) * T)))
            burst_len = min(burst_len, T)
            # The defect develops mid-window and persists through the
            # window's end and into the next frame: rows [T-burst_len, T]
            # violate, including the forecast target, so the target carries
            # the defect's continuation. Earlier frames stay in range.
            burst = slice(T - burst_len, T + 1)
            for defect in CLASS_DEFECTS[label]:
                sign = DEFECT_SIGN[defect]
                for c in defect_channels(defect, C):
                    w = half[state_idx, c][burst]
                    m = mu[state_idx, c][burst]
                    out = w * (1.0 + severity) + eta_k * np.abs(eta[burst, c])
                    values[burst, c] = m + sign * out

        img = rng.normal(0.0, IMAGE_NOISE, size=cfg.image_feature_dim)
        if label.is_anomalous and rng.random() < IMAGE_VISIBILITY:
            img = img + rng.uniform(*IMAGE_SHIFT) * class_dirs[label]

        end_ts = t0 + i * (T + 1) + (T - 1)
        state_ids = tuple(f"s{k:02d}" for k in state_idx)
        window = SensorWindow(frames=values[:T], state_ids=state_ids[:T],
                              timestamp=end_ts, label=label)
        image = ImageFeatures(vector=img, source_camera="cam0", timestamp=end_ts)
        samples.append(FusionSample(window=window, image=image, target=values[T],
                                    target_state_id=state_ids[T]))

    metadata = AssemblyMetadata(
        channel_names=names,
        signature_channels={cls.name: class_channels(cls, C) for cls in CLASS_DEFECTS},
        defect_signs=dict(DEFECT_SIGN),
        image_directions={cls.name: tuple(float(x) for x in d)
                          for cls, d in class_dirs.items()},
    )
    return AssemblyDataset(samples=samples, ontology=onto, channel_names=names,
                           metadata=metadata)


@dataclass(frozen=True)
class ReplayMetadata:
    """Where the anomaly burst sits in a generated replay stream."""

    anomaly_class: str
    burst_start: int
    burst_end: int
    responsible_channels: Tuple[str, ...]
    facility_id: str = "assembly-line"
    frame_period_ms: int = FRAME_PERIOD_MS


def gen_replay(cfg: GenConfig, n_frames: int = 1000,
               anomaly_class: AnomalyClass = AnomalyClass.NoNose,
               burst: Optional[Tuple[int, int]] = None,
               start_ts: int = 1_000_000) -> Tuple[List[TagUpdate], ReplayMetadata]:
    """Continuous tag stream sharing gen_assembly's world, with one planted
    anomaly burst carrying both the sensor and the image signature."""
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    if not AnomalyClass(anomaly_class).is_anomalous:
        raise ValueError("the planted burst must use an anomalous class")
    rng = np.random.default_rng(cfg.seed)
    onto, names, mu, half, class_dirs = _gen_world(rng, cfg)
    stream_rng = np.random.default_rng(cfg.seed + 1)

    if burst is None:
        burst = (n_frames // 2, min(n_frames, n_frames // 2 + max(2 * cfg.window_len, 20)))
    b_lo, b_hi = burst
    if not 0 <= b_lo < b_hi <= n_frames:
        raise ValueError(f"burst {burst} outside [0, {n_frames}]")

    C, S, F = cfg.n_channels, cfg.n_states, cfg.image_feature_dim
    sig = class_channels(anomaly_class, C)
    direction = class_dirs[anomaly_class]
    updates: List[TagUpdate] = []
    for t in range(n_frames):
        s = t % S
        ts = start_ts + t * FRAME_PERIOD_MS
        facility = "assembly-line"
        eta = np.clip(stream_rng.normal(0.0, cfg.noise_sigma, size=C),
                      -0.8 * half[s], 0.8 * half[s])
        values = mu[s] + eta
        in_burst = b_lo <= t < b_hi
        if in_burst:
            severity = 1.0  # one full half-width past the boundary
            for defect in CLASS_DEFECTS[anomaly_class]:
                sign = DEFECT_SIGN[defect]
                for c in defect_channels(defect, C):
                    values[c] = mu[s, c] + sign * (1.0 + severity) * half[s, c]
        img = stream_rng.normal(0.0, IMAGE_NOISE, size=F)
        if in_burst:
            img = img + 1.6 * direction
        updates.append(TagUpdate(STATE_TAG, f"s{s:02d}", ts, facility))
        for c, name in enumerate(names):
            updates.append(TagUpdate(name, float(values[c]), ts, facility))
        for j in range(F):
            updates.append(TagUpdate(f"img_{j}", float(img[j]), ts, facility))

    meta = ReplayMetadata(
        anomaly_class=AnomalyClass(anomaly_class).name,
        burst_start=b_lo,
        burst_end=b_hi,
        responsible_channels=tuple(names[c] for c in sig),
    )
    return updates, meta
