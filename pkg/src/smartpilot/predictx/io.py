"""Dataset files: a delimited time-series file plus an aligned feature file.

Time-series file (CSV, one row per frame):
    timestamp,state_id,<channel name>...,label
Samples are stored as consecutive segments of window_len + 1 rows: the first
window_len frames form the window, the final row is the next-frame target
(its state_id is the target state, its label repeats the window label).

Feature file (CSV, one row per sample):
    timestamp,source_camera,f0..fF-1
keyed by the window-end timestamp of its segment.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..kernel import InputError
from .types import AnomalyClass, FusionSample, ImageFeatures, SensorWindow


def save_dataset(samples, ts_path, feat_path, channel_names) -> None:
    channel_names = list(channel_names)
    with open(ts_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "state_id"] + channel_names + ["label"])
        for s in samples:
            if s.window.n_channels != len(channel_names):
                raise InputError("channel_names must match frame width")
            win = s.window
            for t in range(win.window_len):
                w.writerow(
                    [win.timestamp - (win.window_len - 1 - t), win.state_ids[t]]
                    + [repr(float(v)) for v in win.frames[t]]
                    + [win.label.name]
                )
            w.writerow(
                [win.timestamp + 1, s.penalty_state_id]
                + [repr(float(v)) for v in s.target]
                + [win.label.name]
            )
    with open(feat_path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = samples[0].image.vector.shape[0] if samples else 0
        w.writerow(["timestamp", "source_camera"] + [f"f{i}" for i in range(dim)])
        for s in samples:
            w.writerow(
                [s.image.timestamp, s.image.source_camera]
                + [repr(float(v)) for v in s.image.vector]
            )


def load_dataset(ts_path, feat_path, window_len: int):
    """Rebuild FusionSamples; values round-trip bit-exactly (repr storage)."""
    ts_path, feat_path = Path(ts_path), Path(feat_path)
    features = {}
    with open(feat_path, newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        ts = int(row[0])
        features[ts] = ImageFeatures(
            vector=np.array([float(v) for v in row[2:]]),
            source_camera=row[1],
            timestamp=ts,
        )
    with open(ts_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n_channels = len(header) - 3
    if n_channels < 1:
        raise InputError(f"malformed header in {ts_path}")
    body = rows[1:]
    seg = window_len + 1
    if len(body) % seg != 0:
        raise InputError(
            f"{len(body)} rows is not a whole number of window_len+1={seg} segments"
        )
    samples = []
    for start in range(0, len(body), seg):
        chunk = body[start : start + seg]
        frames = np.array([[float(v) for v in r[2 : 2 + n_channels]] for r in chunk[:-1]])
        states = tuple(r[1] for r in chunk[:-1])
        label = AnomalyClass[chunk[0][-1]]
        end_ts = int(chunk[-2][0])
        window = SensorWindow(frames, states, end_ts, label)
        target_row = chunk[-1]
        target = np.array([float(v) for v in target_row[2 : 2 + n_channels]])
        if end_ts not in features:
            raise InputError(f"no image features for window ending at {end_ts}")
        samples.append(
            FusionSample(window, features[end_ts], target, target_state_id=target_row[1])
        )
    return samples, header[2:-1]
