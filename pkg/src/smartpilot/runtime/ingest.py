"""Tag-stream ingestion: replay files, live sockets, frame grouping.

Replay files carry one TagUpdate per line, tab-delimited:
timestamp <TAB> facility_id <TAB> tag <TAB> value. The reserved tag "state"
carries the cycle-state name as a string; every other value must parse as a
real. Malformed lines are skipped with a counted warning.
"""

from __future__ import annotations

import math
import socket
import threading
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .bus import MessageBus
from .types import STATE_TAG, TagFrame, TagUpdate

FRAMES_TOPIC = "frames"


class ReplayWarning(UserWarning):
    """Raised once per skipped malformed replay line."""


def parse_replay_line(line: str) -> TagUpdate:
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) != 4:
        raise ValueError(f"expected 4 tab-separated fields, got {len(parts)}")
    ts_raw, facility_id, tag, value_raw = parts
    try:
        timestamp = int(ts_raw)
    except ValueError:
        raise ValueError(f"bad timestamp {ts_raw!r}") from None
    if not tag:
        raise ValueError("empty tag")
    if tag == STATE_TAG:
        value: object = value_raw
    else:
        try:
            value = float(value_raw)
        except ValueError:
            raise ValueError(f"non-numeric value {value_raw!r} for tag {tag!r}") from None
        if not math.isfinite(value):
            raise ValueError(f"non-finite value for tag {tag!r}")
    return TagUpdate(tag=tag, value=value, timestamp=timestamp, facility_id=facility_id)


def format_replay_line(update: TagUpdate) -> str:
    value = update.value if isinstance(update.value, str) else repr(float(update.value))
    return f"{update.timestamp}\t{update.facility_id}\t{update.tag}\t{value}"


def group_frames(updates: Iterable[TagUpdate]) -> list:
    """Group updates by timestamp (first-seen order) into TagFrames."""
    order = []
    acc = {}
    for u in updates:
        slot = acc.get(u.timestamp)
        if slot is None:
            slot = acc[u.timestamp] = {"facility": u.facility_id, "state": None, "channels": {}}
            order.append(u.timestamp)
        if u.tag == STATE_TAG:
            slot["state"] = str(u.value)
        else:
            slot["channels"][u.tag] = float(u.value)
    return [
        TagFrame(
            timestamp=ts,
            facility_id=acc[ts]["facility"],
            state_id=acc[ts]["state"],
            channels=acc[ts]["channels"],
        )
        for ts in order
        if acc[ts]["state"] is not None or acc[ts]["channels"]
    ]


@dataclass
class ReplayStats:
    frames: int = 0
    updates: int = 0
    skipped_lines: int = 0
    wall_s: float = 0.0


def read_replay(path) -> tuple:
    """Parse a replay file into frames; returns (frames, stats)."""
    stats = ReplayStats()
    updates = []
    with open(Path(path), "r") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                updates.append(parse_replay_line(line))
            except ValueError as exc:
                stats.skipped_lines += 1
                warnings.warn(f"skipping malformed replay line {lineno}: {exc}", ReplayWarning)
    frames = group_frames(updates)
    stats.frames = len(frames)
    stats.updates = len(updates)
    return frames, stats


def write_replay(path, updates: Iterable[TagUpdate]) -> int:
    """Write updates as a replay file; returns the line count."""
    n = 0
    with open(Path(path), "w") as fh:
        for u in updates:
            fh.write(format_replay_line(u) + "\n")
            n += 1
    return n


def replay(frames, bus: MessageBus, rate: Optional[float] = None,
           topic: str = FRAMES_TOPIC) -> ReplayStats:
    """Publish frames on the bus, paced at rate x real time.

    rate None or inf replays as fast as possible; otherwise frame k is
    published at (t_k - t_0) / 1000 / rate seconds after the start.
    """
    if rate is not None and not (rate > 0):
        raise ValueError(f"rate must be > 0, got {rate}")
    paced = rate is not None and math.isfinite(rate)
    start = time.perf_counter()
    t0 = frames[0].timestamp if frames else 0
    for frame in frames:
        if paced:
            target = (frame.timestamp - t0) / 1000.0 / rate
            delay = start + target - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        bus.publish(topic, frame)
    return ReplayStats(frames=len(frames), updates=0, skipped_lines=0,
                       wall_s=time.perf_counter() - start)


def replay_file(path, bus: MessageBus, rate: Optional[float] = None,
                topic: str = FRAMES_TOPIC) -> ReplayStats:
    frames, stats = read_replay(path)
    out = replay(frames, bus, rate=rate, topic=topic)
    out.updates = stats.updates
    out.skipped_lines = stats.skipped_lines
    return out


class _FrameAssembler:
    """Streaming frame grouper: a timestamp change closes the open frame."""

    def __init__(self):
        self._open: Optional[dict] = None

    def push(self, update: TagUpdate) -> Optional[TagFrame]:
        closed = None
        if self._open is not None and update.timestamp != self._open["ts"]:
            closed = self._finish()
        if self._open is None:
            self._open = {"ts": update.timestamp, "facility": update.facility_id,
                          "state": None, "channels": {}}
        if update.tag == STATE_TAG:
            self._open["state"] = str(update.value)
        else:
            self._open["channels"][update.tag] = float(update.value)
        return closed

    def flush(self) -> Optional[TagFrame]:
        return self._finish()

    def _finish(self) -> Optional[TagFrame]:
        if self._open is None:
            return None
        slot, self._open = self._open, None
        if slot["state"] is None and not slot["channels"]:
            return None
        return TagFrame(timestamp=slot["ts"], facility_id=slot["facility"],
                        state_id=slot["state"], channels=slot["channels"])


@dataclass
class SocketIngestStats:
    frames: int = 0
    skipped_lines: int = 0
    connections: int = 0


class SocketIngest:
    """Listens on a TCP port for newline-delimited TagUpdate records.

    One client at a time; grouped frames go onto the bus as they complete.
    """

    def __init__(self, bus: MessageBus, host: str = "127.0.0.1", port: int = 0,
                 topic: str = FRAMES_TOPIC):
        self._bus = bus
        self._topic = topic
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.2)
        self.host, self.port = self._server.getsockname()[:2]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="socket-ingest", daemon=True)
        self.stats = SocketIngestStats()

    def start(self) -> "SocketIngest":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2.0)
        self._server.close()

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                self.stats.connections += 1
                self._consume(conn)

    def _consume(self, conn: socket.socket) -> None:
        assembler = _FrameAssembler()
        conn.settimeout(0.2)
        buf = b""
        while not self._stop.is_set():
            try:
                data = conn.recv(4096)
            except socket.timeout:
                continue
            except OSError:
                break
            if not data:
                break
            buf += data
            while b"\n" in buf:
                raw, buf = buf.split(b"\n", 1)
                line = raw.decode("utf-8", errors="replace")
                if not line.strip():
                    continue
                try:
                    update = parse_replay_line(line)
                except ValueError as exc:
                    self.stats.skipped_lines += 1
                    warnings.warn(f"skipping malformed socket line: {exc}", ReplayWarning)
                    continue
                done = assembler.push(update)
                if done is not None:
                    self._bus.publish(self._topic, done)
                    self.stats.frames += 1
        tail = assembler.flush()
        if tail is not None:
            self._bus.publish(self._topic, tail)
            self.stats.frames += 1
