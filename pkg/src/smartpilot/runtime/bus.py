"""In-process publish/subscribe bus with bounded per-subscriber buffers.

Publishing never blocks on slow subscribers: each subscription owns a bounded
FIFO buffer and overflow evicts the oldest queued message, counted in a drop
metric. Per-topic order is guaranteed by serializing publishes on a per-topic
lock, so every subscriber sees strictly increasing seq numbers.
"""

from __future__ import annotations

import collections
import threading
import time
from typing import Optional

from .types import AgentMessage, now_ms

DEFAULT_CAPACITY = 1024


class Subscription:
    """One subscriber's view of a topic: a bounded FIFO with a drop counter."""

    def __init__(self, bus: "MessageBus", topic: str, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self._bus = bus
        self.topic = topic
        self.capacity = capacity
        self._buf = collections.deque()
        self._cond = threading.Condition()
        self._dropped = 0
        self._closed = False

    def _offer(self, message: AgentMessage) -> None:
        with self._cond:
            if self._closed:
                return
            if len(self._buf) >= self.capacity:
                self._buf.popleft()
                self._dropped += 1
            self._buf.append(message)
            self._cond.notify()

    def get(self, timeout: Optional[float] = None) -> Optional[AgentMessage]:
        """Pop the next message, blocking up to timeout; None on timeout/close."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._buf:
                if self._closed:
                    return None
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        return None
                    self._cond.wait(remaining)
            return self._buf.popleft()

    def try_get(self) -> Optional[AgentMessage]:
        with self._cond:
            return self._buf.popleft() if self._buf else None

    def drain(self) -> list:
        with self._cond:
            out = list(self._buf)
            self._buf.clear()
            return out

    def __len__(self) -> int:
        with self._cond:
            return len(self._buf)

    @property
    def dropped(self) -> int:
        with self._cond:
            return self._dropped

    @property
    def closed(self) -> bool:
        return self._closed

    def close(self) -> None:
        self._bus.unsubscribe(self)


class _Topic:
    __slots__ = ("lock", "seq", "subs")

    def __init__(self):
        self.lock = threading.Lock()
        self.seq = 0
        self.subs = []


class MessageBus:
    """Topic-based fan-out bus; memory is O(capacity x subscriptions)."""

    def __init__(self, default_capacity: int = DEFAULT_CAPACITY):
        if default_capacity < 1:
            raise ValueError("default_capacity must be >= 1")
        self._default_capacity = default_capacity
        self._lock = threading.Lock()
        self._topics: dict = {}
        self._retired_drops = collections.Counter()

    def _topic(self, name: str) -> _Topic:
        if not name:
            raise ValueError("topic must be non-empty")
        with self._lock:
            t = self._topics.get(name)
            if t is None:
                t = self._topics[name] = _Topic()
            return t

    def subscribe(self, topic: str, capacity: Optional[int] = None) -> Subscription:
        t = self._topic(topic)
        sub = Subscription(self, topic, self._default_capacity if capacity is None else capacity)
        with t.lock:
            t.subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        t = self._topic(sub.topic)
        with t.lock:
            if sub in t.subs:
                t.subs.remove(sub)
                with self._lock:
                    self._retired_drops[sub.topic] += sub.dropped
        with sub._cond:
            sub._closed = True
            sub._cond.notify_all()

    def publish(self, topic: str, payload: object) -> AgentMessage:
        """Deliver payload to all current subscribers; returns the envelope."""
        t = self._topic(topic)
        with t.lock:
            t.seq += 1
            message = AgentMessage(topic=topic, payload=payload, seq=t.seq, emitted_at=now_ms())
            for sub in t.subs:
                sub._offer(message)
        return message

    def last_seq(self, topic: str) -> int:
        t = self._topic(topic)
        with t.lock:
            return t.seq

    def topics(self) -> tuple:
        with self._lock:
            return tuple(sorted(self._topics))

    def dropped(self, topic: Optional[str] = None) -> int:
        """Total messages evicted from subscriber buffers, live plus retired."""
        with self._lock:
            names = [topic] if topic is not None else list(self._topics)
            retired = sum(self._retired_drops[n] for n in names)
            live_subs = []
            for n in names:
                t = self._topics.get(n)
                if t is not None:
                    live_subs.extend(t.subs)
        return retired + sum(s.dropped for s in live_subs)
