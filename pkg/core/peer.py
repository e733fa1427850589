"""
Per-node streaming state.
Sliding window, buffer-map wire codec, pending-request bookkeeping,
per-neighbor bandwidth prediction and reliability.
"""

import logging
import math
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvariantViolation

logger = logging.getLogger(__name__)

# 8-byte LE start_seq, 4-byte LE bit_count
HEADER = struct.Struct('<QI')

HISTORY_LEN = 5
NLMS_STEP = 0.1


@dataclass(frozen=True, eq=False)
class BufferMap:
    """
    Availability bits over [start_seq, start_seq + len(bits)).
    """
    start_seq: int
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'bits', np.asarray(self.bits, dtype=bool).reshape(-1))
        if self.start_seq < 0:
            raise ValueError('start_seq must be non-negative')

    def __eq__(self, other):
        if not isinstance(other, BufferMap):
            return NotImplemented
        return self.start_seq == other.start_seq and np.array_equal(self.bits, other.bits)

    def __len__(self):
        return len(self.bits)

    @classmethod
    def from_seqs(cls, start_seq, length, held):
        bits = np.zeros(length, dtype=bool)
        for seq in held:
            offset = seq - start_seq
            if 0 <= offset < length:
                bits[offset] = True
        return cls(start_seq, bits)

    def holds(self, seq):
        offset = seq - self.start_seq
        return 0 <= offset < len(self.bits) and bool(self.bits[offset])

    def held_seqs(self):
        return {self.start_seq + int(i) for i in np.flatnonzero(self.bits)}


@dataclass
class SlidingWindow:
    """
    Window of playable chunks for one node.

    The window covers every emitted chunk whose deadline has not passed:
    [playhead, end) with end = (tick + 1) * chunks_per_tick and at most
    window_len = (window_ticks + 1) * chunks_per_tick seqs. Everything past the
    playhead is exchangeable.
    """
    chunks_per_tick: int
    window_ticks: int
    tick: int = 0
    received: set = field(default_factory=set)

    @property
    def window_len(self):
        return (self.window_ticks + 1) * self.chunks_per_tick

    @property
    def end(self):
        return (self.tick + 1) * self.chunks_per_tick

    @property
    def playhead(self):
        return max(0, self.end - self.window_len)

    @property
    def exchange_start(self):
        return self.playhead

    def contains(self, seq):
        return self.playhead <= seq < self.end

    def mark_received(self, seq):
        """
        Record a delivery; returns False for seqs outside the window.
        """
        if not self.contains(seq):
            return False
        if seq in self.received:
            raise InvariantViolation(f'duplicate delivery of seq {seq}')
        self.received.add(seq)
        return True

    def unreceived(self):
        return [seq for seq in range(self.playhead, self.end) if seq not in self.received]

    def buffer_map(self):
        start = self.playhead
        return BufferMap.from_seqs(start, self.end - start, self.received)


def advance(window, to_tick):
    """
    Move the playhead to `to_tick`. Returns the window and the seqs that left it unreceived.
    """
    if to_tick < window.tick:
        raise ValueError(f'cannot advance backwards ({window.tick} -> {to_tick})')
    old_playhead = window.playhead
    window.tick = to_tick
    new_playhead = window.playhead
    expired = [seq for seq in range(old_playhead, new_playhead) if seq not in window.received]
    window.received = {seq for seq in window.received if seq >= new_playhead}
    return window, expired


def encode_buffer_map(source):
    """
    Serialise a BufferMap (or a SlidingWindow's current map) to the wire format.
    """
    bm = source.buffer_map() if isinstance(source, SlidingWindow) else source
    payload = np.packbits(bm.bits, bitorder='little').tobytes() if len(bm.bits) else b''
    return HEADER.pack(bm.start_seq, len(bm.bits)) + payload


def decode_buffer_map(data):
    """
    Parse the wire format. Rejects truncated or oversized payloads and non-zero pad bits.
    """
    if len(data) < HEADER.size:
        raise ValueError(f'buffer map truncated: {len(data)} bytes, header needs {HEADER.size}')
    start_seq, bit_count = HEADER.unpack_from(data)
    expected = math.ceil(bit_count / 8)
    payload = data[HEADER.size:]
    if len(payload) < expected:
        raise ValueError(f'buffer map truncated: {bit_count} bits need {expected} bytes, got {len(payload)}')
    if len(payload) > expected:
        raise ValueError(f'buffer map has {len(payload) - expected} trailing bytes')
    raw = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder='little')
    if raw[bit_count:].any():
        raise ValueError('buffer map pad bits must be zero')
    return BufferMap(start_seq, raw[:bit_count].astype(bool))


@dataclass
class LinkPredictor:
    """
    Adaptive linear predictor over the last HISTORY_LEN delivery samples of one link.
    Uniform initial weights make it a moving average; NLMS adapts them.
    """
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LEN))
    weights: np.ndarray = field(default_factory=lambda: np.full(HISTORY_LEN, 1.0 / HISTORY_LEN))
    step: float = NLMS_STEP

    def __post_init__(self):
        self.history = deque(self.history, maxlen=HISTORY_LEN)
        self.weights = np.asarray(self.weights, dtype=float)

    def _regressor(self):
        # oldest first; short histories are left-padded with the oldest sample
        samples = list(self.history)
        padding = [samples[0]] * (HISTORY_LEN - len(samples))
        return np.asarray(padding + samples, dtype=float)

    def predict(self):
        if not self.history:
            return None
        return float(self.weights @ self._regressor())

    def observe(self, sample):
        if self.history:
            x = self._regressor()
            error = sample - float(self.weights @ x)
            self.weights = np.clip(self.weights + self.step * error * x / (x @ x + 1e-9), 0.0, 1.0)
        self.history.append(sample)


class BandwidthEstimator:
    """
    Per-neighbor download estimate in chunks/tick.
    Neighbors without history fall back to their nominal link capacity.
    """

    def __init__(self, initial_capacity, step=NLMS_STEP):
        self.initial_capacity = dict(initial_capacity)
        self.step = step
        self._links = {}

    def predictor(self, neighbor):
        if neighbor not in self._links:
            self._links[neighbor] = LinkPredictor(step=self.step)
        return self._links[neighbor]

    def nominal(self, neighbor):
        return max(1, int(self.initial_capacity.get(neighbor, 1)))

    def estimate(self, neighbor):
        nominal = self.nominal(neighbor)
        prediction = self.predictor(neighbor).predict()
        if prediction is None:
            return nominal
        return min(nominal, max(1, math.floor(prediction + 0.5)))

    def record(self, neighbor, sample):
        self.predictor(neighbor).observe(sample)


def estimate_bandwidth(est, neighbor):
    return est.estimate(neighbor)


class ReliabilityTracker:
    """
    Fraction of promised chunks a neighbor delivered over the last HISTORY_LEN periods.
    """

    def __init__(self):
        self._periods = {}

    def record(self, neighbor, promised, delivered):
        if promised <= 0:
            return
        self._periods.setdefault(neighbor, deque(maxlen=HISTORY_LEN)).append((promised, delivered))

    def reliability(self, neighbor):
        periods = self._periods.get(neighbor)
        if not periods:
            return 1.0
        promised = sum(p for p, _ in periods)
        delivered = sum(d for _, d in periods)
        return delivered / promised


@dataclass(frozen=True)
class PendingRequest:
    seq: int
    neighbor: int
    issued: int
    deadline: int


class PendingRequests:
    """
    Requests issued by one node and not yet delivered.
    """

    def __init__(self):
        self._pending = {}
        self.expired_count = 0

    def __contains__(self, seq):
        return seq in self._pending

    def __len__(self):
        return len(self._pending)

    def add(self, seq, neighbor, tick, deadline):
        if seq in self._pending:
            raise InvariantViolation(
                f'seq {seq} already pending to neighbor {self._pending[seq].neighbor}, '
                f'cannot request it from {neighbor}'
            )
        self._pending[seq] = PendingRequest(seq, neighbor, tick, deadline)

    def resolve(self, seq):
        return self._pending.pop(seq, None)

    def get(self, seq):
        return self._pending.get(seq)

    def refresh(self, now):
        retry = []
        for seq, request in list(self._pending.items()):
            if request.issued >= now:
                continue
            del self._pending[seq]
            if request.deadline >= now:
                retry.append(seq)
            else:
                self.expired_count += 1
        return sorted(retry)


def pending_requests_refresh(pending, now):
    """
    Release requests issued before `now` that were never delivered.
    Unexpired ones are returned for re-request; expired ones are dropped and counted.
    """
    return pending.refresh(now)
