"""
Deterministic discrete-time simulation of a pull-based streaming overlay.
One tick is one request period. Each tick: the source emits and pushes each new
chunk to one of its neighbors, buffer maps from the end of the previous tick are
read, every peer schedules, uploaders serve requests within their capacity, and
windows slide.
"""

import functools
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from .exceptions import InvariantViolation
from .metrics import NodeTrace, TraceSet, build_report, csv_rows
from .peer import (
    BandwidthEstimator,
    PendingRequests,
    ReliabilityTracker,
    SlidingWindow,
    advance,
    decode_buffer_map,
    encode_buffer_map,
    pending_requests_refresh,
)
from .priority import ChunkMeta, PriorityParams, chunk_priority, priority_sort_key, theta_for_strategy
from .schedulers import STRATEGIES, NeighborView, check_decision, schedule

logger = logging.getLogger(__name__)

# Peer classes of the reference experiment: (fraction, download Kbps), upload = download / 2
DEFAULT_BANDWIDTH_CLASSES = ((0.4, 512.0), (0.3, 1000.0), (0.3, 2000.0))
OVERLAY_ATTEMPTS = 50


@dataclass(frozen=True)
class BandwidthClass:
    fraction: float
    download_kbps: float

    @property
    def upload_kbps(self):
        return self.download_kbps / 2


@dataclass(frozen=True)
class StreamSpec:
    """
    Layered stream description; layers=1 is the single-layer case.
    """
    layers: int = 1
    layer_rate_kbps: tuple = (500.0,)
    chunk_size_kbits: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, 'layer_rate_kbps', tuple(float(r) for r in self.layer_rate_kbps))
        if self.layers < 1:
            raise ValueError('stream needs at least one layer')
        if len(self.layer_rate_kbps) != self.layers:
            raise ValueError(f'{self.layers} layers but {len(self.layer_rate_kbps)} layer rates')
        if self.chunk_size_kbits <= 0:
            raise ValueError('chunk_size_kbits must be positive')
        for layer, rate in enumerate(self.layer_rate_kbps, start=1):
            per_tick = rate / self.chunk_size_kbits
            if rate <= 0 or not math.isclose(per_tick, round(per_tick)):
                raise ValueError(
                    f'layer {layer}: {rate} Kbps / {self.chunk_size_kbits} Kbit is not a whole number of chunks per tick'
                )

    @property
    def chunks_per_layer(self):
        return tuple(int(round(r / self.chunk_size_kbits)) for r in self.layer_rate_kbps)

    @property
    def chunks_per_tick(self):
        return sum(self.chunks_per_layer)

    @property
    def rate_kbps(self):
        return sum(self.layer_rate_kbps)

    def playable_layers(self, download_kbps):
        """
        Number of layers whose cumulative rate fits the download capacity.
        """
        total = 0.0
        count = 0
        for rate in self.layer_rate_kbps:
            total += rate
            if total > download_kbps + 1e-9:
                break
            count += 1
        return count

    def with_total_rate(self, total_kbps):
        return StreamSpec(self.layers, (total_kbps / self.layers,) * self.layers, self.chunk_size_kbits)


@dataclass(frozen=True)
class PrioritySettings:
    theta: float | None = None
    theta_strategy: str | None = None
    ep_base: float = 10.0
    lp_base: float = 10.0
    min_exponent: int = -30


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 500
    degree: int = 15
    seed: int = 0
    duration: int = 60
    strategy: str = 'nassched'
    window_seconds: int = 10
    request_period: int = 1
    source_upload_factor: float = 4.0
    stream: StreamSpec = field(default_factory=StreamSpec)
    priority: PrioritySettings = field(default_factory=PrioritySettings)
    bandwidth_classes: tuple = tuple(BandwidthClass(f, d) for f, d in DEFAULT_BANDWIDTH_CLASSES)

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError('node_count must be >= 2')
        if not 1 <= self.degree < self.node_count:
            raise ValueError(f'degree {self.degree} must be in [1, node_count)')
        if self.duration < 0:
            raise ValueError('duration must be >= 0')
        if self.window_seconds < 1:
            raise ValueError('window_seconds must be >= 1')
        if self.request_period != 1:
            raise ValueError('request_period is fixed at 1 tick')
        if self.strategy not in STRATEGIES:
            raise ValueError(f'unknown strategy {self.strategy!r}')
        if not self.bandwidth_classes:
            raise ValueError('at least one bandwidth class is required')
        total = sum(c.fraction for c in self.bandwidth_classes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f'bandwidth class fractions sum to {total}, expected 1.0')

    @property
    def window_ticks(self):
        return self.window_seconds // self.request_period

    @property
    def warmup(self):
        return self.window_ticks

    def priority_params(self):
        settings = self.priority
        theta = settings.theta
        if theta is None and settings.theta_strategy:
            theta = theta_for_strategy(
                settings.theta_strategy, self.stream.layers, self.window_ticks, settings.ep_base, settings.lp_base
            )
        return PriorityParams(
            max_layer=self.stream.layers,
            theta=theta,
            ep_base=settings.ep_base,
            lp_base=settings.lp_base,
            min_exponent=settings.min_exponent,
        )

    def to_dict(self):
        data = asdict(self)
        data['stream']['layer_rate_kbps'] = list(self.stream.layer_rate_kbps)
        data['bandwidth_classes'] = [asdict(c) for c in self.bandwidth_classes]
        return data

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class OverlayGraph:
    adjacency: dict
    bandwidth_class: tuple
    source: int = 0
    irregular: bool = False

    def neighbors(self, node):
        return self.adjacency[node]

    def degree(self, node):
        return len(self.adjacency[node])


def _class_quota(fractions, count):
    # largest-remainder apportionment
    raw = [f * count for f in fractions]
    quota = [int(math.floor(x)) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - quota[i]), i))
    for i in order[:count - sum(quota)]:
        quota[i] += 1
    return quota


def generate_overlay(config, rng=None):
    """
    Random overlay with `degree` neighbors per node.
    When node_count * degree is odd one random node gets degree + 1.
    Bandwidth classes are dealt from a shuffled quota.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n, d = config.node_count, config.degree
    if d >= n:
        raise ValueError(f'degree {d} is unsatisfiable with {n} nodes')

    irregular = (n * d) % 2 == 1
    graph = None
    for _ in range(OVERLAY_ATTEMPTS):
        graph_seed = int(rng.integers(2 ** 32))
        try:
            if irregular:
                sequence = [d] * n
                sequence[int(rng.integers(n))] += 1
                graph = nx.random_degree_sequence_graph(sequence, seed=graph_seed, tries=20)
            else:
                graph = nx.random_regular_graph(d, n, seed=graph_seed)
            break
        except (nx.NetworkXError, nx.NetworkXUnfeasible):
            logger.debug('overlay attempt failed n=%s degree=%s', n, d)
    if graph is None:
        raise ValueError(f'could not build a random overlay with n={n} degree={d}')

    adjacency = {node: tuple(sorted(int(v) for v in graph.neighbors(node))) for node in range(n)}
    quota = _class_quota([c.fraction for c in config.bandwidth_classes], n)
    classes = np.repeat(np.arange(len(quota)), quota)
    rng.shuffle(classes)
    return OverlayGraph(adjacency, tuple(int(c) for c in classes), source=0, irregular=irregular)


class StreamLayout:
    """
    Maps chunk seqs to (emission tick, layer, position) for one stream and window.
    Per tick the layers are laid out in order, chunks_per_layer[l-1] seqs each.
    """

    def __init__(self, stream, window_ticks):
        self.stream = stream
        self.window_ticks = window_ticks
        self.chunks_per_tick = stream.chunks_per_tick
        self.offsets = tuple(int(x) for x in np.cumsum((0,) + stream.chunks_per_layer))
        self.meta = functools.lru_cache(maxsize=1 << 16)(self._meta)

    def _meta(self, seq):
        tick, within = divmod(seq, self.chunks_per_tick)
        layer = int(np.searchsorted(self.offsets, within, side='right'))
        return ChunkMeta(seq=seq, layer=layer, deadline=tick + self.window_ticks, size=1)

    def emitted(self, tick):
        return range(tick * self.chunks_per_tick, (tick + 1) * self.chunks_per_tick)


@dataclass
class Peer:
    node_id: int
    neighbors: tuple
    download: int
    upload: int
    download_kbps: float
    window: SlidingWindow
    estimator: BandwidthEstimator = None
    reliability: ReliabilityTracker = field(default_factory=ReliabilityTracker)
    pending: PendingRequests = field(default_factory=PendingRequests)
    is_source: bool = False


@dataclass
class RunCounters:
    ticks: int = 0
    schedule_calls: int = 0
    requests_sent: int = 0
    delivered: int = 0
    failed: int = 0
    pushed: int = 0
    truncated: int = 0
    expired: int = 0
    duplicate_requests: int = 0


def serve_requests(queue, budget):
    """
    Split one uploader's queue of (priority, requester_id, chunk) into served and
    failed requests. Service runs in descending priority, then lower requester id,
    then lower seq, and stops at the first chunk the remaining budget cannot cover.
    """
    ordered = sorted(queue, key=lambda item: (-item[0], item[1], item[2].seq))
    for position, (_, _, chunk) in enumerate(ordered):
        if budget < chunk.size:
            return ordered[:position], ordered[position:]
        budget -= chunk.size
    return ordered, []


class World:
    """
    Whole-overlay state for one run.
    """

    def __init__(self, config):
        self.config = config
        self.strategy = config.strategy
        self.seed = config.seed
        self.rng = np.random.default_rng(self.seed)
        self.params = config.priority_params()
        self.layout = StreamLayout(config.stream, config.window_ticks)
        self.overlay = generate_overlay(config, self.rng)
        self.counters = RunCounters()
        self.tick_load = {}

        cpt = self.layout.chunks_per_tick
        size = config.stream.chunk_size_kbits
        self.peers = []
        for node in range(config.node_count):
            klass = config.bandwidth_classes[self.overlay.bandwidth_class[node]]
            is_source = node == self.overlay.source
            upload = int(round(config.source_upload_factor * cpt)) if is_source else int(klass.upload_kbps // size)
            self.peers.append(Peer(
                node_id=node,
                neighbors=self.overlay.neighbors(node),
                download=int(klass.download_kbps // size),
                upload=upload,
                download_kbps=klass.download_kbps,
                window=SlidingWindow(cpt, config.window_ticks),
                is_source=is_source,
            ))
        for peer in self.peers:
            nominal = {nb: max(1, min(peer.download, self.peers[nb].upload)) for nb in peer.neighbors}
            peer.estimator = BandwidthEstimator(nominal)

        self.maps = {peer.node_id: decode_buffer_map(encode_buffer_map(peer.window)) for peer in self.peers}

        # measured chunks: emitted during [warmup, warmup + duration)
        first = config.warmup * cpt
        self.measured = range(first, first + config.duration * cpt)
        self.on_time = {
            peer.node_id: np.zeros((config.duration, cpt), dtype=bool)
            for peer in self.peers if not peer.is_source
        }

    @property
    def total_ticks(self):
        if self.config.duration == 0:
            return 0
        return self.config.warmup + self.config.duration + self.config.window_ticks

    def _record_delivery(self, peer, seq):
        if seq in self.measured:
            tick, within = divmod(seq - self.measured.start, self.layout.chunks_per_tick)
            self.on_time[peer.node_id][tick, within] = True

    def _schedule_peer(self, peer, tick):
        pending_requests_refresh(peer.pending, tick)
        missing = [self.layout.meta(seq) for seq in peer.window.unreceived() if seq not in peer.pending]
        views = [
            NeighborView(
                neighbor_id=nb,
                buffer_map=self.maps[nb],
                est_download=peer.estimator.estimate(nb),
                reliability=peer.reliability.reliability(nb),
            )
            for nb in peer.neighbors
        ]
        decision = schedule(self.strategy, missing, views, tick, self.params, self.rng)
        self.counters.schedule_calls += 1
        problems = check_decision(decision, missing, views)
        if problems:
            logger.error('infeasible decision node=%s tick=%s problems=%s', peer.node_id, tick, problems)
            raise InvariantViolation(f'node {peer.node_id} tick {tick}: {problems[0]}')
        return decision

    def _push_fresh(self, source, tick):
        """
        Hand every chunk emitted this tick to one source neighbor, starting at
        neighbors[seq % degree] and moving on past neighbors whose download is full.
        Returns the number of chunks pushed to each receiver.
        """
        pushed = {}
        budget = source.upload
        neighbors = source.neighbors
        for seq in self.layout.emitted(tick):
            if budget < 1:
                break
            for offset in range(len(neighbors)):
                target = self.peers[neighbors[(seq + offset) % len(neighbors)]]
                if pushed.get(target.node_id, 0) < target.download:
                    target.window.mark_received(seq)
                    self._record_delivery(target, seq)
                    pushed[target.node_id] = pushed.get(target.node_id, 0) + 1
                    budget -= 1
                    break
        return pushed

    def step(self, tick):
        """
        Advance the world through one request period.
        """
        source = self.peers[self.overlay.source]
        for seq in self.layout.emitted(tick):
            source.window.received.add(seq)
        pushed = self._push_fresh(source, tick)
        pushed_total = sum(pushed.values())
        self.counters.pushed += pushed_total
        load = {peer.node_id: [pushed.get(peer.node_id, 0), 0] for peer in self.peers}
        load[source.node_id][1] = pushed_total

        inbox = {peer.node_id: [] for peer in self.peers}
        sent = {}
        for peer in self.peers:
            if peer.is_source:
                continue
            decision = self._schedule_peer(peer, tick)
            requests = []
            for seq, neighbor in decision.requests.items():
                chunk = self.layout.meta(seq)
                requests.append((chunk_priority(chunk, tick, self.params), chunk, neighbor))
            requests.sort(key=lambda item: priority_sort_key(item[0], item[1]))
            room = max(0, peer.download - pushed.get(peer.node_id, 0))
            if len(requests) > room:
                self.counters.truncated += len(requests) - room
                requests = requests[:room]
            for prio, chunk, neighbor in requests:
                if chunk.seq in peer.pending:
                    self.counters.duplicate_requests += 1
                    raise InvariantViolation(f'node {peer.node_id} re-requested pending seq {chunk.seq}')
                peer.pending.add(chunk.seq, neighbor, tick, chunk.deadline)
                inbox[neighbor].append((prio, peer.node_id, chunk))
                sent[(peer.node_id, neighbor)] = sent.get((peer.node_id, neighbor), 0) + 1
            self.counters.requests_sent += len(requests)

        served = {}
        for uploader in self.peers:
            budget = uploader.upload - load[uploader.node_id][1]
            delivered, failed = serve_requests(inbox[uploader.node_id], budget)
            for _, requester_id, chunk in delivered:
                if chunk.seq not in uploader.window.received:
                    raise InvariantViolation(f'node {uploader.node_id} asked for seq {chunk.seq} it does not hold')
                requester = self.peers[requester_id]
                requester.window.mark_received(chunk.seq)
                requester.pending.resolve(chunk.seq)
                self._record_delivery(requester, chunk.seq)
                load[requester_id][0] += chunk.size
                load[uploader.node_id][1] += chunk.size
                served[(requester_id, uploader.node_id)] = served.get((requester_id, uploader.node_id), 0) + 1
            self.counters.failed += len(failed)

        for (requester_id, neighbor), promised in sent.items():
            delivered = served.get((requester_id, neighbor), 0)
            peer = self.peers[requester_id]
            peer.reliability.record(neighbor, promised, delivered)
            # a fully served link only shows a lower bound on its rate
            sample = delivered if delivered < promised else peer.estimator.nominal(neighbor)
            peer.estimator.record(neighbor, sample)
        self.counters.delivered += sum(served.values())
        self.tick_load = {node: tuple(pair) for node, pair in load.items()}

        for peer in self.peers:
            _, expired = advance(peer.window, tick + 1)
            if not peer.is_source:
                self.counters.expired += sum(1 for seq in expired if seq in self.measured)
        self.maps = {peer.node_id: decode_buffer_map(encode_buffer_map(peer.window)) for peer in self.peers}
        self.counters.ticks += 1
        logger.debug('tick=%s pushed=%s delivered=%s failed=%s', tick, pushed_total,
                     self.counters.delivered, self.counters.failed)

    def traces(self):
        nodes = [
            NodeTrace(
                node_id=peer.node_id,
                playable_layers=self.config.stream.playable_layers(peer.download_kbps),
                on_time=self.on_time[peer.node_id],
            )
            for peer in self.peers if not peer.is_source
        ]
        return TraceSet(
            layers=self.config.stream.layers,
            chunks_per_layer=self.config.stream.chunks_per_layer,
            nodes=nodes,
        )


def run_simulation(config):
    """
    Run one scenario end to end and return its MetricsReport.
    """
    world = World(config)
    logger.info(
        'run start strategy=%s seed=%s nodes=%s degree=%s layers=%s rate_kbps=%s window_s=%s',
        world.strategy, world.seed, config.node_count, config.degree,
        config.stream.layers, config.stream.rate_kbps, config.window_seconds,
    )
    for tick in range(world.total_ticks):
        world.step(tick)

    counters = asdict(world.counters)
    counters['overlay_irregular'] = world.overlay.irregular
    report = build_report(
        world.traces(),
        strategy=world.strategy,
        seed=world.seed,
        stream_rate_kbps=config.stream.rate_kbps,
        window_s=config.window_seconds,
        config_hash=config.config_hash(),
        expired_count=world.counters.expired,
        requested_count=world.counters.requests_sent,
        duplicate_request_count=world.counters.duplicate_requests,
        runtime=counters,
    )
    logger.info(
        'run done strategy=%s seed=%s aggregate=%s delivered=%s failed=%s',
        world.strategy, world.seed, report.aggregate_delivery, world.counters.delivered, world.counters.failed,
    )
    return report


def run_rows(config):
    """
    CSV rows of one run; the unit of work of a sweep.
    """
    return csv_rows(run_simulation(config))
