"""
Per-period chunk schedulers.
Every scheduler turns the missing chunks of one node and a snapshot of its
neighbors into a ScheduleDecision: which neighbor to ask for which chunk.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .priority import PriorityParams, chunk_priority
from .solvers import VIRTUAL_WEIGHT, WeightMatrix, knapsack_max, mcap_assignment

logger = logging.getLogger(__name__)

BASELINES = ('rnd', 'lrf', 'rr')
STRATEGIES = ('assched', 'nassched') + BASELINES


@dataclass(frozen=True)
class NeighborView:
    """
    What a node knows about one neighbor when it schedules.
    """
    neighbor_id: int
    buffer_map: object
    est_download: int
    reliability: float = 1.0

    def holds(self, seq):
        return self.buffer_map.holds(seq)


@dataclass(frozen=True)
class ScheduleDecision:
    requests: dict = field(default_factory=dict)
    unassigned: frozenset = frozenset()
    objective: float = 0.0

    def per_neighbor(self):
        grouped = {}
        for seq, neighbor in sorted(self.requests.items()):
            grouped.setdefault(neighbor, []).append(seq)
        return grouped


@dataclass(frozen=True)
class PriorityMatrix:
    """
    WeightMatrix with its row (neighbor) and column (chunk) labels.
    """
    weights: WeightMatrix
    neighbors: tuple
    chunks: tuple

    @property
    def rows(self):
        return self.weights.rows

    @property
    def cols(self):
        return self.weights.cols


def _default_params(missing):
    return PriorityParams(max_layer=max((c.layer for c in missing), default=1))


def build_matrix(missing, neighbors, now, params, priority=chunk_priority):
    """
    Neighbors x missing-chunks priority matrix.
    Rows by descending reliability (tie: lower id), columns by ascending seq;
    cells a neighbor does not hold are forbidden.
    """
    rows = tuple(sorted(neighbors, key=lambda nb: (-nb.reliability, nb.neighbor_id)))
    cols = tuple(sorted(missing, key=lambda c: c.seq))
    values = np.array([priority(c, now, params) for c in cols], dtype=float)
    seqs = np.array([c.seq for c in cols], dtype=np.int64)

    forbidden = np.ones((len(rows), len(cols)), dtype=bool)
    for r, nb in enumerate(rows):
        bm = nb.buffer_map
        offsets = seqs - bm.start_seq
        inside = (offsets >= 0) & (offsets < len(bm.bits))
        held = np.zeros(len(cols), dtype=bool)
        held[inside] = bm.bits[offsets[inside]]
        forbidden[r] = ~held

    cells = np.broadcast_to(values, forbidden.shape).copy()
    return PriorityMatrix(WeightMatrix(cells, forbidden), rows, cols)


def _decision(pm, requests, objective):
    unassigned = frozenset(c.seq for c in pm.chunks) - requests.keys()
    return ScheduleDecision(requests, unassigned, objective)


def assched(missing, neighbors, now, params, knapsack=knapsack_max, priority=chunk_priority):
    """
    Row-by-row knapsack heuristic for the generalized assignment problem.
    Each neighbor, in reliability order, gets the best-value set of still
    unclaimed chunks it holds within its estimated bandwidth; claimed chunks
    are masked for every later row.
    """
    pm = build_matrix(missing, neighbors, now, params, priority)
    cells, forbidden = pm.weights.cells, pm.weights.forbidden
    sizes = [c.size for c in pm.chunks]
    claimed = np.zeros(pm.cols, dtype=bool)
    requests = {}
    objective = 0.0

    for r, nb in enumerate(pm.neighbors):
        candidates = np.flatnonzero(~forbidden[r] & ~claimed)
        if len(candidates) == 0 or nb.est_download < 1:
            continue
        result = knapsack(
            [float(cells[r, c]) for c in candidates],
            [sizes[c] for c in candidates],
            nb.est_download,
        )
        for idx in result.selected:
            c = candidates[idx]
            claimed[c] = True
            requests[pm.chunks[c].seq] = nb.neighbor_id
            objective += float(cells[r, c])

    return _decision(pm, requests, objective)


def expand_neighbors(pm):
    """
    One unit-capacity row per chunk/tick of estimated bandwidth, capped at the
    number of chunks the neighbor holds; columns nobody holds are dropped.
    Returns the expanded WeightMatrix, the source row of each expanded row and
    the matrix column of each kept column.
    """
    allowed = ~pm.weights.forbidden
    live_cols = np.flatnonzero(allowed.any(axis=0))
    held_counts = allowed[:, live_cols].sum(axis=1)
    counts = [min(max(0, nb.est_download), int(held)) for nb, held in zip(pm.neighbors, held_counts)]
    origin = np.repeat(np.arange(pm.rows), counts)
    grid = np.ix_(origin, live_cols)
    return WeightMatrix(pm.weights.cells[grid], pm.weights.forbidden[grid]), origin, live_cols


def nassched(missing, neighbors, now, params, virtual_weight=VIRTUAL_WEIGHT, priority=chunk_priority):
    """
    Optimal scheduling for equal-size chunks.
    Neighbors are expanded into unit rows, the matrix is squared with virtual
    rows or dummy columns and solved as a one-to-one assignment.
    """
    if any(c.size != 1 for c in missing):
        raise ValueError('nassched requires unit chunk sizes')

    pm = build_matrix(missing, neighbors, now, params, priority)
    if pm.rows == 0 or pm.cols == 0:
        return _decision(pm, {}, 0.0)

    sub, origin, live_cols = expand_neighbors(pm)
    if sub.rows == 0 or sub.cols == 0:
        return _decision(pm, {}, 0.0)
    matching = mcap_assignment(sub, virtual_weight)

    requests = {}
    for row, col in matching.pairs():
        chunk = pm.chunks[live_cols[col]]
        requests[chunk.seq] = pm.neighbors[origin[row]].neighbor_id
    logger.debug('nassched now=%s rows=%s cols=%s requested=%s', now, sub.rows, sub.cols, len(requests))
    return _decision(pm, requests, matching.objective)


def baseline_schedule(kind, missing, neighbors, now, rng, params=None, priority=chunk_priority):
    """
    Reference strategies.

    rnd: chunks in random order, each to a uniformly chosen holder with spare capacity.
    lrf: rarest chunks first (tie: earlier deadline, lower seq), each to the holder
         with the most spare capacity (tie: lower id).
    rr: chunks by seq, holders taken in rotation; a chunk nobody can serve is skipped.
    """
    kind = str(kind).lower()
    if kind not in BASELINES:
        raise ValueError(f'unknown baseline kind {kind!r}')
    params = params or _default_params(missing)

    order = list(neighbors)
    residual = {nb.neighbor_id: max(0, nb.est_download) for nb in order}
    holders = {c.seq: [nb for nb in order if nb.holds(c.seq)] for c in missing}
    requests = {}
    objective = 0.0

    def assign(chunk, nb):
        nonlocal objective
        residual[nb.neighbor_id] -= chunk.size
        requests[chunk.seq] = nb.neighbor_id
        objective += priority(chunk, now, params)

    if kind == 'rnd':
        for idx in rng.permutation(len(missing)):
            chunk = missing[int(idx)]
            candidates = [nb for nb in holders[chunk.seq] if residual[nb.neighbor_id] >= chunk.size]
            if candidates:
                assign(chunk, candidates[int(rng.integers(len(candidates)))])

    elif kind == 'lrf':
        for chunk in sorted(missing, key=lambda c: (len(holders[c.seq]), c.deadline, c.seq)):
            candidates = [nb for nb in holders[chunk.seq] if residual[nb.neighbor_id] >= chunk.size]
            if candidates:
                assign(chunk, min(candidates, key=lambda nb: (-residual[nb.neighbor_id], nb.neighbor_id)))

    else:
        cursor = 0
        for chunk in sorted(missing, key=lambda c: c.seq):
            for step in range(len(order)):
                k = (cursor + step) % len(order)
                nb = order[k]
                if nb.holds(chunk.seq) and residual[nb.neighbor_id] >= chunk.size:
                    assign(chunk, nb)
                    cursor = (k + 1) % len(order)
                    break

    unassigned = frozenset(c.seq for c in missing) - requests.keys()
    return ScheduleDecision(requests, unassigned, objective)


def schedule(kind, missing, neighbors, now, params, rng=None):
    """
    Dispatch to one of the five strategies.
    """
    kind = str(kind).lower()
    if kind == 'assched':
        return assched(missing, neighbors, now, params)
    if kind == 'nassched':
        return nassched(missing, neighbors, now, params)
    if rng is None:
        raise ValueError(f'baseline {kind!r} needs a seeded rng')
    return baseline_schedule(kind, missing, neighbors, now, rng, params)


def check_decision(decision, missing, neighbors):
    """
    List every broken constraint of a decision (empty list = feasible).
    """
    problems = []
    by_seq = {c.seq: c for c in missing}
    by_id = {nb.neighbor_id: nb for nb in neighbors}
    load = {}
    for seq, neighbor in decision.requests.items():
        if seq not in by_seq:
            problems.append(f'seq {seq} is not missing')
            continue
        nb = by_id.get(neighbor)
        if nb is None:
            problems.append(f'seq {seq} requested from unknown neighbor {neighbor}')
            continue
        if not nb.holds(seq):
            problems.append(f'seq {seq} requested from neighbor {neighbor} which does not hold it')
        load[neighbor] = load.get(neighbor, 0) + by_seq[seq].size
    for neighbor, size in load.items():
        if size > by_id[neighbor].est_download:
            problems.append(f'neighbor {neighbor} asked for {size} > capacity {by_id[neighbor].est_download}')
    overlap = decision.unassigned & decision.requests.keys()
    if overlap:
        problems.append(f'seqs both requested and unassigned: {sorted(overlap)}')
    return problems
