"""
Delivery-ratio metrics and report files.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvariantViolation

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['strategy', 'seed', 'layers', 'layer', 'delivery_ratio', 'stream_rate_kbps', 'window_s']
SUMMARY_COLUMNS = ['strategy', 'stream_rate_kbps', 'window_s', 'layers', 'layer', 'mean', 'stddev', 'runs']
FORMATS = ('csv', 'json')


@dataclass
class NodeTrace:
    """
    on_time[t, i]: chunk i of measured tick t arrived no later than its deadline.
    Columns follow the per-tick seq layout (layer 1 chunks first).
    """
    node_id: int
    playable_layers: int
    on_time: np.ndarray


@dataclass
class TraceSet:
    layers: int
    chunks_per_layer: tuple
    nodes: list = field(default_factory=list)

    @property
    def offsets(self):
        return tuple(int(x) for x in np.cumsum((0,) + tuple(self.chunks_per_layer)))

    @property
    def ticks(self):
        return self.nodes[0].on_time.shape[0] if self.nodes else 0

    def well_received(self, node, layer):
        """
        Layer-l chunks received on time together with their lower-layer siblings.
        The sibling of position i in a lower layer is its proportional position.
        """
        offsets = self.offsets
        k = self.chunks_per_layer[layer - 1]
        well = node.on_time[:, offsets[layer - 1]:offsets[layer]].copy()
        for lower in range(1, layer):
            k_lower = self.chunks_per_layer[lower - 1]
            siblings = offsets[lower - 1] + (np.arange(k) * k_lower) // k
            well &= node.on_time[:, siblings]
        return well


def layered_delivery_ratio(traces, layer):
    """
    Mean over nodes able to play `layer` of well-received / emitted layer-l chunks.
    """
    if not 1 <= layer <= traces.layers:
        raise ValueError(f'layer {layer} outside [1, {traces.layers}]')
    ratios = []
    for node in traces.nodes:
        if node.playable_layers < layer:
            continue
        well = traces.well_received(node, layer)
        if well.size:
            ratios.append(well.sum() / well.size)
    if not ratios:
        logger.warning('no node can play layer=%s', layer)
        return 0.0
    return float(np.mean(ratios))


def single_layer_delivery_ratio(traces):
    """
    Mean over nodes of on-time / emitted chunks.
    """
    ratios = [node.on_time.sum() / node.on_time.size for node in traces.nodes if node.on_time.size]
    return float(np.mean(ratios)) if ratios else 0.0


def aggregate_delivery_ratio(traces):
    """
    Per node: well-received over emitted across the layers it can play; averaged over nodes.
    """
    if traces.layers == 1:
        return single_layer_delivery_ratio(traces)
    ratios = []
    for node in traces.nodes:
        if node.playable_layers < 1:
            continue
        well = sum(int(traces.well_received(node, l).sum()) for l in range(1, node.playable_layers + 1))
        emitted = traces.ticks * sum(traces.chunks_per_layer[:node.playable_layers])
        if emitted:
            ratios.append(well / emitted)
    return float(np.mean(ratios)) if ratios else 0.0


@dataclass(frozen=True)
class MetricsReport:
    strategy: str
    seed: int
    layers: int
    stream_rate_kbps: float
    window_s: int
    config_hash: str
    per_layer_delivery: tuple = ()
    aggregate_delivery: float | None = None
    expired_count: int = 0
    requested_count: int = 0
    duplicate_request_count: int = 0
    runtime: dict = field(default_factory=dict)

    def validate(self):
        for layer, ratio in self.per_layer_delivery:
            if not 0.0 <= ratio <= 1.0:
                raise InvariantViolation(f'layer {layer} delivery ratio {ratio} outside [0, 1]')
        if self.aggregate_delivery is not None and not 0.0 <= self.aggregate_delivery <= 1.0:
            raise InvariantViolation(f'aggregate delivery ratio {self.aggregate_delivery} outside [0, 1]')
        if self.duplicate_request_count != 0:
            raise InvariantViolation(f'{self.duplicate_request_count} duplicate requests')
        return self

    def to_dict(self):
        return {
            'strategy': self.strategy,
            'seed': self.seed,
            'layers': self.layers,
            'stream_rate_kbps': self.stream_rate_kbps,
            'window_s': self.window_s,
            'config_hash': self.config_hash,
            'aggregate_delivery': self.aggregate_delivery,
            'per_layer_delivery': [{'layer': layer, 'ratio': ratio} for layer, ratio in self.per_layer_delivery],
            'expired_count': self.expired_count,
            'requested_count': self.requested_count,
            'duplicate_request_count': self.duplicate_request_count,
            'runtime': {key: self.runtime[key] for key in sorted(self.runtime)},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            strategy=data['strategy'],
            seed=data['seed'],
            layers=data['layers'],
            stream_rate_kbps=data['stream_rate_kbps'],
            window_s=data['window_s'],
            config_hash=data['config_hash'],
            per_layer_delivery=tuple((row['layer'], row['ratio']) for row in data['per_layer_delivery']),
            aggregate_delivery=data['aggregate_delivery'],
            expired_count=data['expired_count'],
            requested_count=data['requested_count'],
            duplicate_request_count=data['duplicate_request_count'],
            runtime=dict(data.get('runtime', {})),
        )


def build_report(traces, **fields):
    """
    Assemble a MetricsReport from traces; empty traces give empty metrics.
    """
    per_layer = ()
    aggregate = None
    if traces.ticks:
        per_layer = tuple((layer, layered_delivery_ratio(traces, layer)) for layer in range(1, traces.layers + 1))
        aggregate = aggregate_delivery_ratio(traces)
    return MetricsReport(layers=traces.layers, per_layer_delivery=per_layer, aggregate_delivery=aggregate, **fields).validate()


def _number(value):
    return f'{value:g}' if isinstance(value, float) else str(value)


def csv_rows(report):
    """
    One row per layer plus layer=0 for the aggregate; nothing for an empty report.
    """
    if not report.per_layer_delivery:
        return []
    common = [report.strategy, str(report.seed), str(report.layers)]
    tail = [_number(report.stream_rate_kbps), _number(report.window_s)]
    rows = [common + [str(layer), f'{ratio:.6f}'] + tail for layer, ratio in report.per_layer_delivery]
    rows.append(common + ['0', f'{report.aggregate_delivery:.6f}'] + tail)
    return rows


def write_csv(path, rows, columns=CSV_COLUMNS):
    path = Path(path)
    try:
        with path.open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(columns)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f'cannot write {path}: {exc}') from exc
    return path


def read_csv(path):
    """
    Returns (header, rows) with every cell kept as text.
    """
    path = Path(path)
    try:
        with path.open(newline='', encoding='utf-8') as handle:
            reader = csv.reader(handle)
            header = next(reader, [])
            return header, [row for row in reader]
    except OSError as exc:
        raise OSError(f'cannot read {path}: {exc}') from exc


def report_json(report):
    return json.dumps(report.to_dict(), indent=2) + '\n'


def emit_report(report, fmt, path):
    """
    Write a report as CSV or JSON to `path`.
    """
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise ValueError(f'unknown report format {fmt!r}')
    path = Path(path)
    if fmt == 'csv':
        return write_csv(path, csv_rows(report))
    try:
        path.write_text(report_json(report), encoding='utf-8')
    except OSError as exc:
        raise OSError(f'cannot write {path}: {exc}') from exc
    return path


def summarize(rows):
    """
    Mean and sample stddev of delivery_ratio per (strategy, rate, window, layers, layer) cell.
    """
    cells = {}
    for row in rows:
        strategy, _seed, layers, layer, ratio, rate, window = row
        cells.setdefault((strategy, rate, window, layers, layer), []).append(float(ratio))
    summary = []
    for (strategy, rate, window, layers, layer), values in sorted(
        cells.items(), key=lambda item: (item[0][0], float(item[0][1]), float(item[0][2]), int(item[0][3]), int(item[0][4]))
    ):
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        summary.append([strategy, rate, window, layers, layer, f'{np.mean(values):.6f}', f'{std:.6f}', str(len(values))])
    return summary
