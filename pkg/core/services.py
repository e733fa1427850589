"""
Service layer for core business logic.
Handles scenario loading, single runs, sweeps, stored runs and ad-hoc solver calls.
"""

import csv
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from django.conf import settings
from django.db import transaction
from rest_framework.exceptions import ValidationError

from .metrics import CSV_COLUMNS, SUMMARY_COLUMNS, csv_rows, emit_report, summarize, write_csv
from .models import SimulationRun, LayerDelivery
from .serializers import ScenarioSerializer
from .simulation import run_rows, run_simulation
from .solvers import WeightMatrix, hungarian_max, knapsack_max, mcap_assignment

logger = logging.getLogger(__name__)

FORBIDDEN_MARKERS = ('', 'x', 'X')


def simulation_setting(key):
    return settings.SIMULATION[key]


def read_scenario(path):
    """
    Read a scenario document. Raises ValueError with the path on unreadable or malformed files.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ValueError(f'cannot read scenario {path}: {exc}') from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f'{path} is not valid JSON: {exc}') from exc
    if not isinstance(data, dict):
        raise ValueError(f'{path} must hold a JSON object')
    return data


def build_config(data):
    """
    Validate a scenario document and return its SimConfig.
    Raises ValidationError with the serializer errors.
    """
    serializer = ScenarioSerializer(data=data)
    if not serializer.is_valid():
        raise ValidationError(serializer.errors)
    return serializer.config


def load_config(path, **overrides):
    """
    Scenario file -> SimConfig, with top-level overrides (strategy, seed, ...) applied.
    """
    config = build_config(read_scenario(path))
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **overrides) if overrides else config


def execute_run(config):
    """
    Run one scenario. Returns the report and the wall time in seconds.
    """
    started = time.perf_counter()
    report = run_simulation(config)
    wall_time = time.perf_counter() - started
    logger.info('run finished strategy=%s seed=%s config_hash=%s wall_time_s=%.2f',
                config.strategy, config.seed, report.config_hash, wall_time)
    return report, wall_time


def store_run(config, report, wall_time=0.0):
    """
    Persist a report as a SimulationRun with one LayerDelivery per layer.
    """
    with transaction.atomic():
        run = SimulationRun.objects.create(
            strategy=report.strategy,
            seed=report.seed,
            layers=report.layers,
            stream_rate_kbps=report.stream_rate_kbps,
            window_s=report.window_s,
            config_hash=report.config_hash,
            config=config.to_dict(),
            aggregate_delivery=report.aggregate_delivery,
            expired_count=report.expired_count,
            requested_count=report.requested_count,
            duplicate_request_count=report.duplicate_request_count,
            runtime=report.runtime,
            wall_time_s=wall_time,
        )
        LayerDelivery.objects.bulk_create(
            LayerDelivery(run=run, layer=layer, ratio=ratio) for layer, ratio in report.per_layer_delivery
        )
    logger.info('run stored id=%s strategy=%s seed=%s', run.id, run.strategy, run.seed)
    return run


def report_path(out_dir, report, fmt):
    return Path(out_dir) / f'{report.strategy}_seed{report.seed}.{fmt}'


def ensure_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f'cannot create output directory {path}: {exc}') from exc
    return path


def run_scenario(config, out_dir=None, fmt=None, store=False):
    """
    Run one scenario, optionally write its report file and store it.
    Returns (report, path or None, SimulationRun or None).
    """
    fmt = (fmt or simulation_setting('REPORT_FORMAT')).lower()
    report, wall_time = execute_run(config)
    path = None
    if out_dir is not None:
        path = emit_report(report, fmt, report_path(ensure_dir(out_dir), report, fmt))
    run = store_run(config, report, wall_time) if store else None
    return report, path, run


def sweep_configs(base, strategies, rates, windows, seeds):
    """
    Cross product strategy x rate x window x seed. Rates are total stream rates,
    split evenly over the layers of the base stream; seeds count up from the base seed.
    """
    configs = []
    for strategy, rate, window, offset in itertools.product(strategies, rates, windows, range(seeds)):
        configs.append(replace(
            base,
            strategy=strategy,
            seed=base.seed + offset,
            window_seconds=window,
            stream=base.stream.with_total_rate(rate),
        ))
    return configs


def run_sweep(base, strategies, rates, windows, seeds, out_dir, workers=None):
    """
    Run a sweep and write sweep.csv plus sweep_summary.csv into out_dir.
    Returns the two paths.
    """
    configs = sweep_configs(base, strategies, rates, windows, seeds)
    workers = workers or simulation_setting('SWEEP_WORKERS')
    out_dir = ensure_dir(out_dir)
    logger.info('sweep start runs=%s workers=%s out=%s', len(configs), workers, out_dir)

    started = time.perf_counter()
    rows = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for done, batch in enumerate(executor.map(run_rows, configs), start=1):
                rows.extend(batch)
                logger.info('sweep progress done=%s total=%s', done, len(configs))
    else:
        for done, config in enumerate(configs, start=1):
            rows.extend(csv_rows(run_simulation(config)))
            logger.info('sweep progress done=%s total=%s', done, len(configs))

    sweep_path = write_csv(out_dir / 'sweep.csv', rows, CSV_COLUMNS)
    summary_path = write_csv(out_dir / 'sweep_summary.csv', summarize(rows), SUMMARY_COLUMNS)
    logger.info('sweep done runs=%s wall_time_s=%.2f', len(configs), time.perf_counter() - started)
    return sweep_path, summary_path


def solve_matrix(rows):
    """
    Square matrices go to hungarian_max, rectangular ones to the m-cardinality solve.
    `rows` is a list of lists with None for forbidden cells.
    """
    matrix = WeightMatrix.from_rows(rows)
    if matrix.rows == matrix.cols:
        kind, matching = 'hungarian', hungarian_max(matrix)
    else:
        kind, matching = 'mcap', mcap_assignment(matrix)
    return {
        'kind': kind,
        'assignment': list(matching.assignment),
        'objective': matching.objective,
    }


def solve_knapsack(values, weights, capacity):
    result = knapsack_max(values, weights, capacity)
    return {
        'kind': 'knapsack',
        'selected': list(result.selected),
        'value': result.value,
    }


def _read_rows(path):
    path = Path(path)
    try:
        with path.open(newline='', encoding='utf-8') as handle:
            return [row for row in csv.reader(handle) if row]
    except OSError as exc:
        raise ValueError(f'cannot read {path}: {exc}') from exc


def _number(text, path):
    try:
        return float(text)
    except ValueError as exc:
        raise ValueError(f'{path}: {text!r} is not a number') from exc


def read_matrix_csv(path):
    """
    Weight matrix CSV without header; an empty cell or `x` marks a forbidden cell.
    """
    return [
        [None if cell.strip() in FORBIDDEN_MARKERS else _number(cell, path) for cell in row]
        for row in _read_rows(path)
    ]


def read_knapsack_csv(path):
    """
    Knapsack CSV: one `value,weight` row per item, no header.
    """
    values, weights = [], []
    for row in _read_rows(path):
        if len(row) != 2:
            raise ValueError(f'{path}: expected value,weight rows, got {row}')
        values.append(_number(row[0], path))
        weight = _number(row[1], path)
        if weight != int(weight):
            raise ValueError(f'{path}: weight {row[1]!r} is not an integer')
        weights.append(int(weight))
    return values, weights
