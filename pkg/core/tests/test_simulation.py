from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase, tag

from core.metrics import csv_rows, report_json
from core.peer import pending_requests_refresh
from core.priority import ChunkMeta
from core.schedulers import STRATEGIES
from core.simulation import (
    BandwidthClass,
    PrioritySettings,
    SimConfig,
    StreamLayout,
    StreamSpec,
    World,
    generate_overlay,
    run_simulation,
    serve_requests,
)

SMALL = SimConfig(node_count=12, degree=4, seed=3, duration=5, window_seconds=3,
                  stream=StreamSpec(1, (100.0,)))
LAYERED = SimConfig(node_count=12, degree=4, seed=3, duration=5, window_seconds=3, strategy='assched',
                    stream=StreamSpec(3, (100.0, 100.0, 100.0)))


class StreamSpecTests(SimpleTestCase):
    def test_chunks_per_tick(self):
        stream = StreamSpec(2, (100.0, 300.0))
        self.assertEqual(stream.chunks_per_layer, (10, 30))
        self.assertEqual(stream.chunks_per_tick, 40)
        self.assertEqual(stream.rate_kbps, 400.0)

    def test_fractional_chunks_rejected(self):
        with self.assertRaises(ValueError):
            StreamSpec(1, (105.0,))

    def test_rate_count_must_match_layers(self):
        with self.assertRaises(ValueError):
            StreamSpec(2, (100.0,))

    def test_playable_layers_by_download(self):
        stream = StreamSpec(12, (100.0,) * 12)
        self.assertEqual(stream.playable_layers(512.0), 5)
        self.assertEqual(stream.playable_layers(1000.0), 10)
        self.assertEqual(stream.playable_layers(2000.0), 12)
        self.assertEqual(stream.playable_layers(50.0), 0)

    def test_with_total_rate_splits_evenly(self):
        self.assertEqual(StreamSpec(6, (100.0,) * 6).with_total_rate(1200.0).layer_rate_kbps, (200.0,) * 6)


class SimConfigTests(SimpleTestCase):
    def test_defaults_follow_reference_setup(self):
        config = SimConfig()
        self.assertEqual((config.node_count, config.degree, config.window_seconds), (500, 15, 10))
        self.assertEqual([c.download_kbps for c in config.bandwidth_classes], [512.0, 1000.0, 2000.0])
        self.assertEqual(config.bandwidth_classes[0].upload_kbps, 256.0)
        self.assertEqual(config.stream.chunk_size_kbits, 10.0)

    def test_invalid_values(self):
        for kwargs in (
            {'node_count': 1},
            {'degree': 12, 'node_count': 12},
            {'duration': -1},
            {'strategy': 'fifo'},
            {'request_period': 2},
            {'bandwidth_classes': (BandwidthClass(0.5, 512.0),)},
        ):
            with self.assertRaises(ValueError, msg=kwargs):
                SimConfig(**kwargs)

    def test_config_hash_is_stable(self):
        self.assertEqual(SMALL.config_hash(), replace(SMALL).config_hash())
        self.assertEqual(len(SMALL.config_hash()), 16)
        self.assertNotEqual(SMALL.config_hash(), replace(SMALL, seed=4).config_hash())

    def test_theta_strategy_feeds_priority_params(self):
        config = replace(LAYERED, priority=PrioritySettings(theta_strategy='conservative'))
        self.assertGreater(config.priority_params().theta, LAYERED.priority_params().theta)
        self.assertAlmostEqual(LAYERED.priority_params().theta, 1e-3)


class OverlayTests(SimpleTestCase):
    def test_regular_overlay(self):
        config = SimConfig(node_count=50, degree=8, seed=1)
        overlay = generate_overlay(config)
        self.assertFalse(overlay.irregular)
        for node, neighbors in overlay.adjacency.items():
            self.assertEqual(len(neighbors), 8)
            self.assertNotIn(node, neighbors)
            for nb in neighbors:
                self.assertIn(node, overlay.adjacency[nb])
        counts = np.bincount(overlay.bandwidth_class, minlength=3)
        self.assertEqual(counts.tolist(), [20, 15, 15])

    def test_odd_degree_sum_bumps_one_node(self):
        overlay = generate_overlay(SimConfig(node_count=7, degree=3, seed=2))
        self.assertTrue(overlay.irregular)
        self.assertEqual(sorted(overlay.degree(n) for n in range(7)), [3] * 6 + [4])

    def test_two_nodes_share_one_edge(self):
        overlay = generate_overlay(SimConfig(node_count=2, degree=1, seed=0))
        self.assertEqual(overlay.adjacency, {0: (1,), 1: (0,)})
        self.assertFalse(overlay.irregular)

    def test_same_seed_same_overlay(self):
        config = SimConfig(node_count=30, degree=5, seed=9)
        self.assertEqual(generate_overlay(config), generate_overlay(config))


class StreamLayoutTests(SimpleTestCase):
    def test_single_layer_meta(self):
        layout = StreamLayout(StreamSpec(1, (500.0,)), window_ticks=10)
        meta = layout.meta(120)
        self.assertEqual((meta.layer, meta.deadline), (1, 12))
        self.assertEqual(list(layout.emitted(2)), list(range(100, 150)))

    def test_layers_are_laid_out_in_order(self):
        layout = StreamLayout(StreamSpec(2, (100.0, 100.0)), window_ticks=4)
        self.assertEqual(layout.meta(9).layer, 1)
        self.assertEqual(layout.meta(15).layer, 2)
        self.assertEqual(layout.meta(20).layer, 1)
        self.assertEqual(layout.meta(20).deadline, 5)


class RunTests(SimpleTestCase):
    def test_every_strategy_completes_cleanly(self):
        for strategy in STRATEGIES:
            report = run_simulation(replace(SMALL, strategy=strategy))
            self.assertEqual(report.strategy, strategy)
            self.assertEqual(report.duplicate_request_count, 0)
            self.assertGreater(report.requested_count, 0)
            self.assertEqual(len(report.per_layer_delivery), 1)
            self.assertTrue(0.0 <= report.aggregate_delivery <= 1.0)
            self.assertEqual(report.runtime['ticks'], 3 + 5 + 3)

    def test_layered_run(self):
        report = run_simulation(LAYERED)
        self.assertEqual([layer for layer, _ in report.per_layer_delivery], [1, 2, 3])
        self.assertEqual(len(csv_rows(report)), 4)

    def test_zero_duration_is_empty(self):
        report = run_simulation(replace(SMALL, duration=0))
        self.assertIsNone(report.aggregate_delivery)
        self.assertEqual(report.per_layer_delivery, ())
        self.assertEqual(csv_rows(report), [])

    def test_same_seed_same_report(self):
        first, second = run_simulation(SMALL), run_simulation(SMALL)
        self.assertEqual(csv_rows(first), csv_rows(second))
        self.assertEqual(report_json(first), report_json(second))

    def test_ample_bandwidth_delivers_everything(self):
        config = replace(
            SMALL,
            strategy='nassched',
            window_seconds=6,
            source_upload_factor=40.0,
            bandwidth_classes=(BandwidthClass(1.0, 2000.0),),
        )
        report = run_simulation(config)
        self.assertEqual(report.aggregate_delivery, 1.0)
        self.assertEqual(report.expired_count, 0)

    def test_uploads_stay_within_capacity(self):
        world = World(replace(SMALL, strategy='rnd'))
        for tick in range(world.total_ticks):
            world.step(tick)
        self.assertEqual(world.counters.duplicate_requests, 0)
        self.assertEqual(world.counters.requests_sent, world.counters.delivered + world.counters.failed)

    def test_per_tick_transfers_within_link_capacity(self):
        for strategy in ('nassched', 'rnd'):
            world = World(replace(SMALL, strategy=strategy, stream=StreamSpec(1, (300.0,))))
            for tick in range(world.total_ticks):
                world.step(tick)
                for peer in world.peers:
                    received, sent = world.tick_load[peer.node_id]
                    self.assertLessEqual(received, peer.download, msg=f'{strategy} node {peer.node_id} tick {tick}')
                    self.assertLessEqual(sent, peer.upload, msg=f'{strategy} node {peer.node_id} tick {tick}')
                self.assertEqual(world.tick_load[world.overlay.source][0], 0)
            self.assertGreater(world.counters.pushed, 0)

    def test_source_pushes_fresh_chunks_to_its_neighbor(self):
        config = SimConfig(node_count=2, degree=1, seed=0, duration=4, window_seconds=2, stream=StreamSpec(1, (30.0,)))
        world = World(config)
        for tick in range(world.total_ticks):
            world.step(tick)
        self.assertEqual(world.counters.pushed, 3 * world.total_ticks)
        self.assertEqual(world.counters.requests_sent, 0)
        self.assertEqual(run_simulation(config).aggregate_delivery, 1.0)

    def test_complete_graph_with_unlimited_bandwidth_is_lossless(self):
        config = SimConfig(
            node_count=6,
            degree=5,
            seed=4,
            duration=5,
            window_seconds=3,
            source_upload_factor=40.0,
            stream=StreamSpec(2, (100.0, 100.0)),
            bandwidth_classes=(BandwidthClass(1.0, 100000.0),),
        )
        self.assertTrue(all(len(nbs) == 5 for nbs in generate_overlay(config).adjacency.values()))
        for strategy in STRATEGIES:
            report = run_simulation(replace(config, strategy=strategy))
            self.assertEqual(report.per_layer_delivery, ((1, 1.0), (2, 1.0)), msg=strategy)
            self.assertEqual(report.expired_count, 0, msg=strategy)


def staged_world(node_count, degree, holder, held, upload):
    """
    World at tick 0 where only `holder` has chunks and the source uploads nothing.
    """
    world = World(SimConfig(node_count=node_count, degree=degree, seed=0, duration=1, window_seconds=2,
                            stream=StreamSpec(1, (30.0,))))
    world.peers[world.overlay.source].upload = 0
    for seq in held:
        world.peers[holder].window.mark_received(seq)
    world.peers[holder].upload = upload
    world.maps = {peer.node_id: peer.window.buffer_map() for peer in world.peers}
    return world


class ContentionTests(SimpleTestCase):
    def request(self, requester, seq, prio=1.0):
        return (prio, requester, ChunkMeta(seq=seq, layer=1, deadline=5))

    def test_capacity_two_serves_two_of_three(self):
        queue = [self.request(1, 7, 0.5), self.request(1, 5, 0.9), self.request(1, 6, 0.7)]
        served, failed = serve_requests(queue, 2)
        self.assertEqual([item[2].seq for item in served], [5, 6])
        self.assertEqual([item[2].seq for item in failed], [7])

    def test_two_requesters_get_the_global_top_two(self):
        queue = [self.request(2, 1, 0.9), self.request(2, 2, 0.1), self.request(1, 3, 0.5), self.request(1, 4, 0.2)]
        served, failed = serve_requests(queue, 2)
        self.assertEqual([(item[1], item[2].seq) for item in served], [(2, 1), (1, 3)])
        self.assertEqual(len(failed), 2)

    def test_equal_priorities_favour_lower_requester_then_lower_seq(self):
        queue = [self.request(2, 0), self.request(2, 1), self.request(1, 1), self.request(1, 0)]
        served, _ = serve_requests(queue, 2)
        self.assertEqual([(item[1], item[2].seq) for item in served], [(1, 0), (1, 1)])

    def test_zero_budget_fails_everything(self):
        served, failed = serve_requests([self.request(1, 0)], 0)
        self.assertEqual((served, len(failed)), ([], 1))

    def test_step_delivers_two_and_retries_the_third(self):
        world = staged_world(3, 2, holder=1, held=(0, 1, 2), upload=2)
        world.step(0)
        requester = world.peers[2]
        self.assertEqual(requester.window.received, {0, 1})
        self.assertEqual((world.counters.requests_sent, world.counters.failed), (3, 1))
        self.assertEqual(world.tick_load[1], (0, 2))
        self.assertEqual(pending_requests_refresh(requester.pending, 1), [2])

    def test_step_splits_one_uploader_between_two_requesters(self):
        world = staged_world(4, 3, holder=3, held=(0, 1), upload=2)
        world.step(0)
        self.assertEqual(world.peers[1].window.received, {0, 1})
        self.assertEqual(world.peers[2].window.received, set())
        self.assertEqual((world.counters.requests_sent, world.counters.delivered), (4, 2))


def mean_delivery(config, seeds):
    return float(np.mean([run_simulation(replace(config, seed=s)).aggregate_delivery for s in seeds]))


@tag('acceptance')
class AcceptanceTests(SimpleTestCase):
    seeds = range(5)
    # 12.5 Kbit chunks keep 250, 375 and 500 Kbps at whole chunks per tick
    base = SimConfig(node_count=50, degree=8, duration=20, window_seconds=10,
                     stream=StreamSpec(1, (500.0,), chunk_size_kbits=12.5))

    def test_nassched_not_worse_than_baselines(self):
        for rate in (250.0, 375.0, 500.0):
            config = replace(self.base, stream=self.base.stream.with_total_rate(rate))
            ours = mean_delivery(replace(config, strategy='nassched'), self.seeds)
            for baseline in ('rnd', 'lrf', 'rr'):
                theirs = mean_delivery(replace(config, strategy=baseline), self.seeds)
                self.assertGreaterEqual(ours, theirs, msg=f'{baseline} at {rate} Kbps')
                if baseline == 'rnd' and rate == 500.0:
                    self.assertGreater(ours, theirs)

    def test_smaller_window_does_not_help(self):
        for strategy in STRATEGIES:
            violations = 0
            for seed in self.seeds:
                wide = run_simulation(replace(self.base, strategy=strategy, seed=seed, window_seconds=10))
                narrow = run_simulation(replace(self.base, strategy=strategy, seed=seed, window_seconds=3))
                if narrow.aggregate_delivery > wide.aggregate_delivery:
                    violations += 1
            self.assertLessEqual(violations, 1, msg=strategy)

    def test_six_layers_not_worse_than_twelve(self):
        base = replace(self.base, strategy='assched', priority=PrioritySettings(theta_strategy='conservative'))
        twelve = replace(base, stream=StreamSpec(12, (100.0,) * 12))
        six = replace(base, stream=StreamSpec(6, (200.0,) * 6))
        self.assertGreaterEqual(mean_delivery(six, self.seeds), mean_delivery(twelve, self.seeds))

    def test_layer_ratios_non_increasing_under_conservative_theta(self):
        config = replace(
            self.base,
            strategy='assched',
            stream=StreamSpec(12, (100.0,) * 12),
            priority=PrioritySettings(theta_strategy='conservative'),
        )
        per_layer = np.mean([
            [ratio for _, ratio in run_simulation(replace(config, seed=s)).per_layer_delivery]
            for s in self.seeds
        ], axis=0)
        for lower, upper in zip(per_layer, per_layer[1:]):
            self.assertLessEqual(upper, lower + 0.02)
