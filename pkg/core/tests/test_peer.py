from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import InvariantViolation
from core.peer import (
    HEADER,
    BandwidthEstimator,
    BufferMap,
    LinkPredictor,
    PendingRequests,
    ReliabilityTracker,
    SlidingWindow,
    advance,
    decode_buffer_map,
    encode_buffer_map,
    estimate_bandwidth,
    pending_requests_refresh,
)


class BufferMapTests(SimpleTestCase):
    def test_holds(self):
        bm = BufferMap.from_seqs(10, 4, {10, 12, 99})
        self.assertTrue(bm.holds(10))
        self.assertFalse(bm.holds(11))
        self.assertTrue(bm.holds(12))
        self.assertFalse(bm.holds(99))
        self.assertFalse(bm.holds(9))
        self.assertEqual(bm.held_seqs(), {10, 12})

    def test_equality_compares_bits(self):
        self.assertEqual(BufferMap.from_seqs(0, 3, {1}), BufferMap(0, [False, True, False]))
        self.assertNotEqual(BufferMap.from_seqs(0, 3, {1}), BufferMap.from_seqs(1, 3, {1}))


class WireFormatTests(SimpleTestCase):
    def test_layout(self):
        data = encode_buffer_map(BufferMap.from_seqs(7, 10, {7, 9, 16}))
        self.assertEqual(len(data), HEADER.size + 2)
        self.assertEqual(HEADER.unpack_from(data), (7, 10))
        # bit i of byte i // 8, least significant first
        self.assertEqual(data[HEADER.size:], bytes([0b00000101, 0b00000010]))

    def test_window_snapshot_decodes_to_its_map(self):
        window = SlidingWindow(chunks_per_tick=3, window_ticks=2, tick=4)
        for seq in (6, 8, 14):
            window.mark_received(seq)
        self.assertEqual(decode_buffer_map(encode_buffer_map(window)), window.buffer_map())

    def test_decode_bits_from_start_seq(self):
        bm = decode_buffer_map(HEADER.pack(12, 8) + bytes([0b00001101]))
        self.assertEqual(bm.start_seq, 12)
        self.assertEqual(bm.held_seqs(), {12, 14, 15})

    def test_random_maps_survive_the_wire(self):
        rng = np.random.default_rng(1000)
        for _ in range(1000):
            length = int(rng.integers(0, 200))
            bm = BufferMap(int(rng.integers(0, 2 ** 40)), rng.random(length) < rng.random())
            data = encode_buffer_map(bm)
            self.assertEqual(len(data), HEADER.size + (length + 7) // 8)
            self.assertEqual(decode_buffer_map(data), bm)

    def test_empty_map(self):
        data = encode_buffer_map(BufferMap(5, np.zeros(0, dtype=bool)))
        self.assertEqual(len(data), HEADER.size)
        self.assertEqual(len(decode_buffer_map(data)), 0)

    def test_truncated_header(self):
        with self.assertRaises(ValueError):
            decode_buffer_map(b'\x00' * 5)

    def test_truncated_payload(self):
        with self.assertRaises(ValueError):
            decode_buffer_map(HEADER.pack(0, 17) + b'\x00\x00')

    def test_trailing_bytes(self):
        with self.assertRaises(ValueError):
            decode_buffer_map(HEADER.pack(0, 8) + b'\x00\x00')

    def test_pad_bits_must_be_zero(self):
        with self.assertRaises(ValueError):
            decode_buffer_map(HEADER.pack(0, 4) + bytes([0b00010000]))


class SlidingWindowTests(SimpleTestCase):
    def test_bounds_grow_then_slide(self):
        window = SlidingWindow(chunks_per_tick=2, window_ticks=3)
        self.assertEqual((window.playhead, window.end, window.window_len), (0, 2, 8))
        window.tick = 5
        self.assertEqual((window.playhead, window.end), (4, 12))
        self.assertTrue(window.contains(4))
        self.assertFalse(window.contains(3))
        self.assertFalse(window.contains(12))

    def test_mark_received(self):
        window = SlidingWindow(chunks_per_tick=2, window_ticks=3)
        self.assertTrue(window.mark_received(1))
        self.assertFalse(window.mark_received(5))
        self.assertEqual(window.unreceived(), [0])
        with self.assertRaises(InvariantViolation):
            window.mark_received(1)

    def test_advance_reports_expired(self):
        window = SlidingWindow(chunks_per_tick=2, window_ticks=3, tick=4)
        window.mark_received(2)
        window, expired = advance(window, 5)
        self.assertEqual(window.playhead, 4)
        self.assertEqual(expired, [3])
        self.assertEqual(window.received, set())

    def test_advance_keeps_received_inside(self):
        window = SlidingWindow(chunks_per_tick=2, window_ticks=3, tick=3)
        window.mark_received(7)
        window, expired = advance(window, 4)
        self.assertEqual(window.received, {7})
        self.assertEqual(expired, [0, 1])

    def test_advance_backwards_rejected(self):
        window = SlidingWindow(chunks_per_tick=2, window_ticks=3, tick=4)
        with self.assertRaises(ValueError):
            advance(window, 3)


class PredictorTests(SimpleTestCase):
    def test_no_history(self):
        self.assertIsNone(LinkPredictor().predict())

    def test_constant_samples_predict_the_constant(self):
        predictor = LinkPredictor()
        for _ in range(8):
            predictor.observe(4)
        self.assertAlmostEqual(predictor.predict(), 4.0)

    def test_uniform_weights_average_the_history(self):
        history = [2, 2, 2, 4, 4]
        expected = sum(Fraction(1, len(history)) * sample for sample in history)
        self.assertEqual(expected, Fraction(14, 5))
        self.assertAlmostEqual(LinkPredictor(history=history).predict(), float(expected))

    def test_weights_stay_clipped(self):
        predictor = LinkPredictor()
        for sample in (1, 50, 0, 80, 2, 90, 0):
            predictor.observe(sample)
        self.assertTrue(((predictor.weights >= 0) & (predictor.weights <= 1)).all())

    def test_history_is_bounded(self):
        predictor = LinkPredictor()
        for sample in range(10):
            predictor.observe(sample)
        self.assertEqual(list(predictor.history), [5, 6, 7, 8, 9])


class BandwidthEstimatorTests(SimpleTestCase):
    def test_cold_start_uses_nominal(self):
        est = BandwidthEstimator({1: 7})
        self.assertEqual(estimate_bandwidth(est, 1), 7)
        self.assertEqual(est.estimate(2), 1)

    def test_tracks_observed_rate(self):
        est = BandwidthEstimator({1: 10})
        for _ in range(5):
            est.record(1, 3)
        self.assertEqual(est.estimate(1), 3)

    def test_mixed_history_rounds_to_nearest(self):
        est = BandwidthEstimator({1: 10})
        est.predictor(1).history.extend([2, 2, 2, 4, 4])
        self.assertEqual(estimate_bandwidth(est, 1), 3)

    def test_capped_at_nominal(self):
        est = BandwidthEstimator({1: 4})
        for _ in range(5):
            est.record(1, 12)
        self.assertEqual(est.estimate(1), 4)

    def test_never_below_one(self):
        est = BandwidthEstimator({1: 4})
        for _ in range(5):
            est.record(1, 0)
        self.assertEqual(est.estimate(1), 1)


class ReliabilityTests(SimpleTestCase):
    def test_default_is_full(self):
        self.assertEqual(ReliabilityTracker().reliability(3), 1.0)

    def test_ratio_over_recent_periods(self):
        tracker = ReliabilityTracker()
        tracker.record(3, 4, 2)
        self.assertEqual(tracker.reliability(3), 0.5)
        tracker.record(3, 0, 0)
        self.assertEqual(tracker.reliability(3), 0.5)

    def test_old_periods_fall_out(self):
        tracker = ReliabilityTracker()
        tracker.record(3, 4, 0)
        for _ in range(5):
            tracker.record(3, 2, 2)
        self.assertEqual(tracker.reliability(3), 1.0)


class PendingRequestsTests(SimpleTestCase):
    def test_duplicate_request_rejected(self):
        pending = PendingRequests()
        pending.add(5, neighbor=1, tick=0, deadline=3)
        with self.assertRaises(InvariantViolation):
            pending.add(5, neighbor=2, tick=0, deadline=3)

    def test_refresh_releases_undelivered(self):
        pending = PendingRequests()
        pending.add(5, neighbor=1, tick=0, deadline=3)
        pending.add(2, neighbor=1, tick=0, deadline=3)
        self.assertEqual(pending_requests_refresh(pending, 0), [])
        self.assertIn(5, pending)
        self.assertEqual(pending_requests_refresh(pending, 1), [2, 5])
        self.assertEqual(len(pending), 0)

    def test_refresh_drops_expired(self):
        pending = PendingRequests()
        pending.add(6, neighbor=1, tick=0, deadline=0)
        self.assertEqual(pending.refresh(1), [])
        self.assertEqual(pending.expired_count, 1)

    def test_resolve(self):
        pending = PendingRequests()
        pending.add(6, neighbor=4, tick=0, deadline=2)
        self.assertEqual(pending.get(6).neighbor, 4)
        self.assertEqual(pending.resolve(6).seq, 6)
        self.assertIsNone(pending.resolve(6))
        self.assertNotIn(6, pending)
