"""
Chunk priority model.
A chunk's request priority mixes playback urgency with layer dependency:
P = EP(now - deadline) + theta * LP(layer).
"""

import math
from dataclasses import dataclass

# Defaults of the reference experiment: bases of 10 and an exponent floor
DEFAULTS = {
    'ep_base': 10.0,
    'lp_base': 10.0,
    'min_exponent': -30,
}

THETA_STRATEGIES = ('conservative', 'aggressive', 'zigzag')


@dataclass(frozen=True)
class ChunkMeta:
    """
    Identity of one stream chunk.
    """
    seq: int
    layer: int
    deadline: int
    size: int = 1

    def __post_init__(self):
        if self.seq < 0:
            raise ValueError(f'seq must be non-negative, got {self.seq}')
        if self.layer < 1:
            raise ValueError(f'layer must be >= 1, got {self.layer}')
        if self.size < 1:
            raise ValueError(f'size must be >= 1, got {self.size}')


@dataclass(frozen=True)
class PriorityParams:
    """
    Parameters of the priority function.
    theta=None means the default 10^-L.
    """
    max_layer: int = 1
    theta: float | None = None
    ep_base: float = DEFAULTS['ep_base']
    lp_base: float = DEFAULTS['lp_base']
    min_exponent: int = DEFAULTS['min_exponent']

    def __post_init__(self):
        if self.max_layer < 1:
            raise ValueError(f'max_layer must be >= 1, got {self.max_layer}')
        if self.theta is None:
            object.__setattr__(self, 'theta', 10.0 ** -self.max_layer)
        if self.theta < 0:
            raise ValueError(f'theta must be >= 0, got {self.theta}')
        if self.ep_base <= 1 or self.lp_base <= 1:
            raise ValueError('ep_base and lp_base must be > 1')

    def single_layer(self):
        """
        Same parameters with the layer term dropped.
        """
        return PriorityParams(
            max_layer=self.max_layer,
            theta=0.0,
            ep_base=self.ep_base,
            lp_base=self.lp_base,
            min_exponent=self.min_exponent,
        )


def emergency_priority(delta, params):
    """
    Urgency term EP(delta) = ep_base ** max(delta, min_exponent), delta = now - deadline.
    """
    if delta > 0:
        raise ValueError(f'expired chunk reached priority computation (delta={delta})')
    return params.ep_base ** max(delta, params.min_exponent)


def layer_priority(layer, params):
    """
    Layer term LP(l) = lp_base ** (L - l).
    """
    if not 1 <= layer <= params.max_layer:
        raise ValueError(f'layer {layer} outside [1, {params.max_layer}]')
    return params.lp_base ** (params.max_layer - layer)


def chunk_priority(chunk, now, params):
    """
    Request priority of a chunk at tick `now`.
    """
    value = emergency_priority(now - chunk.deadline, params)
    if params.theta:
        value += params.theta * layer_priority(chunk.layer, params)
    return value


def priority_sort_key(priority, chunk):
    """
    Sort key for "most important first": higher priority, then earlier deadline, then lower seq.
    Keeps clamped priorities in deadline order.
    """
    return (-priority, chunk.deadline, chunk.seq)


def _conservative_bound(max_layer, window_ticks, ep_base, lp_base):
    # smallest adjacent LP gap is between layers L-1 and L
    ep_span = 1.0 - ep_base ** -window_ticks
    return ep_span / (lp_base - 1.0)


def _aggressive_bound(max_layer, window_ticks, ep_base, lp_base):
    # smallest adjacent EP gap sits at the far end of the window
    ep_gap = ep_base ** -window_ticks * (ep_base - 1.0)
    lp_span = lp_base ** (max_layer - 1) - 1.0
    if lp_span <= 0:
        return math.inf
    return ep_gap / lp_span


def theta_for_strategy(kind, max_layer, window_ticks, ep_base=10.0, lp_base=10.0):
    """
    Derive theta for a layer-prioritisation regime.

    conservative: every layer-l chunk outranks every layer-(l+1) chunk anywhere in the window.
    aggressive: deadline order wins over every layer difference.
    zigzag: geometric mean of the two bounds.
    """
    if kind not in THETA_STRATEGIES:
        raise ValueError(f'unknown theta strategy {kind!r}')
    if window_ticks < 0:
        raise ValueError('window_ticks must be >= 0')
    conservative = 2.0 * _conservative_bound(max_layer, window_ticks, ep_base, lp_base)
    aggressive = 0.5 * _aggressive_bound(max_layer, window_ticks, ep_base, lp_base)
    if kind == 'conservative':
        return conservative
    if kind == 'aggressive':
        return 0.0 if math.isinf(aggressive) else aggressive
    if math.isinf(aggressive):
        return conservative
    return math.sqrt(conservative * aggressive)
