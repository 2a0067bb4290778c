"""Destination-to-relay feedback: 4+4 bit quantisation over a BSC.

Each complex gain is sent as 8 bits, the real part's 4-bit level (MSB first)
followed by the imaginary part's.  Levels come from a 16-cell mid-rise
quantiser on ``[-L, L]`` with ``L = sqrt(P_Ti / N_{i+1})``, the largest
component magnitude any budget-satisfying ``a_i`` can have.  Reconstruction
uses the cell midpoint.
"""

from dataclasses import dataclass

import numpy as np

from .network import Allocation, compute_cascades, sum_rate

__all__ = [
    "BITS_PER_COMPONENT",
    "LEVELS",
    "QuantizerSpec",
    "BscSpec",
    "group_range",
    "quantize_levels",
    "quantize_group",
    "dequantize_group",
    "bsc_corrupt",
    "feedback_allocation",
    "apply_feedback",
]

BITS_PER_COMPONENT = 4
LEVELS = 2**BITS_PER_COMPONENT
_WEIGHTS = 1 << np.arange(BITS_PER_COMPONENT - 1, -1, -1)


@dataclass(frozen=True)
class QuantizerSpec:
    range_limit: float
    bits_per_component: int = BITS_PER_COMPONENT

    def __post_init__(self):
        if self.bits_per_component != BITS_PER_COMPONENT:
            raise ValueError(f"only {BITS_PER_COMPONENT}-bit components are supported")
        if not self.range_limit > 0:
            raise ValueError("range_limit must be positive")

    @property
    def step(self):
        return 2.0 * self.range_limit / LEVELS


@dataclass(frozen=True)
class BscSpec:
    pe: float

    def __post_init__(self):
        if not 0.0 <= self.pe <= 1.0:
            raise ValueError(f"pe must lie in [0, 1], got {self.pe}")


def group_range(topo, i):
    """Quantiser range for group ``i``."""
    return QuantizerSpec(float(np.sqrt(topo.budget(i) / topo.sizes[i + 1])))


def quantize_levels(values, spec):
    """Cell index of each real value, clipped to ``0..15``."""
    values = np.asarray(values, dtype=float)
    idx = np.floor((values + spec.range_limit) / spec.step)
    return np.clip(idx, 0, LEVELS - 1).astype(int)


def quantize_group(a_i, spec):
    """Bit array of length ``8 * len(a_i)`` (real nibble, then imaginary)."""
    a_i = np.atleast_1d(np.asarray(a_i, dtype=complex))
    levels = np.stack([quantize_levels(a_i.real, spec), quantize_levels(a_i.imag, spec)], axis=1)
    bits = (levels[..., None] & _WEIGHTS) > 0
    return bits.reshape(-1).astype(np.uint8)


def dequantize_group(bits, spec):
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if bits.size == 0 or bits.size % (2 * BITS_PER_COMPONENT):
        raise ValueError(f"bit stream length {bits.size} is not a positive multiple of {2 * BITS_PER_COMPONENT}")
    levels = bits.reshape(-1, 2, BITS_PER_COMPONENT) @ _WEIGHTS
    values = -spec.range_limit + (levels + 0.5) * spec.step
    return values[:, 0] + 1j * values[:, 1]


def bsc_corrupt(bits, spec, rng):
    """Flip each bit independently with probability ``spec.pe``.

    One uniform draw is consumed per bit regardless of ``pe``, so two calls
    with identically seeded generators flip nested bit sets for increasing
    ``pe``.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    flips = rng.random(bits.shape) < spec.pe
    return bits ^ flips.astype(np.uint8)


def feedback_allocation(alloc, topo, pe, rng):
    """Allocation the relays apply after quantisation and BSC transmission."""
    bsc = BscSpec(pe)
    groups = []
    for i, a_i in enumerate(alloc.a, start=1):
        spec = group_range(topo, i)
        groups.append(dequantize_group(bsc_corrupt(quantize_group(a_i, spec), bsc, rng), spec))
    return Allocation(tuple(groups))


def apply_feedback(solution, topo, ch, pe, rng):
    """Sum rate realised when the relays use the fed-back allocation.

    The relays do not renormalise what they receive, and the destination
    keeps the receiver it designed for the ideal allocation.
    """
    realized = feedback_allocation(solution.alloc, topo, pe, rng)
    cascade = compute_cascades(topo, ch, realized)
    return sum_rate(topo, cascade, solution.w)
