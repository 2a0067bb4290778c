"""Joint max-sum-rate receiver design and relay power allocation for
multihop amplify-and-forward sensor networks."""

from .network import Allocation, ChannelSet, Topology, compute_cascades, draw_channels, sum_rate
from .optimizer import SolverOptions, alternate, equal_power_baseline

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ChannelSet",
    "Topology",
    "SolverOptions",
    "alternate",
    "compute_cascades",
    "draw_channels",
    "equal_power_baseline",
    "sum_rate",
]
