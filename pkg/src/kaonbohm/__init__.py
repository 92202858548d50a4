"""Neutral-kaon decay experiments with wave-packet spreading and Bohmian retrodiction."""

from kaonbohm.constants import HBAR, KAON_MASS, PION_MASS, PhysicsConstants
from kaonbohm.packet import GaussianPacket, amplitude_at, density_quantile, spread_at

__all__ = [
    "HBAR",
    "KAON_MASS",
    "PION_MASS",
    "PhysicsConstants",
    "GaussianPacket",
    "amplitude_at",
    "density_quantile",
    "spread_at",
]

__version__ = "0.1.0"
