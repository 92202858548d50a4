"""Closed-form free Gaussian wave packet.

``sigma0`` is the standard deviation of the initial position density
|psi|^2, so ``spread_at`` is exactly the density standard deviation at
later times. Center and velocity may be scalars (1D) or equal-length
arrays; planar packets are separable with the same width and mass along
every axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from kaonbohm.constants import HBAR
from kaonbohm.errors import NegativeElapsed, QuantileOutOfRange


@dataclass(frozen=True, eq=False)
class GaussianPacket:
    center: float | np.ndarray
    velocity: float | np.ndarray
    sigma0: float
    mass: float
    t0: float = 0.0
    hbar: float = HBAR

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if np.ndim(self.center) != np.ndim(self.velocity):
            raise ValueError("center and velocity must have the same dimension")
        if np.ndim(self.center) > 0:
            object.__setattr__(self, "center", np.array(self.center, dtype=float))
            object.__setattr__(self, "velocity", np.array(self.velocity, dtype=float))
            if self.center.shape != self.velocity.shape:
                raise ValueError("center and velocity shapes differ")

    @property
    def ndim(self) -> int:
        return 1 if np.ndim(self.center) == 0 else int(np.size(self.center))

    @property
    def time_scale(self) -> float:
        """Elapsed time at which the packet has spread by sqrt(2): 2 m sigma0^2 / hbar."""
        return 2.0 * self.mass * self.sigma0**2 / self.hbar

    @property
    def wavenumber(self):
        return self.mass * self.velocity / self.hbar

    def tau(self, t):
        """Dimensionless elapsed time hbar (t - t0) / (2 m sigma0^2)."""
        return (t - self.t0) / self.time_scale

    def center_at(self, t):
        return self.center + self.velocity * (t - self.t0)

    def spreading_factor(self, elapsed):
        """s(dt) = sqrt(1 + (hbar dt / 2 m sigma0^2)^2); works on arrays."""
        return spreading_factor(elapsed, self.sigma0, self.mass, self.hbar)


def spreading_factor(elapsed, sigma0: float, mass: float, hbar: float = HBAR):
    # hypot keeps full relative precision when the dimensionless time is ~1e15
    return np.hypot(1.0, hbar * np.asarray(elapsed, dtype=float) / (2.0 * mass * sigma0**2))


def _check_elapsed(packet: GaussianPacket, t) -> None:
    if np.any(np.asarray(t) < packet.t0):
        raise NegativeElapsed(f"t={t} precedes packet preparation time t0={packet.t0}")


def spread_at(packet: GaussianPacket, t):
    """Position-density standard deviation at time ``t``."""
    _check_elapsed(packet, t)
    s = packet.sigma0 * packet.spreading_factor(np.asarray(t, dtype=float) - packet.t0)
    return float(s) if np.ndim(s) == 0 else s


def spread_rate(packet: GaussianPacket, t):
    """d(sigma)/dt, the rate at which the packet width grows."""
    _check_elapsed(packet, t)
    tau = packet.tau(np.asarray(t, dtype=float))
    return packet.sigma0 * tau / np.hypot(1.0, tau) / packet.time_scale


def amplitude_at(packet: GaussianPacket, x, t):
    """Complex amplitude (m^-1/2) of the free 1D Gaussian at positions ``x``.

    The global phase makes psi real and positive at the packet center at t0.
    """
    if packet.ndim != 1 or np.ndim(packet.center) != 0:
        raise ValueError("amplitude_at evaluates 1D packets; use one axis of a planar packet")
    _check_elapsed(packet, t)
    x = np.asarray(x, dtype=float)
    elapsed = t - packet.t0
    tau = elapsed / packet.time_scale
    k = packet.wavenumber
    omega = packet.hbar * k**2 / (2.0 * packet.mass)
    y = x - packet.center
    u = y - packet.velocity * elapsed
    w = 1.0 + 1j * tau
    norm = (2.0 * math.pi * packet.sigma0**2) ** -0.25
    return norm / np.sqrt(w) * np.exp(-(u**2) / (4.0 * packet.sigma0**2 * w) + 1j * (k * y - omega * elapsed))


def density_at(packet: GaussianPacket, x, t):
    return np.abs(amplitude_at(packet, x, t)) ** 2


def density_quantile(packet: GaussianPacket, t: float, q: float):
    """Position below which a fraction ``q`` of the density lies at time ``t``."""
    if not 0.0 < q < 1.0:
        raise QuantileOutOfRange(f"q must lie strictly inside (0, 1), got {q}")
    return packet.center_at(t) + spread_at(packet, t) * NormalDist().inv_cdf(q)
