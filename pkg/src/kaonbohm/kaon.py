"""Neutral-kaon state algebra, exponential decay and branching.

States are written in the (K0, K0bar) basis. The physical K_L and K_S are
the normalized combinations (p K0 -+ q K0bar); their overlap is real and
vanishes only when |p| = |q|.

Decay sampling treats the initial a K_L + b K_S superposition as a
classical mixture: interference terms and the exp(-i m t) phases are not
used. The mass phase rates are stored on each species for completeness.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from kaonbohm.constants import HBAR, KAON_MASS_MEV, mev_to_joule
from kaonbohm.errors import DegenerateMixing, NegativeTime

CHARGED_2PI = "pi+pi-"

KS_LIFETIME = 1.0e-10  # s
# PDG value; the K_L lifetime is not taken from the decay-time analysis
KL_LIFETIME = 5.116e-8  # s

KL_BRANCHING = {
    "pi_e_nu": 0.39,
    "pi_mu_nu": 0.27,
    "3pi": 0.33,
    CHARGED_2PI: 1.0e-3,
    # remainder so the table sums to one without rescaling the listed modes
    "other": 0.009,
}
# PDG values
KS_BRANCHING = {
    CHARGED_2PI: 0.6920,
    "pi0pi0": 0.3069,
    "other": 0.0011,
}


@dataclass(frozen=True)
class KaonMixing:
    p: complex = 1.0
    q: complex = 1.0

    def __post_init__(self):
        if abs(self.p) ** 2 + abs(self.q) ** 2 == 0:
            raise DegenerateMixing("p and q cannot both vanish")

    def states(self) -> tuple[np.ndarray, np.ndarray]:
        """(K_L, K_S) as unit vectors in the (K0, K0bar) basis."""
        n = math.sqrt(abs(self.p) ** 2 + abs(self.q) ** 2)
        kl = np.array([self.p, -self.q], dtype=complex) / n
        ks = np.array([self.p, self.q], dtype=complex) / n
        return kl, ks


def overlap_LS(mixing: KaonMixing) -> float:
    """<K_L|K_S> = (|p|^2 - |q|^2) / (|p|^2 + |q|^2)."""
    p2 = abs(mixing.p) ** 2
    q2 = abs(mixing.q) ** 2
    if p2 + q2 == 0:
        raise DegenerateMixing("p and q cannot both vanish")
    return (p2 - q2) / (p2 + q2)


@dataclass(frozen=True)
class KaonSpecies:
    label: str
    lifetime: float
    branching: Mapping[str, float]
    mass_phase: float = mev_to_joule(KAON_MASS_MEV) / HBAR  # 1/s, inert

    def __post_init__(self):
        if not self.lifetime > 0:
            raise ValueError(f"{self.label}: lifetime must be positive")
        if any(v < 0 for v in self.branching.values()):
            raise ValueError(f"{self.label}: negative branching fraction")
        total = math.fsum(self.branching.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"{self.label}: branching fractions sum to {total!r}, not 1")
        object.__setattr__(self, "branching", MappingProxyType(dict(self.branching)))

    @property
    def gamma(self) -> float:
        return 1.0 / self.lifetime

    @property
    def modes(self) -> list[str]:
        return list(self.branching)

    def _cumulative(self) -> np.ndarray:
        c = np.cumsum(list(self.branching.values()))
        c[-1] = 1.0
        return c


def default_species() -> dict[str, KaonSpecies]:
    return {
        "KL": KaonSpecies("KL", KL_LIFETIME, KL_BRANCHING),
        "KS": KaonSpecies("KS", KS_LIFETIME, KS_BRANCHING),
    }


@dataclass(frozen=True)
class InitialKaonState:
    a: complex
    b: complex

    def __post_init__(self):
        if abs(abs(self.a) ** 2 + abs(self.b) ** 2 - 1.0) > 1e-9:
            raise ValueError("|a|^2 + |b|^2 must be 1; use InitialKaonState.normalized")

    @classmethod
    def normalized(cls, a: complex, b: complex) -> InitialKaonState:
        n = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        if n == 0:
            raise ValueError("state amplitudes cannot both vanish")
        return cls(a / n, b / n)

    @property
    def prob_long(self) -> float:
        return abs(self.a) ** 2


def survival_probability(species: KaonSpecies, t: float) -> float:
    if t < 0:
        raise NegativeTime(f"t={t} < 0")
    return math.exp(-species.gamma * t)


@dataclass(frozen=True)
class DecaySample:
    parent: str
    time: float
    mode: str


def sample_mode(species: KaonSpecies, rng: np.random.Generator, size=None):
    idx = np.searchsorted(species._cumulative(), rng.random(size), side="right")
    modes = np.array(species.modes, dtype=object)
    return modes[idx] if size is not None else modes[int(idx)]


def sample_decay(state: InitialKaonState, species_table: Mapping[str, KaonSpecies], rng: np.random.Generator) -> DecaySample:
    """Parent (K_L with probability |a|^2), exponential decay time, and mode."""
    parent = "KL" if rng.random() < state.prob_long else "KS"
    sp = species_table[parent]
    t = rng.exponential(sp.lifetime)
    return DecaySample(parent, float(t), sample_mode(sp, rng))


@dataclass(frozen=True)
class MeasurementModel:
    system_overlap: complex
    apparatus_overlap: complex
    a: complex
    b: complex

    def __post_init__(self):
        if abs(self.system_overlap) > 1 + 1e-12 or abs(self.apparatus_overlap) > 1 + 1e-12:
            raise ValueError("overlaps of unit vectors cannot exceed 1 in magnitude")


def unitarity_residual(model: MeasurementModel) -> complex:
    """a* b <psi1|psi2> (1 - <A1|A2>).

    Unitarity of a linear measurement map requires this to vanish. A
    nonzero value means no such measurement can leave the apparatus in
    the given states for these system states.
    """
    return complex(np.conj(model.a) * model.b * model.system_overlap * (1 - model.apparatus_overlap))
