"""Physical constants in SI units.

Particle masses are reference values (PDG), not inputs taken from the
kaon-decay analysis itself; override them through the experiment config.
"""

from dataclasses import dataclass

from scipy import constants as _sc

HBAR = _sc.hbar
MEV_PER_C2 = _sc.mega * _sc.electron_volt / _sc.c**2

KAON_MASS_MEV = 497.611
PION_MASS_MEV = 139.57039

KAON_MASS = KAON_MASS_MEV * MEV_PER_C2
PION_MASS = PION_MASS_MEV * MEV_PER_C2


def mev_to_kg(mass_mev: float) -> float:
    return mass_mev * MEV_PER_C2


def mev_to_joule(energy_mev: float) -> float:
    return energy_mev * _sc.mega * _sc.electron_volt


@dataclass(frozen=True)
class PhysicsConstants:
    hbar: float = HBAR
    kaon_mass: float = KAON_MASS
    pion_mass: float = PION_MASS

    def __post_init__(self):
        for name in ("hbar", "kaon_mass", "pion_mass"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
