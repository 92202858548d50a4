"""Experiment configuration: an INI file with typed, schema-checked keys.

Sections and keys (defaults in ``DEFAULTS``)::

    [run]            seed, n_events
    [physics]        hbar_Js, kaon_mass_MeV, pion_mass_MeV, q_release_MeV
    [packet]         sigma0_m, zero_offsets, kaon_spreading, kaon_sigma0_m
    [beam]           source_x_m, source_y_m, direction_x, direction_y,
                     speed_m_per_s, fiducial_length_m
    [detector.<id>]  anchor_x_m, anchor_y_m, normal_x, normal_y, extent_m,
                     time_resolution_s, momentum_resolution
    [mixing]         p_re, p_im, q_re, q_im
    [state]          a_re, a_im, b_re, b_im
    [species.KS], [species.KL]              lifetime_s, mass_MeV
    [species.KS.branching], [species.KL.branching]   <mode> = fraction
    [reconstruction] modes, n_samples, t1_tol, theta, timed, pairing
    [spread]         t_max_s, n_points
    [output]         events, results, report, comparison

Any ``detector.*`` section in a file replaces the default detector pair;
a ``species.X.branching`` section replaces that species' whole table.
Unknown sections or keys are errors. ``t_max_s = 0`` means "the time the
kaon needs to cross the fiducial length".
"""

from __future__ import annotations

import configparser
import copy
import os
from io import StringIO
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from kaonbohm.constants import HBAR, KAON_MASS_MEV, PION_MASS_MEV, mev_to_joule, mev_to_kg
from kaonbohm.errors import ConfigError
from kaonbohm.kaon import KL_BRANCHING, KL_LIFETIME, KS_BRANCHING, KS_LIFETIME, InitialKaonState, KaonMixing, KaonSpecies
from kaonbohm.reconstruction import PAIRINGS
from kaonbohm.simulator import BeamGeometry, DetectorPlane, SimulatorSetup

SEED_ENV = "KAONBOHM_SEED"
RECONSTRUCTION_MODES = ("classical", "bohmian")

_DETECTOR_KEYS = {
    "anchor_x_m": float,
    "anchor_y_m": float,
    "normal_x": float,
    "normal_y": float,
    "extent_m": float,
    "time_resolution_s": float,
    "momentum_resolution": float,
}
_SPECIES_KEYS = {"lifetime_s": float, "mass_MeV": float}

SCHEMA = {
    "run": {"seed": int, "n_events": int},
    "physics": {"hbar_Js": float, "kaon_mass_MeV": float, "pion_mass_MeV": float, "q_release_MeV": float},
    "packet": {"sigma0_m": float, "zero_offsets": bool, "kaon_spreading": bool, "kaon_sigma0_m": float},
    "beam": {
        "source_x_m": float,
        "source_y_m": float,
        "direction_x": float,
        "direction_y": float,
        "speed_m_per_s": float,
        "fiducial_length_m": float,
    },
    "mixing": {"p_re": float, "p_im": float, "q_re": float, "q_im": float},
    "state": {"a_re": float, "a_im": float, "b_re": float, "b_im": float},
    "species.KS": _SPECIES_KEYS,
    "species.KL": _SPECIES_KEYS,
    "reconstruction": {"modes": tuple, "n_samples": int, "t1_tol": float, "theta": float, "timed": bool, "pairing": str},
    "spread": {"t_max_s": float, "n_points": int},
    "output": {"events": str, "results": str, "report": str, "comparison": str},
}

DEFAULTS = {
    "run": {"seed": 20240601, "n_events": 1000},
    "physics": {
        "hbar_Js": HBAR,
        "kaon_mass_MeV": KAON_MASS_MEV,
        "pion_mass_MeV": PION_MASS_MEV,
        "q_release_MeV": KAON_MASS_MEV - 2 * PION_MASS_MEV,
    },
    "packet": {"sigma0_m": 1.0e-15, "zero_offsets": False, "kaon_spreading": False, "kaon_sigma0_m": 0.0},
    "beam": {
        "source_x_m": 0.0,
        "source_y_m": 0.0,
        "direction_x": 1.0,
        "direction_y": 0.0,
        "speed_m_per_s": 2.0e8,
        "fiducial_length_m": 10.0,
    },
    "detector.up": {
        "anchor_x_m": 5.0,
        "anchor_y_m": 1.0,
        "normal_x": 0.0,
        "normal_y": 1.0,
        "extent_m": 20.0,
        "time_resolution_s": 0.0,
        "momentum_resolution": 0.0,
    },
    "detector.down": {
        "anchor_x_m": 5.0,
        "anchor_y_m": -1.0,
        "normal_x": 0.0,
        "normal_y": -1.0,
        "extent_m": 20.0,
        "time_resolution_s": 0.0,
        "momentum_resolution": 0.0,
    },
    # epsilon ~ 1.6e-3 on both amplitudes; an external-reference choice
    "mixing": {"p_re": 1.0016, "p_im": 0.0, "q_re": 0.9984, "q_im": 0.0},
    "state": {"a_re": 0.7071067811865476, "a_im": 0.0, "b_re": 0.7071067811865476, "b_im": 0.0},
    "species.KS": {"lifetime_s": KS_LIFETIME, "mass_MeV": KAON_MASS_MEV},
    "species.KS.branching": dict(KS_BRANCHING),
    "species.KL": {"lifetime_s": KL_LIFETIME, "mass_MeV": KAON_MASS_MEV},
    "species.KL.branching": dict(KL_BRANCHING),
    "reconstruction": {"modes": RECONSTRUCTION_MODES, "n_samples": 100, "t1_tol": 1e-15, "theta": 20.0, "timed": True, "pairing": "independent"},
    "spread": {"t_max_s": 0.0, "n_points": 50},
    "output": {
        "events": "events.jsonl",
        "results": "results.csv",
        "report": "report.txt",
        "comparison": "comparison.csv",
    },
}

_BOOL = {"1": True, "yes": True, "true": True, "on": True, "0": False, "no": False, "false": False, "off": False}


def _convert(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() not in _BOOL:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is tuple:
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    return raw


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(value)
    return str(value)


def _key_type(section: str, key: str):
    if section.startswith("detector."):
        return _DETECTOR_KEYS.get(key)
    if section.endswith(".branching") and section in ("species.KS.branching", "species.KL.branching"):
        return float
    return SCHEMA.get(section, {}).get(key)


def _known_section(section: str) -> bool:
    return (
        section in SCHEMA
        or section in ("species.KS.branching", "species.KL.branching")
        or (section.startswith("detector.") and len(section) > len("detector."))
    )


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def n_events(self) -> int:
        return self.values["run"]["n_events"]

    @property
    def detector_ids(self) -> list[str]:
        return [s.split(".", 1)[1] for s in self.values if s.startswith("detector.")]

    @property
    def kaon_mass(self) -> float:
        return mev_to_kg(self["physics"]["kaon_mass_MeV"])

    @property
    def pion_mass(self) -> float:
        return mev_to_kg(self["physics"]["pion_mass_MeV"])

    @property
    def hbar(self) -> float:
        return self["physics"]["hbar_Js"]

    @property
    def sigma0(self) -> float:
        return self["packet"]["sigma0_m"]

    @property
    def tau_s(self) -> float:
        return self["species.KS"]["lifetime_s"]

    def beam(self) -> BeamGeometry:
        b = self["beam"]
        return BeamGeometry(
            np.array([b["source_x_m"], b["source_y_m"]]),
            np.array([b["direction_x"], b["direction_y"]]),
            b["speed_m_per_s"],
            b["fiducial_length_m"],
        )

    def detectors(self) -> tuple[DetectorPlane, ...]:
        out = []
        for det_id in self.detector_ids:
            d = self[f"detector.{det_id}"]
            out.append(
                DetectorPlane(
                    det_id,
                    np.array([d["anchor_x_m"], d["anchor_y_m"]]),
                    np.array([d["normal_x"], d["normal_y"]]),
                    d["extent_m"],
                    d["time_resolution_s"],
                    d["momentum_resolution"],
                )
            )
        return tuple(out)

    def mixing(self) -> KaonMixing:
        m = self["mixing"]
        return KaonMixing(complex(m["p_re"], m["p_im"]), complex(m["q_re"], m["q_im"]))

    def state(self) -> InitialKaonState:
        s = self["state"]
        return InitialKaonState.normalized(complex(s["a_re"], s["a_im"]), complex(s["b_re"], s["b_im"]))

    def species(self) -> dict[str, KaonSpecies]:
        out = {}
        for label in ("KL", "KS"):
            sp = self[f"species.{label}"]
            phase = mev_to_joule(sp["mass_MeV"]) / self.hbar
            out[label] = KaonSpecies(label, sp["lifetime_s"], self[f"species.{label}.branching"], phase)
        return out

    def setup(self) -> SimulatorSetup:
        pk = self["packet"]
        return SimulatorSetup(
            beam=self.beam(),
            detectors=self.detectors(),
            state=self.state(),
            species=self.species(),
            sigma0=pk["sigma0_m"],
            kaon_mass=self.kaon_mass,
            pion_mass=self.pion_mass,
            q_release=mev_to_joule(self["physics"]["q_release_MeV"]),
            hbar=self.hbar,
            zero_offsets=pk["zero_offsets"],
            kaon_spreading=pk["kaon_spreading"],
            kaon_sigma0=pk["kaon_sigma0_m"] or None,
        )

    def replace(self, overrides: dict[str, object]) -> ExperimentConfig:
        """New config with ``{"section.key": value}`` overrides (values already typed or strings)."""
        return build_config(copy.deepcopy(self.values), overrides)

    def dumps(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, body in self.values.items():
            parser[section] = {k: _format(v) for k, v in body.items()}
        buf = StringIO()
        parser.write(buf)
        return buf.getvalue()


def _validate(values: dict) -> list[str]:
    problems = []
    for section in SCHEMA:
        if section not in values:
            problems.append(f"[{section}] missing")
            continue
        for key in SCHEMA[section]:
            if key not in values[section]:
                problems.append(f"[{section}] {key} missing")
    if problems:
        return problems
    positive = [
        ("physics", "hbar_Js"),
        ("physics", "kaon_mass_MeV"),
        ("physics", "pion_mass_MeV"),
        ("physics", "q_release_MeV"),
        ("packet", "sigma0_m"),
        ("beam", "fiducial_length_m"),
        ("species.KS", "lifetime_s"),
        ("species.KL", "lifetime_s"),
        ("reconstruction", "n_samples"),
        ("reconstruction", "t1_tol"),
        ("reconstruction", "theta"),
        ("spread", "n_points"),
    ]
    for section, key in positive:
        if not values[section][key] > 0:
            problems.append(f"[{section}] {key} must be positive")
    if values["beam"]["speed_m_per_s"] < 0:
        problems.append("[beam] speed_m_per_s must be non-negative")
    if values["run"]["n_events"] < 0:
        problems.append("[run] n_events must be non-negative")
    for mode in values["reconstruction"]["modes"]:
        if mode not in RECONSTRUCTION_MODES:
            problems.append(f"[reconstruction] unknown mode {mode!r}")
    if values["reconstruction"]["pairing"] not in PAIRINGS:
        problems.append(f"[reconstruction] pairing must be one of {', '.join(PAIRINGS)}")
    if not values["reconstruction"]["modes"]:
        problems.append("[reconstruction] modes is empty")
    detector_sections = [s for s in values if s.startswith("detector.")]
    if not detector_sections:
        problems.append("at least one [detector.<id>] section is required")
    for section in detector_sections:
        for key in _DETECTOR_KEYS:
            if key not in values[section]:
                problems.append(f"[{section}] {key} missing")
    for label in ("KS", "KL"):
        table = values.get(f"species.{label}.branching", {})
        if not table:
            problems.append(f"[species.{label}.branching] is empty")
        elif any(v < 0 for v in table.values()) or abs(sum(table.values()) - 1.0) > 1e-9:
            problems.append(f"[species.{label}.branching] fractions must be >= 0 and sum to 1")
    return problems


def build_config(values: dict, overrides: dict[str, object] | None = None) -> ExperimentConfig:
    errors = []
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            errors.append(f"override {dotted!r} must look like section.key=value")
            continue
        section, key = dotted.rsplit(".", 1)
        kind = _key_type(section, key)
        if not _known_section(section) or kind is None:
            errors.append(f"unknown config key {dotted!r}")
            continue
        try:
            value = _convert(kind, raw) if isinstance(raw, str) else kind(raw)
        except (TypeError, ValueError) as exc:
            errors.append(f"{dotted}: {exc}")
            continue
        values.setdefault(section, {})[key] = value
    if errors:
        raise ConfigError("; ".join(errors))
    problems = _validate(values)
    if problems:
        raise ConfigError("; ".join(problems))
    return ExperimentConfig(values)


def default_config() -> ExperimentConfig:
    return build_config(copy.deepcopy(DEFAULTS))


def load_config(path: str | os.PathLike | None = None, overrides: dict[str, object] | None = None) -> ExperimentConfig:
    """Defaults, then the file, then KAONBOHM_SEED, then explicit overrides."""
    values = copy.deepcopy(DEFAULTS)
    errors = []
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        sections = parser.sections()
        if any(s.startswith("detector.") for s in sections):
            for s in [s for s in values if s.startswith("detector.")]:
                del values[s]
        for section in sections:
            if not _known_section(section):
                errors.append(f"{path}: unknown section [{section}]")
                continue
            if section.endswith(".branching"):
                values[section] = {}
            elif section.startswith("detector."):
                # geometry keys are mandatory, resolutions default to ideal
                values[section] = {"time_resolution_s": 0.0, "momentum_resolution": 0.0}
            for key, raw in parser[section].items():
                kind = _key_type(section, key)
                if kind is None:
                    errors.append(f"{path}: unknown key {key!r} in [{section}]")
                    continue
                try:
                    values[section][key] = _convert(kind, raw)
                except ValueError as exc:
                    errors.append(f"{path}: [{section}] {key}: {exc}")
    if errors:
        raise ConfigError("; ".join(errors))
    merged = dict(overrides or {})
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and "run.seed" not in merged:
        merged["run.seed"] = env_seed
    return build_config(values, merged)


def write_default_config(path: str | Path) -> None:
    Path(path).write_text(default_config().dumps())
