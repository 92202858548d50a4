"""Monte Carlo decay events in a 2D lab plane.

A kaon leaves the source along the beam, decays after an exponentially
distributed time, and for the charged two-pion mode each pion is given a
Gaussian packet centred on the vertex at the decay time. The pion itself
starts at vertex + X0 (X0 drawn from the initial density) and is moved
along its closed-form Bohmian trajectory until it crosses a detector plane.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from kaonbohm import streams
from kaonbohm.constants import HBAR, KAON_MASS, PION_MASS, mev_to_joule
from kaonbohm.errors import GeometryInfeasible, MissedExtent, NegativeQ, NoCrossing
from kaonbohm.kaon import CHARGED_2PI, InitialKaonState, KaonSpecies, default_species, sample_decay
from kaonbohm.packet import GaussianPacket
from kaonbohm.trajectories import FreeTrajectorySpec, draw_offsets, free_position

DEFAULT_Q_RELEASE = mev_to_joule(497.611 - 2 * 139.57039)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("direction vector has zero length")
    return v / n


@dataclass(frozen=True, eq=False)
class BeamGeometry:
    source: np.ndarray = field(default_factory=lambda: np.zeros(2))
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    speed: float = 2.0e8
    fiducial_length: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float))
        object.__setattr__(self, "direction", _unit(self.direction))
        # speed 0 is allowed for decay-at-rest studies
        if not self.speed >= 0:
            raise ValueError("beam speed must be non-negative")
        if not self.fiducial_length > 0:
            raise ValueError("fiducial length must be positive")


@dataclass(frozen=True, eq=False)
class DetectorPlane:
    """A detector line in the plane: points a + u*tangent with |u| <= extent."""

    id: str
    anchor: np.ndarray
    normal: np.ndarray
    extent: float
    time_resolution: float = 0.0
    momentum_resolution: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        object.__setattr__(self, "normal", _unit(self.normal))
        if not self.extent > 0:
            raise ValueError("detector extent must be positive")
        if self.time_resolution < 0 or self.momentum_resolution < 0:
            raise ValueError("resolutions must be non-negative")

    @property
    def tangent(self) -> np.ndarray:
        return np.array([-self.normal[1], self.normal[0]])

    def along(self, point) -> float:
        return float(self.tangent @ (np.asarray(point) - self.anchor))


def default_detectors() -> tuple[DetectorPlane, ...]:
    return (
        DetectorPlane("up", np.array([5.0, 1.0]), np.array([0.0, 1.0]), 20.0),
        DetectorPlane("down", np.array([5.0, -1.0]), np.array([0.0, -1.0]), 20.0),
    )


@dataclass(frozen=True, eq=False)
class SimulatorSetup:
    beam: BeamGeometry = field(default_factory=BeamGeometry)
    detectors: tuple[DetectorPlane, ...] = field(default_factory=default_detectors)
    state: InitialKaonState = field(default_factory=lambda: InitialKaonState.normalized(1.0, 1.0))
    species: Mapping[str, KaonSpecies] = field(default_factory=default_species)
    sigma0: float = 1.0e-15
    kaon_mass: float = KAON_MASS
    pion_mass: float = PION_MASS
    q_release: float = DEFAULT_Q_RELEASE
    hbar: float = HBAR
    zero_offsets: bool = False
    kaon_spreading: bool = False
    kaon_sigma0: float | None = None


@dataclass(frozen=True)
class Hit:
    det: str
    t2: float
    pos: np.ndarray
    p: np.ndarray

    def to_dict(self) -> dict:
        return {"det": self.det, "t2": float(self.t2), "pos": [float(v) for v in self.pos], "p": [float(v) for v in self.p]}

    @classmethod
    def from_dict(cls, d: Mapping) -> Hit:
        return cls(d["det"], float(d["t2"]), np.array(d["pos"], dtype=float), np.array(d["p"], dtype=float))


@dataclass(frozen=True, eq=False)
class DecayEvent:
    id: int
    vertex: np.ndarray
    t1: float
    parent: str
    mode: str
    offsets: np.ndarray | None = None
    momenta: np.ndarray | None = None
    hits: tuple[Hit, ...] = ()
    lost: bool = False
    lost_reason: str | None = None

    @property
    def detected(self) -> bool:
        return not self.lost and self.mode == CHARGED_2PI and len(self.hits) == 2

    def to_dict(self) -> dict:
        def rows(a):
            return [] if a is None else [[float(v) for v in r] for r in a]

        return {
            "id": int(self.id),
            "truth": {
                "vertex": [float(v) for v in self.vertex],
                "t1": float(self.t1),
                "parent": self.parent,
                "mode": self.mode,
                "offsets": rows(self.offsets),
                "momenta": rows(self.momenta),
            },
            "hits": [h.to_dict() for h in self.hits],
            "lost": bool(self.lost),
            "lost_reason": self.lost_reason,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> DecayEvent:
        tr = d["truth"]

        def arr(key):
            v = tr.get(key) or []
            return np.array(v, dtype=float) if v else None

        return cls(
            id=int(d["id"]),
            vertex=np.array(tr["vertex"], dtype=float),
            t1=float(tr["t1"]),
            parent=tr["parent"],
            mode=tr["mode"],
            offsets=arr("offsets"),
            momenta=arr("momenta"),
            hits=tuple(Hit.from_dict(h) for h in d["hits"]),
            lost=bool(d["lost"]),
            lost_reason=d.get("lost_reason"),
        )


def two_body_decay(kaon_momentum, kaon_mass: float, pion_mass: float, q_release: float, rng: np.random.Generator):
    """Back-to-back pions with rest-frame |p*| = sqrt(m_pi Q), isotropic in the plane.

    Each pion carries half the kaon momentum on top of its rest-frame
    momentum, so p1 + p2 equals the kaon momentum exactly.
    """
    if not q_release > 0:
        raise NegativeQ(f"kinetic energy release must be positive, got {q_release}")
    pstar = math.sqrt(pion_mass * q_release)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    rest = pstar * np.array([math.cos(phi), math.sin(phi)])
    half = 0.5 * np.asarray(kaon_momentum, dtype=float)
    return half + rest, half - rest


def transport_to_plane(spec: FreeTrajectorySpec, plane: DetectorPlane) -> tuple[float, np.ndarray]:
    """Earliest crossing of a 2D closed-form trajectory with a detector plane.

    Along the normal the signed distance is g(d) = A + B d + C s(d) with s the
    spreading factor. It has at most one interior extremum, so splitting at
    that extremum leaves intervals on which g is monotone; each is bracketed
    and the root refined with Brent's method.
    """
    pk = spec.packet
    t1 = spec.emission_time
    n = plane.normal
    a_coef = float(n @ (pk.center - plane.anchor))
    b_coef = float(n @ pk.velocity)
    c_coef = float(n @ np.asarray(spec.offset))
    alpha = pk.hbar / (2.0 * pk.mass * pk.sigma0**2)

    def g(d):
        return a_coef + b_coef * d + c_coef * math.hypot(1.0, alpha * d)

    g0 = g(0.0)
    if g0 == 0.0:
        raise NoCrossing("trajectory starts on the plane")
    pieces = [0.0]
    if c_coef != 0.0:
        r = -b_coef / (c_coef * alpha)
        if 0.0 < r < 1.0:
            pieces.append(r / (alpha * math.sqrt(1.0 - r * r)))
    speed = abs(b_coef) + abs(c_coef) * alpha
    if speed == 0.0:
        raise NoCrossing("no motion along the plane normal")

    root = None
    for i, lo in enumerate(pieces):
        glo = g(lo)
        if i + 1 < len(pieces):
            hi = pieces[i + 1]
        else:
            hi = lo + abs(glo) / speed
            for _ in range(400):
                if math.copysign(1.0, g(hi)) != math.copysign(1.0, glo):
                    break
                hi *= 2.0
        ghi = g(hi)
        if glo == 0.0 and lo > 0.0:
            root = lo
            break
        if math.copysign(1.0, ghi) != math.copysign(1.0, glo):
            root = brentq(g, lo, hi, xtol=1e-15 * hi, maxiter=500)
            break
    if root is None:
        raise NoCrossing(f"trajectory never reaches plane {plane.id!r}")

    t2 = t1 + root
    hit = np.asarray(free_position(spec, t2), dtype=float)
    if abs(plane.along(hit)) > plane.extent:
        raise MissedExtent(f"hit lies outside plane {plane.id!r}")
    return t2, hit


def _first_hit(spec: FreeTrajectorySpec, detectors: Sequence[DetectorPlane]):
    best = None
    for plane in detectors:
        try:
            t2, pos = transport_to_plane(spec, plane)
        except (NoCrossing, MissedExtent):
            continue
        if best is None or t2 < best[1]:
            best = (plane, t2, pos)
    return best


def check_geometry(setup: SimulatorSetup) -> None:
    """Raise GeometryInfeasible unless central pions from a decay at the source,
    emitted transverse to the beam in the rest frame, both reach a detector."""
    beam = setup.beam
    pk = setup.kaon_mass * beam.speed * beam.direction
    pstar = math.sqrt(setup.pion_mass * setup.q_release)
    perp = np.array([-beam.direction[1], beam.direction[0]])
    for sign in (1.0, -1.0):
        v = (0.5 * pk + sign * pstar * perp) / setup.pion_mass
        packet = GaussianPacket(beam.source, v, setup.sigma0, setup.pion_mass, 0.0, setup.hbar)
        if _first_hit(FreeTrajectorySpec(packet, np.zeros(2)), setup.detectors) is None:
            raise GeometryInfeasible("no detector intercepts a central transverse pion")


def generate_event(setup: SimulatorSetup, event_id: int, seed: int) -> DecayEvent:
    check_geometry(setup)
    beam = setup.beam
    rng = streams.substream(seed, event_id, streams.DECAY)
    decay = sample_decay(setup.state, setup.species, rng)
    t1 = decay.time
    vertex = beam.source + beam.speed * t1 * beam.direction
    if setup.kaon_spreading:
        ks0 = setup.kaon_sigma0 or setup.sigma0
        xk, _ = draw_offsets(streams.substream(seed, event_id, streams.KAON_OFFSET), ks0, 2)
        s = GaussianPacket(0.0, 0.0, ks0, setup.kaon_mass, 0.0, setup.hbar).spreading_factor(t1)
        vertex = vertex + xk * s
    base = dict(id=event_id, vertex=vertex, t1=t1, parent=decay.parent, mode=decay.mode)
    if float(beam.direction @ (vertex - beam.source)) > beam.fiducial_length:
        return DecayEvent(**base, lost=True, lost_reason="beyond_fiducial")
    if decay.mode != CHARGED_2PI:
        return DecayEvent(**base)

    p_kaon = setup.kaon_mass * beam.speed * beam.direction
    p1, p2 = two_body_decay(p_kaon, setup.kaon_mass, setup.pion_mass, setup.q_release, rng)
    momenta = np.array([p1, p2])
    if setup.zero_offsets:
        offsets = np.zeros((2, 2))
    else:
        offsets, _ = draw_offsets(streams.substream(seed, event_id, streams.OFFSETS), setup.sigma0, (2, 2))
    base.update(offsets=offsets, momenta=momenta)

    noise = streams.substream(seed, event_id, streams.NOISE)
    hits = []
    for p, x0 in zip(momenta, offsets):
        packet = GaussianPacket(vertex, p / setup.pion_mass, setup.sigma0, setup.pion_mass, t1, setup.hbar)
        found = _first_hit(FreeTrajectorySpec(packet, x0), setup.detectors)
        if found is None:
            return DecayEvent(**base, lost=True, lost_reason="pion_missed")
        plane, t2, pos = found
        eps_p, eps_t = noise.standard_normal(2)
        p_meas = p * (1.0 + plane.momentum_resolution * eps_p)
        hits.append(Hit(plane.id, t2 + plane.time_resolution * eps_t, pos, p_meas))
    return DecayEvent(**base, hits=tuple(hits))


@dataclass
class SimulationSummary:
    generated: int = 0
    detected: int = 0
    other_mode: int = 0
    lost: Counter = field(default_factory=Counter)

    def add(self, ev: DecayEvent) -> None:
        self.generated += 1
        if ev.lost:
            self.lost[ev.lost_reason] += 1
        elif ev.detected:
            self.detected += 1
        else:
            self.other_mode += 1

    @property
    def n_lost(self) -> int:
        return sum(self.lost.values())


def generate_events(setup: SimulatorSetup, n: int, seed: int) -> tuple[list[DecayEvent], SimulationSummary]:
    check_geometry(setup)
    events = [generate_event(setup, i, seed) for i in range(n)]
    summary = SimulationSummary()
    for ev in events:
        summary.add(ev)
    return events, summary


def write_events(events: Iterable[DecayEvent], path) -> None:
    with open(path, "w") as fh:
        for ev in sorted(events, key=lambda e: e.id):
            fh.write(json.dumps(ev.to_dict(), separators=(",", ":")) + "\n")


def read_events(path) -> list[DecayEvent]:
    with open(path) as fh:
        return [DecayEvent.from_dict(json.loads(line)) for line in fh if line.strip()]
