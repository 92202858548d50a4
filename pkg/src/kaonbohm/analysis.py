"""Simulate -> reconstruct -> classify pipeline and mode comparison."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kaonbohm.config import ExperimentConfig
from kaonbohm.errors import KaonBohmError, MismatchedEventSets
from kaonbohm.kaon import CHARGED_2PI, overlap_LS
from kaonbohm.reconstruction import (
    QUANTILE_LEVELS,
    DecayTimeSpread,
    ReconstructionResult,
    bohmian_retrodict,
    classical_retrodict,
    decay_time_spread,
)
from kaonbohm.simulator import DecayEvent, SimulationSummary, generate_events, write_events

log = logging.getLogger(__name__)

VERDICTS = ("KL", "KS", "ambiguous")
PARENTS = ("KL", "KS")

_Q_COLS = [f"t1_q{int(round(100 * q)):02d}_s" for q in QUANTILE_LEVELS]
RESULT_COLUMNS = [
    "event_id",
    "mode",
    "vx_m",
    "vy_m",
    "vx_std_m",
    "vy_std_m",
    "t1_mean_s",
    "t1_std_s",
    *_Q_COLS,
    "pk_x",
    "pk_y",
    "n_failed_samples",
    "residual",
    "verdict",
    "truth_parent",
]


def classify(distribution, tau_s: float, theta: float) -> str:
    """KL if the 5th percentile of t1 exceeds theta*tau_s, KS if the 95th lies
    below it, ambiguous when the spread straddles the threshold."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if isinstance(distribution, DecayTimeSpread):
        q05, q95 = distribution.quantiles[0.05], distribution.quantiles[0.95]
    else:
        t = np.asarray(distribution, dtype=float)
        if t.size == 0:
            return "ambiguous"
        q05, q95 = np.quantile(t, [0.05, 0.95])
    cut = theta * tau_s
    if q05 > cut:
        return "KL"
    if q95 < cut:
        return "KS"
    return "ambiguous"


@dataclass
class ResultRow:
    event_id: int
    mode: str
    vx_m: float = math.nan
    vy_m: float = math.nan
    vx_std_m: float = math.nan
    vy_std_m: float = math.nan
    t1_mean_s: float = math.nan
    t1_std_s: float = math.nan
    quantiles: tuple = (math.nan,) * len(QUANTILE_LEVELS)
    pk_x: float = math.nan
    pk_y: float = math.nan
    n_failed_samples: int = 0
    residual: float = math.nan
    verdict: str = "ambiguous"
    truth_parent: str = ""

    @classmethod
    def from_result(cls, res: ReconstructionResult, verdict: str, truth_parent: str) -> ResultRow:
        row = cls(res.event_id, res.mode, n_failed_samples=res.n_failed, verdict=verdict, truth_parent=truth_parent)
        row.pk_x, row.pk_y = (float(v) for v in res.kaon_momentum)
        row.residual = float(res.residual)
        if len(res.t1_samples):
            spread = decay_time_spread(res)
            row.vx_m, row.vy_m = (float(v) for v in res.vertex)
            row.vx_std_m, row.vy_std_m = (float(v) for v in res.vertex_cloud.std(axis=0))
            row.t1_mean_s, row.t1_std_s = spread.mean, spread.std
            row.quantiles = tuple(spread.quantiles[q] for q in QUANTILE_LEVELS)
        return row

    @property
    def spread(self) -> DecayTimeSpread:
        return DecayTimeSpread(self.t1_mean_s, self.t1_std_s, dict(zip(QUANTILE_LEVELS, self.quantiles)))

    def as_list(self) -> list[str]:
        nums = [
            self.vx_m,
            self.vy_m,
            self.vx_std_m,
            self.vy_std_m,
            self.t1_mean_s,
            self.t1_std_s,
            *self.quantiles,
            self.pk_x,
            self.pk_y,
        ]
        return [
            str(self.event_id),
            self.mode,
            *(repr(float(v)) for v in nums),
            str(self.n_failed_samples),
            repr(float(self.residual)),
            self.verdict,
            self.truth_parent,
        ]

    @classmethod
    def from_record(cls, rec: dict) -> ResultRow:
        return cls(
            event_id=int(rec["event_id"]),
            mode=rec["mode"],
            vx_m=float(rec["vx_m"]),
            vy_m=float(rec["vy_m"]),
            vx_std_m=float(rec["vx_std_m"]),
            vy_std_m=float(rec["vy_std_m"]),
            t1_mean_s=float(rec["t1_mean_s"]),
            t1_std_s=float(rec["t1_std_s"]),
            quantiles=tuple(float(rec[c]) for c in _Q_COLS),
            pk_x=float(rec["pk_x"]),
            pk_y=float(rec["pk_y"]),
            n_failed_samples=int(rec["n_failed_samples"]),
            residual=float(rec["residual"]),
            verdict=rec.get("verdict") or "ambiguous",
            truth_parent=rec.get("truth_parent", ""),
        )


def write_results(rows: Iterable[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for row in rows:
            w.writerow(row.as_list())


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RESULT_COLUMNS[:-2] if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: not a results file (missing columns {', '.join(missing)})")
        rows = []
        for line, rec in enumerate(reader, start=2):
            try:
                rows.append(ResultRow.from_record(rec))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
        return rows


def reconstruct_event(event: DecayEvent, config: ExperimentConfig, mode: str) -> ResultRow:
    rc = config["reconstruction"]
    beam = config.beam()
    try:
        if mode == "classical":
            res = classical_retrodict(
                event.hits, kaon_mass=config.kaon_mass, source=beam.source, direction=beam.direction, event_id=event.id
            )
        elif mode == "bohmian":
            res = bohmian_retrodict(
                event.hits,
                pion_mass=config.pion_mass,
                sigma0=config.sigma0,
                n_samples=rc["n_samples"],
                seed=config.seed,
                event_id=event.id,
                hbar=config.hbar,
                t1_tol=rc["t1_tol"],
                timed=rc["timed"],
                pairing=rc["pairing"],
                kaon_mass=config.kaon_mass,
                source=beam.source,
                direction=beam.direction,
            )
        else:
            raise ValueError(f"unknown reconstruction mode {mode!r}")
    except KaonBohmError as exc:
        log.info("event %d (%s): %s", event.id, mode, exc)
        return ResultRow(event.id, mode, n_failed_samples=rc["n_samples"] if mode == "bohmian" else 1, truth_parent=event.parent)
    verdict = classify(res.t1_samples, config.tau_s, rc["theta"])
    return ResultRow.from_result(res, verdict, event.parent)


def reconstruct_events(events: Sequence[DecayEvent], config: ExperimentConfig, modes: Sequence[str]) -> list[ResultRow]:
    rows = []
    for ev in sorted(events, key=lambda e: e.id):
        if not ev.detected:
            continue
        for mode in modes:
            rows.append(reconstruct_event(ev, config, mode))
    return rows


@dataclass
class ModeStats:
    mode: str
    n: int
    confusion: dict
    ambiguous: int
    misclassified: int
    median_t1_std: float

    @property
    def ambiguity_rate(self) -> float:
        return self.ambiguous / self.n if self.n else 0.0

    @property
    def misclassification_rate(self) -> float:
        return self.misclassified / self.n if self.n else 0.0


def mode_stats(rows: Sequence[ResultRow], mode: str) -> ModeStats:
    rows = [r for r in rows if r.mode == mode]
    confusion = {(p, v): 0 for p in PARENTS for v in VERDICTS}
    for r in rows:
        if r.truth_parent in PARENTS:
            confusion[(r.truth_parent, r.verdict)] += 1
    ambiguous = sum(r.verdict == "ambiguous" for r in rows)
    wrong = sum(r.verdict in PARENTS and r.truth_parent in PARENTS and r.verdict != r.truth_parent for r in rows)
    stds = [r.t1_std_s for r in rows if not math.isnan(r.t1_std_s)]
    return ModeStats(mode, len(rows), confusion, ambiguous, wrong, float(np.median(stds)) if stds else math.nan)


@dataclass
class ClassificationReport:
    summary: SimulationSummary
    verdicts: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    kl_total: int = 0
    kl_2pi: int = 0
    overlap: float = 0.0

    def text(self, config: ExperimentConfig) -> str:
        s = self.summary
        rc = config["reconstruction"]
        lines = [
            "kaon decay retrodiction report",
            f"seed {config.seed}  events {s.generated}  sigma0 {config.sigma0!r} m",
            f"threshold theta*tau_S = {rc['theta']!r} * {config.tau_s!r} s",
            f"<K_L|K_S> = {self.overlap!r}",
            "",
            f"generated     {s.generated}",
            f"detected 2pi  {s.detected}",
            f"other modes   {s.other_mode}",
            f"lost          {s.n_lost}",
        ]
        for reason in sorted(s.lost):
            lines.append(f"  {reason:<16}{s.lost[reason]}")
        freq = self.kl_2pi / self.kl_total if self.kl_total else math.nan
        lines += ["", f"K_L parents {self.kl_total}, K_L -> pi+pi- {self.kl_2pi} (fraction {freq!r})"]
        for mode, st in self.stats.items():
            lines += [
                "",
                f"[{mode}] classified {st.n}",
                f"  ambiguity rate       {st.ambiguity_rate!r}",
                f"  misclassification    {st.misclassification_rate!r}",
                f"  median t1 std (s)    {st.median_t1_std!r}",
                "  truth \\ verdict   KL     KS     ambiguous",
            ]
            for p in PARENTS:
                c = st.confusion
                lines.append(f"  {p:<17} {c[(p, 'KL')]:<6} {c[(p, 'KS')]:<6} {c[(p, 'ambiguous')]}")
        return "\n".join(lines) + "\n"


def build_report(events: Sequence[DecayEvent], summary: SimulationSummary, rows: Sequence[ResultRow], config) -> ClassificationReport:
    report = ClassificationReport(summary)
    report.overlap = overlap_LS(config.mixing())
    report.kl_total = sum(e.parent == "KL" for e in events)
    report.kl_2pi = sum(e.parent == "KL" and e.mode == CHARGED_2PI for e in events)
    for mode in dict.fromkeys(r.mode for r in rows):
        report.stats[mode] = mode_stats(rows, mode)
    for r in rows:
        report.verdicts.setdefault(r.mode, {})[r.event_id] = r.verdict
    return report


def run_pipeline(config: ExperimentConfig, outdir: str | Path = ".") -> ClassificationReport:
    """Generate events, reconstruct detected pi+pi- events in every configured mode,
    classify, and write events, results, comparison and report files under ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = config["output"]
    modes = config["reconstruction"]["modes"]
    events, summary = generate_events(config.setup(), config.n_events, config.seed)
    write_events(events, outdir / out["events"])
    rows = reconstruct_events(events, config, modes)
    write_results(rows, outdir / out["results"])
    if len(modes) == 2:
        per_event, summary_rows = compare_modes(rows)
        write_comparison(per_event, summary_rows, outdir / out["comparison"], modes)
    report = build_report(events, summary, rows, config)
    (outdir / out["report"]).write_text(report.text(config))
    return report


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def rate_difference_interval(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float, float]:
    """Difference p2 - p1 with Newcombe's hybrid-score 95% interval."""
    p1 = k1 / n1 if n1 else 0.0
    p2 = k2 / n2 if n2 else 0.0
    l1, u1 = wilson_interval(k1, n1)
    l2, u2 = wilson_interval(k2, n2)
    d = p2 - p1
    return d, d - math.sqrt((p2 - l2) ** 2 + (u1 - p1) ** 2), d + math.sqrt((u2 - p2) ** 2 + (p1 - l1) ** 2)


def compare_modes(rows: Sequence[ResultRow], modes: Sequence[str] | None = None):
    """Per-event deltas (second mode minus first) and rate differences with 95% intervals."""
    if modes is None:
        modes = list(dict.fromkeys(r.mode for r in rows))
        if not modes:
            modes = ["classical", "bohmian"]
    if len(modes) != 2:
        raise MismatchedEventSets(f"need exactly two modes to compare, got {list(modes)}")
    ma, mb = modes
    a = {r.event_id: r for r in rows if r.mode == ma}
    b = {r.event_id: r for r in rows if r.mode == mb}
    if set(a) != set(b):
        raise MismatchedEventSets(f"modes {ma} and {mb} cover different events ({len(set(a) ^ set(b))} unmatched)")
    per_event = []
    for eid in sorted(a):
        ra, rb = a[eid], b[eid]
        per_event.append(
            {
                "event_id": eid,
                "d_vx_m": rb.vx_m - ra.vx_m,
                "d_vy_m": rb.vy_m - ra.vy_m,
                "d_t1_s": rb.t1_mean_s - ra.t1_mean_s,
                f"verdict_{ma}": ra.verdict,
                f"verdict_{mb}": rb.verdict,
            }
        )
    sa = mode_stats(list(a.values()), ma)
    sb = mode_stats(list(b.values()), mb)
    summary = []
    for metric, ka, kb in (
        ("ambiguity_rate", sa.ambiguous, sb.ambiguous),
        ("misclassification_rate", sa.misclassified, sb.misclassified),
    ):
        d, lo, hi = rate_difference_interval(ka, sa.n, kb, sb.n)
        summary.append(
            {
                "metric": metric,
                ma: ka / sa.n if sa.n else 0.0,
                mb: kb / sb.n if sb.n else 0.0,
                "difference": d,
                "ci95_low": lo,
                "ci95_high": hi,
                "n": sa.n,
            }
        )
    return per_event, summary


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_comparison(per_event, summary, path, modes=("classical", "bohmian")) -> None:
    """Per-event deltas go to ``path``; rate differences to ``<stem>_summary<suffix>``."""
    ma, mb = modes
    path = Path(path)
    targets = (
        (path, ["event_id", "d_vx_m", "d_vy_m", "d_t1_s", f"verdict_{ma}", f"verdict_{mb}"], per_event),
        (path.with_name(path.stem + "_summary" + path.suffix), ["metric", ma, mb, "difference", "ci95_low", "ci95_high", "n"], summary),
    )
    for target, header, rows in targets:
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(r[k]) for k in header])
