"""Verification metrics over score sets and the identification benchmark harness."""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from hvindex.baselines import DEFAULT_LEAF_CAP, BallTree
from hvindex.bitcode import BitCode, CodeSet, hamming_to_many
from hvindex.errors import DegenerateInputError, DimensionError, DomainError
from hvindex.mih import MihIndex, QueryStats, substring_balance

# --- score sets ---------------------------------------------------------------


@dataclass
class ScoreSet:
    """Genuine and imposter comparison scores, optionally frequency-weighted.

    With ``higher_is_similar`` a comparison is accepted when its score is at
    least the threshold; otherwise (distance-like scores) when it is at most
    the threshold.
    """

    genuine: np.ndarray
    imposter: np.ndarray
    higher_is_similar: bool = True
    genuine_weights: np.ndarray | None = None
    imposter_weights: np.ndarray | None = None

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64).ravel()
        self.imposter = np.asarray(self.imposter, dtype=np.float64).ravel()
        self.genuine_weights = self._weights(self.genuine, self.genuine_weights)
        self.imposter_weights = self._weights(self.imposter, self.imposter_weights)

    @staticmethod
    def _weights(scores, weights):
        if weights is None:
            return np.ones_like(scores)
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if weights.shape != scores.shape or np.any(weights < 0):
            raise DimensionError("weights must be non-negative and match their scores")
        return weights

    @classmethod
    def from_histograms(cls, scores, genuine_counts, imposter_counts, higher_is_similar=True) -> ScoreSet:
        """Score set over a shared grid of values with per-value pair counts."""
        g = np.asarray(genuine_counts, dtype=np.float64)
        i = np.asarray(imposter_counts, dtype=np.float64)
        scores = np.asarray(scores, dtype=np.float64)
        gm, im = g > 0, i > 0
        return cls(scores[gm], scores[im], higher_is_similar, g[gm], i[im])

    def _similarities(self) -> tuple[np.ndarray, np.ndarray]:
        if self.genuine_weights.sum() <= 0 or self.imposter_weights.sum() <= 0:
            raise DomainError("both genuine and imposter scores are required")
        sign = 1.0 if self.higher_is_similar else -1.0
        return sign * self.genuine, sign * self.imposter


def _rates(s: ScoreSet, sim_thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g, i = s._similarities()
    gw, iw = s.genuine_weights, s.imposter_weights
    go, io = np.argsort(g, kind="stable"), np.argsort(i, kind="stable")
    g, gw, i, iw = g[go], gw[go], i[io], iw[io]
    g_cum = np.concatenate([[0.0], np.cumsum(gw)])
    i_cum = np.concatenate([[0.0], np.cumsum(iw)])
    # weight strictly below each threshold
    g_below = g_cum[np.searchsorted(g, sim_thresholds, side="left")]
    i_below = i_cum[np.searchsorted(i, sim_thresholds, side="left")]
    far = (i_cum[-1] - i_below) / i_cum[-1]
    frr = g_below / g_cum[-1]
    return far, frr


def far_frr_curve(s: ScoreSet, thresholds: Sequence[float]) -> list[tuple[float, float, float]]:
    """``(threshold, FAR, FRR)`` at each threshold."""
    thresholds = np.asarray(list(thresholds), dtype=np.float64)
    if thresholds.size == 0:
        raise DomainError("no thresholds given")
    sign = 1.0 if s.higher_is_similar else -1.0
    far, frr = _rates(s, sign * thresholds)
    return [(float(t), float(a), float(r)) for t, a, r in zip(thresholds, far, frr)]


def eer(s: ScoreSet) -> tuple[float, float]:
    """Equal error rate and the threshold where FAR and FRR cross.

    Rates are evaluated at every distinct observed score; when the curves
    cross between two of them the crossing point is interpolated linearly.
    """
    g, i = s._similarities()
    grid = np.unique(np.concatenate([g, i]))
    grid = np.append(grid, np.inf)
    far, frr = _rates(s, grid)
    diff = far - frr
    j = int(np.argmax(diff <= 0))
    sign = 1.0 if s.higher_is_similar else -1.0
    if diff[j] == 0 or j == 0:
        tau = grid[j] if np.isfinite(grid[j]) else grid[j - 1]
        return float((far[j] + frr[j]) / 2), float(sign * tau)
    lam = diff[j - 1] / (diff[j - 1] - diff[j])
    rate = far[j - 1] + lam * (far[j] - far[j - 1])
    hi = grid[j] if np.isfinite(grid[j]) else grid[j - 1]
    tau = grid[j - 1] + lam * (hi - grid[j - 1])
    return float(rate), float(sign * tau)


def _weighted_stats(x: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    n = w.sum()
    if n < 2:
        raise DomainError("decidability needs at least two scores per class")
    mu = float((w * x).sum() / n)
    var = float((w * (x - mu) ** 2).sum() / (n - 1))
    return mu, var


def decidability_index(s: ScoreSet) -> float:
    """``|mu_g - mu_i| / sqrt((var_g + var_i) / 2)`` with sample statistics."""
    mu_g, var_g = _weighted_stats(s.genuine, s.genuine_weights)
    mu_i, var_i = _weighted_stats(s.imposter, s.imposter_weights)
    if var_g == 0 and var_i == 0:
        raise DegenerateInputError("decidability is undefined when both variances are zero")
    return abs(mu_g - mu_i) / math.sqrt((var_g + var_i) / 2)


def code_distance_histograms(gallery: CodeSet, probes: CodeSet, chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Genuine and imposter counts of every probe-gallery Hamming distance 0..k."""
    if gallery.width != probes.width:
        raise DimensionError("gallery and probes differ in width")
    k = gallery.width
    gm = gallery.matrix
    g_labels = np.asarray(gallery.labels)
    p_labels = np.asarray(probes.labels)
    pm = probes.matrix
    gen = np.zeros(k + 1, dtype=np.int64)
    imp = np.zeros(k + 1, dtype=np.int64)
    for start in range(0, len(probes), chunk):
        block = pm[start : start + chunk]
        dists = np.bitwise_count(block[:, None, :] ^ gm[None, :, :]).sum(axis=2, dtype=np.int64)
        same = p_labels[start : start + chunk, None] == g_labels[None, :]
        gen += np.bincount(dists[same], minlength=k + 1)
        imp += np.bincount(dists[~same], minlength=k + 1)
    return gen, imp


def code_scores(gallery: CodeSet, probes: CodeSet) -> ScoreSet:
    """Similarity ``1 - hamming/k`` for every probe-gallery pair, as a weighted score set."""
    gen, imp = code_distance_histograms(gallery, probes)
    k = gallery.width
    return ScoreSet.from_histograms(1.0 - np.arange(k + 1) / k, gen, imp)


# --- identification benchmark -----------------------------------------------

ENGINES = ("linear", "balltree", "mih", "mih_optimized", "mih_mcom")
ENGINE_ALIASES = {"mih_opt": "mih_optimized"}


def canonical_engine(name: str) -> str:
    name = ENGINE_ALIASES.get(name, name)
    if name not in ENGINES:
        raise DomainError(f"unknown engine {name!r}; choose from {', '.join(ENGINES + tuple(ENGINE_ALIASES))}")
    return name


@dataclass
class ProbeResult:
    probe: int
    label: int
    hit: bool
    retrieved: int
    candidates_examined: int
    full_verifications: int
    tables_probed: int
    nodes_visited: int
    true_neighbors: int
    balance_deviation: float | None
    seconds: float


@dataclass
class IndexRunReport:
    engine: str
    radius: int
    t: int | None
    gallery_size: int
    probe_count: int
    eligible_probes: int
    hit_rate: float
    penetration_rate: float
    mean_query_time: float
    build_time: float
    probes: list[ProbeResult] = field(default_factory=list, repr=False)
    balance_quantiles: dict[str, float] | None = None

    def summary_row(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k not in ("probes", "balance_quantiles")}
        if self.balance_quantiles:
            row.update({f"balance_{k}": v for k, v in self.balance_quantiles.items()})
        return row


class Searcher:
    """A built engine answering ``search(q, r) -> (retrieved ids, stats dict)``."""

    def __init__(self, gallery: CodeSet, engine: str, t: int = 16, leaf_cap: int = DEFAULT_LEAF_CAP):
        self.engine = canonical_engine(engine)
        self.gallery = gallery
        self.t = t if self.engine.startswith("mih") else None
        start = time.perf_counter()
        if self.engine == "linear":
            self._matrix = gallery.matrix
        elif self.engine == "balltree":
            self._tree = BallTree(gallery, leaf_cap) if len(gallery) else None
        else:
            self._index = MihIndex.build(gallery, t)
        self.build_time = time.perf_counter() - start

    def search(self, q: BitCode, r: int) -> tuple[Iterable[int], dict]:
        n = len(self.gallery)
        if self.engine == "linear":
            if q.width != self.gallery.width:
                raise DimensionError(f"query width {q.width} does not match gallery width {self.gallery.width}")
            ids = np.flatnonzero(hamming_to_many(self._matrix, q) <= r).tolist()
            return ids, dict(candidates_examined=n, full_verifications=n, true_neighbors=len(ids))
        if self.engine == "balltree":
            if self._tree is None:
                return [], {}
            ids, st = self._tree.search(q, r)
            return ids, dict(
                candidates_examined=st.full_verifications,
                full_verifications=st.full_verifications,
                nodes_visited=st.nodes_visited,
                true_neighbors=st.true_neighbors,
            )
        if self.engine == "mih":
            ids, st = self._index.query_rneighbors(q, r)
            return ids, asdict(st)
        found, st = self._index.search_optimized(q, r)
        return list(found), asdict(st) | {"_found": found}


def _run_probe(searcher: Searcher, probes: CodeSet, j: int, r: int, gallery_labels: list[int]) -> ProbeResult:
    q = probes[j]
    start = time.perf_counter()
    ids, st = searcher.search(q, r)
    seconds = time.perf_counter() - start
    label = probes.labels[j]
    ids = list(ids)
    deviation = None
    found = st.pop("_found", None)
    if searcher.engine == "mih_mcom" and found:
        best = min(found.items(), key=lambda item: (item[1], item[0]))[0]
        deviation = substring_balance(q, searcher.gallery[best], searcher.t)[1]
    return ProbeResult(
        probe=j,
        label=label,
        hit=any(gallery_labels[i] == label for i in ids),
        retrieved=len(ids),
        candidates_examined=st.get("candidates_examined", 0),
        full_verifications=st.get("full_verifications", 0),
        tables_probed=st.get("tables_probed", 0),
        nodes_visited=st.get("nodes_visited", 0),
        true_neighbors=st.get("true_neighbors", 0),
        balance_deviation=deviation,
        seconds=seconds,
    )


BALANCE_QUANTILES = (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)


def run_benchmark(
    gallery: CodeSet,
    probes: CodeSet,
    engine: str | Searcher,
    r: int,
    t: int = 16,
    threads: int | None = 1,
    leaf_cap: int = DEFAULT_LEAF_CAP,
) -> IndexRunReport:
    """Query every probe against ``gallery`` and aggregate hit and penetration rates.

    ``engine`` is an engine name or a prebuilt :class:`Searcher` (reuse one
    across a radius sweep).  Per-probe results are ordered by probe index
    regardless of ``threads``.
    """
    if gallery.width != probes.width:
        raise DimensionError(f"gallery width {gallery.width} does not match probe width {probes.width}")
    searcher = engine if isinstance(engine, Searcher) else Searcher(gallery, engine, t, leaf_cap)
    if searcher.gallery is not gallery:
        raise DomainError("searcher was built over a different gallery")
    if not 0 <= r <= gallery.width:
        raise DomainError(f"radius {r} outside 0..{gallery.width}")
    labels = list(gallery.labels)
    workers = threads or os.cpu_count() or 1
    idx = range(len(probes))
    if workers == 1:
        results = [_run_probe(searcher, probes, j, r, labels) for j in idx]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _run_probe(searcher, probes, j, r, labels), idx))

    enrolled = set(labels)
    eligible = [p for p in results if p.label in enrolled]
    n = len(gallery)
    hit_rate = sum(p.hit for p in eligible) / len(eligible) if eligible else 0.0
    penetration = float(np.mean([p.full_verifications / n for p in results])) if results and n else 0.0
    mean_time = float(np.mean([p.seconds for p in results])) if results else 0.0
    quantiles = None
    if searcher.engine == "mih_mcom":
        devs = [p.balance_deviation for p in results if p.balance_deviation is not None]
        if devs:
            qs = np.quantile(devs, BALANCE_QUANTILES)
            quantiles = {f"q{int(round(q * 100)):02d}": float(v) for q, v in zip(BALANCE_QUANTILES, qs)}
    return IndexRunReport(
        engine=searcher.engine,
        radius=r,
        t=searcher.t,
        gallery_size=n,
        probe_count=len(results),
        eligible_probes=len(eligible),
        hit_rate=hit_rate,
        penetration_rate=penetration,
        mean_query_time=mean_time,
        build_time=searcher.build_time,
        probes=results,
        balance_quantiles=quantiles,
    )


@dataclass(frozen=True)
class SweepRow:
    engine: str
    radius: int
    miss_rate: float
    penetration_rate: float
    mean_query_time: float


def miss_vs_penetration(reports: Sequence[IndexRunReport]) -> list[SweepRow]:
    """One row per radius, sorted by radius."""
    if not reports:
        raise DomainError("empty sweep")
    if len({rep.radius for rep in reports}) < 2:
        raise DomainError("a sweep needs at least two radii")
    return [
        SweepRow(rep.engine, rep.radius, 1.0 - rep.hit_rate, rep.penetration_rate, rep.mean_query_time)
        for rep in sorted(reports, key=lambda rep: rep.radius)
    ]


# --- report output -------------------------------------------------------------

PROBE_COLUMNS = [f for f in ProbeResult.__dataclass_fields__]
SUMMARY_COLUMNS = [
    "engine",
    "radius",
    "t",
    "gallery_size",
    "probe_count",
    "eligible_probes",
    "hit_rate",
    "penetration_rate",
    "mean_query_time",
    "build_time",
]
SWEEP_COLUMNS = ["engine", "radius", "miss_rate", "penetration_rate", "mean_query_time"]
TIMING_COLUMNS = {"seconds", "mean_query_time", "build_time"}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_probe_csv(report: IndexRunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["engine", "radius"] + PROBE_COLUMNS)
        for p in report.probes:
            w.writerow([report.engine, report.radius] + [_fmt(getattr(p, c)) for c in PROBE_COLUMNS])


def write_summary_csv(reports: Sequence[IndexRunReport], path) -> None:
    extra = sorted({k for rep in reports for k in rep.summary_row()} - set(SUMMARY_COLUMNS))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS + extra)
        for rep in reports:
            row = rep.summary_row()
            w.writerow([_fmt(row.get(c)) for c in SUMMARY_COLUMNS + extra])


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([_fmt(getattr(row, c)) for c in SWEEP_COLUMNS])


def format_summary(reports: Sequence[IndexRunReport]) -> str:
    """Plain-text table of the headline numbers."""
    head = f"{'engine':<14}{'r':>5}{'t':>5}{'gallery':>9}{'probes':>8}{'HR %':>9}{'PR %':>9}{'ms/query':>10}"
    lines = [head, "-" * len(head)]
    for rep in reports:
        lines.append(
            f"{rep.engine:<14}{rep.radius:>5}{rep.t if rep.t else '-':>5}{rep.gallery_size:>9}"
            f"{rep.probe_count:>8}{100 * rep.hit_rate:>9.2f}{100 * rep.penetration_rate:>9.3f}"
            f"{1000 * rep.mean_query_time:>10.3f}"
        )
        if rep.balance_quantiles:
            qs = " ".join(f"{k}={v:.2f}" for k, v in rep.balance_quantiles.items())
            lines.append(f"{'':<14}substring balance deviation: {qs}")
    return "\n".join(lines)
