"""Embedding-space statistics behind the retrieval thresholds."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, InvalidInput, InvalidProfile

# category sets over which the per-view statistics are computed
VIEWS: dict[str, frozenset[str]] = {
    # normalized question and its generated alternatives
    "normalized": frozenset({"normalized", "similar"}),
    "normalized_main": frozenset({"normalized", "similar", "main_clause"}),
    "full": frozenset({"normalized", "main_clause", "entity", "init"}),
}

DEFAULT_TAU_EXACT = 0.995
DEFAULT_T_STAGE2 = 0.98
DEFAULT_T_STAGE3 = 0.96  # P99 of inter-group nearest-neighbour similarity, normalized + main clause
DEFAULT_T_STAGE4 = 0.82  # P01 of intra-group full pairwise similarity
DEFAULT_TAU_RERANK = 0.5

REPORT_PERCENTILES = (99, 95, 90, 75, 50, 25, 10, 5, 1)


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the sorted element at 1-based rank ceil(p/100 * n)."""
    if len(values) == 0:
        raise EmptyInput("percentile of an empty list")
    if not 0 <= p <= 100:
        raise InvalidInput(f"percentile rank {p} outside [0, 100]")
    ordered = sorted(values)
    rank = math.ceil(Fraction(p) * len(ordered) / 100)
    return ordered[max(rank, 1) - 1]


@dataclass
class GroupStats:
    intra_nn: list[float] = field(default_factory=list)
    inter_nn: list[float] = field(default_factory=list)
    intra_full: list[float] = field(default_factory=list)
    inter_full: list[float] = field(default_factory=list)


@dataclass
class SimilarityStats(GroupStats):
    by_view: dict[str, GroupStats] = field(default_factory=dict)


LabeledVector = tuple[str, np.ndarray]


def _similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(vectors * vectors, axis=1))
    if np.any(norms == 0):
        raise InvalidInput("zero vector in calibration input")
    cos = (vectors @ vectors.T) / np.outer(norms, norms)
    return np.clip((cos + 1.0) / 2.0, 0.0, 1.0)


def _group_stats(sims: np.ndarray, groups: np.ndarray) -> GroupStats:
    n = len(groups)
    out = GroupStats()
    if n == 0:
        return out
    same = groups[:, None] == groups[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    for i in range(n):
        intra = sims[i, same[i] & off_diag[i]]
        if intra.size:
            out.intra_nn.append(float(intra.max()))
        inter = sims[i, ~same[i]]
        if inter.size:
            out.inter_nn.append(float(inter.max()))
    iu, ju = np.triu_indices(n, k=1)
    pair_same = same[iu, ju]
    pair_sims = sims[iu, ju]
    out.intra_full = pair_sims[pair_same].tolist()
    out.inter_full = pair_sims[~pair_same].tolist()
    return out


def pairwise_similarities(
    groups: Sequence[tuple[str, Sequence[LabeledVector]]],
    views: Mapping[str, frozenset[str]] = VIEWS,
) -> SimilarityStats:
    """Intra/inter-group similarity lists, nearest-neighbour and full-pairwise.

    ``groups`` pairs a group id (one stored example) with its labeled vectors;
    labels are embedding categories and drive the per-view breakdown.
    """
    labels, gids, vecs = [], [], []
    for gid, members in groups:
        for label, vec in members:
            labels.append(label)
            gids.append(gid)
            vecs.append(np.asarray(vec, dtype=np.float64))
    if not vecs:
        return SimilarityStats(by_view={name: GroupStats() for name in views})
    sims = _similarity_matrix(np.stack(vecs))
    gids_arr = np.array(gids, dtype=object)
    labels_arr = np.array(labels, dtype=object)
    top = _group_stats(sims, gids_arr)
    stats = SimilarityStats(top.intra_nn, top.inter_nn, top.intra_full, top.inter_full)
    for name, cats in views.items():
        idx = np.flatnonzero([lab in cats for lab in labels_arr])
        stats.by_view[name] = _group_stats(sims[np.ix_(idx, idx)], gids_arr[idx])
    return stats


@dataclass
class ThresholdProfile:
    tau_exact: float = DEFAULT_TAU_EXACT
    t_stage2: float = DEFAULT_T_STAGE2
    t_stage3: float = DEFAULT_T_STAGE3
    t_stage4: float = DEFAULT_T_STAGE4
    tau_rerank: float = DEFAULT_TAU_RERANK
    provenance: str = "default"
    sources: dict[str, str] = field(default_factory=dict)
    created_at: str = ""

    def __post_init__(self) -> None:
        for name in ("tau_exact", "t_stage2", "t_stage3", "t_stage4", "tau_rerank"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidProfile(f"{name}={value} outside [0, 1]")
        if not self.t_stage4 <= self.t_stage3 <= self.tau_exact:
            raise InvalidProfile(
                f"thresholds out of order: t_stage4={self.t_stage4} <= t_stage3={self.t_stage3} "
                f"<= tau_exact={self.tau_exact} does not hold"
            )
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdProfile":
        path = Path(path)
        if not path.exists():
            return cls()
        return cls(**json.loads(path.read_text(encoding="utf-8")))


def calibrate(
    stats: SimilarityStats | None,
    overrides: Mapping[str, float] | None = None,
    *,
    tau_exact: float = DEFAULT_TAU_EXACT,
    tau_rerank: float = DEFAULT_TAU_RERANK,
) -> ThresholdProfile:
    """Thresholds from similarity statistics; missing statistics fall back to the defaults."""
    values = {
        "tau_exact": tau_exact,
        "t_stage2": DEFAULT_T_STAGE2,
        "t_stage3": DEFAULT_T_STAGE3,
        "t_stage4": DEFAULT_T_STAGE4,
        "tau_rerank": tau_rerank,
    }
    sources = {k: "default" for k in values}
    if stats is not None:
        wanted = {
            "t_stage2": ("normalized", "inter_nn", 95),
            "t_stage3": ("normalized_main", "inter_nn", 99),
            "t_stage4": ("full", "intra_full", 1),
        }
        for name, (view, attr, p) in wanted.items():
            data = getattr(stats.by_view.get(view, GroupStats()), attr)
            if data:
                values[name] = percentile(data, p)
                sources[name] = "calibrated"
    for name, value in (overrides or {}).items():
        if name not in values:
            raise InvalidInput(f"unknown threshold {name!r}")
        values[name] = float(value)
        sources[name] = "override"
    provenance = "calibrated" if "calibrated" in sources.values() else "default"
    return ThresholdProfile(**values, provenance=provenance, sources=sources)


def rand_index(set_a: Iterable[str], set_b: Iterable[str], universe: Iterable[str]) -> float:
    """Agreement of the member/non-member partitions that two sets induce on *universe*."""
    a, b, u = set(set_a), set(set_b), set(universe)
    if len(u) < 2:
        raise InvalidInput("rand index needs a universe of at least two items")
    if not (a | b) <= u:
        raise InvalidInput(f"items outside the universe: {sorted((a | b) - u)}")
    n11 = len(a & b)
    n10 = len(a - b)
    n01 = len(b - a)
    n00 = len(u) - len(a | b)
    same_both = sum(math.comb(k, 2) for k in (n11, n10, n01, n00))
    split_both = n11 * n00 + n10 * n01
    return (same_both + split_both) / math.comb(len(u), 2)


@dataclass
class OverlapReport:
    sets: dict[str, list[str]]
    rand: dict[str, float]
    unique_counts: dict[str, int]
    union_count: int

    @property
    def mean_rand(self) -> float | None:
        return sum(self.rand.values()) / len(self.rand) if self.rand else None


def overlap_report(sets: Mapping[str, Iterable[str]], universe: Iterable[str]) -> OverlapReport:
    u = set(universe)
    frozen = {k: sorted(set(v)) for k, v in sets.items()}
    rand = {}
    if len(u) >= 2:
        for x, y in itertools.combinations(sorted(frozen), 2):
            rand[f"{x}|{y}"] = rand_index(frozen[x], frozen[y], u)
    union = set().union(*map(set, frozen.values())) if frozen else set()
    return OverlapReport(frozen, rand, {k: len(v) for k, v in frozen.items()}, len(union))


def distribution_summary(values: Sequence[float]) -> dict[str, float | int]:
    if not values:
        return {"count": 0}
    out: dict[str, float | int] = {"count": len(values)}
    for p in REPORT_PERCENTILES:
        out[f"p{p:02d}"] = percentile(values, p)
    return out


def stats_summary(stats: SimilarityStats) -> dict:
    def block(g: GroupStats) -> dict:
        return {k: distribution_summary(getattr(g, k)) for k in ("intra_nn", "inter_nn", "intra_full", "inter_full")}

    return {"all": block(stats), "views": {name: block(g) for name, g in stats.by_view.items()}}
