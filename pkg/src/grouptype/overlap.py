"""Declared-vs-detected membership overlap and its shuffled null model."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import Group


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    if not a or not b:
        raise ValueError("jaccard similarity of an empty set")
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


@dataclass(frozen=True)
class BestMatch:
    detected: str
    declared: str
    similarity: float


@dataclass
class BestMatches:
    matches: list[BestMatch]
    n_detected: int

    @property
    def mean(self) -> float:
        """Mean best-match similarity over detected groups with a positive match."""
        if not self.matches:
            return 0.0
        return math.fsum(m.similarity for m in self.matches) / len(self.matches)

    @property
    def mean_with_zeros(self) -> float:
        if not self.n_detected:
            return 0.0
        return math.fsum(m.similarity for m in self.matches) / self.n_detected

    def by_detected(self) -> dict[str, BestMatch]:
        return {m.detected: m for m in self.matches}


def best_matches(detected: Sequence[Group], declared: Sequence[Group]) -> BestMatches:
    """For each detected group, the declared group of maximal Jaccard similarity.

    Ties go to the smallest declared id; detected groups sharing no member with
    any declared group get no entry.
    """
    index: dict[str, list[int]] = defaultdict(list)
    decl = sorted(declared, key=lambda g: g.id)
    for j, g in enumerate(decl):
        for m in g.members:
            index[m].append(j)
    out = []
    for g in sorted(detected, key=lambda g: g.id):
        shared = Counter(j for m in g.members for j in index.get(m, ()))
        best, best_sim = None, 0.0
        for j in sorted(shared):
            inter = shared[j]
            sim = inter / (g.size + decl[j].size - inter)
            if sim > best_sim:
                best, best_sim = j, sim
        if best is not None:
            out.append(BestMatch(g.id, decl[best].id, best_sim))
    return BestMatches(out, len(detected))


@dataclass
class Shuffled:
    groups: list[Group]
    collisions: int = 0
    substitutions: int = 0


def shuffle_members(groups: Sequence[Group], seed: int,
                    universe: Iterable[str] | None = None) -> Shuffled:
    """Globally permute membership slots across groups, keeping every group's size.

    A slot that would repeat a member already in its group is swapped with a
    later slot that does not (a collision); if no such slot is left, a user
    from ``universe`` (default: all slotted members) outside the group is drawn
    instead (a substitution).
    """
    groups = sorted(groups, key=lambda g: g.id)
    if not groups:
        return Shuffled([])
    slots = [m for g in groups for m in sorted(g.members)]
    universe = sorted(set(universe) if universe is not None else set(slots))
    if max(g.size for g in groups) > len(universe):
        raise ValueError("universe smaller than the largest group")
    rng = np.random.default_rng(seed)
    slots = [slots[i] for i in rng.permutation(len(slots))]
    out, collisions, substitutions = [], 0, 0
    pos = 0
    for g in groups:
        members: set[str] = set()
        for _ in range(g.size):
            m = slots[pos]
            if m in members:
                collisions += 1
                swap = next((q for q in range(pos + 1, len(slots)) if slots[q] not in members), None)
                if swap is not None:
                    slots[pos], slots[swap] = slots[swap], slots[pos]
                    m = slots[pos]
                else:
                    substitutions += 1
                    free = [u for u in universe if u not in members]
                    m = free[int(rng.integers(len(free)))]
            members.add(m)
            pos += 1
        out.append(Group(g.id, g.origin, frozenset(members), g.label))
    return Shuffled(out, collisions, substitutions)


def size_bin(size: int) -> int:
    """log2 size bin: bin k covers sizes [2**k, 2**(k+1))."""
    return int(size).bit_length() - 1


def bin_edges(bins: Iterable[int]) -> list[list[int]]:
    return [[2 ** k, 2 ** (k + 1)] for k in bins]


@dataclass
class SimilarityMap:
    """Mean best-match similarity on a (detected size bin x declared size bin) grid.

    Cells with no match hold ``None``.
    """

    detected_bins: list[int]
    declared_bins: list[int]
    mean: list[list[float | None]]
    count: list[list[int]]

    def cell(self, det_bin: int, decl_bin: int) -> float | None:
        try:
            return self.mean[self.detected_bins.index(det_bin)][self.declared_bins.index(decl_bin)]
        except ValueError:
            return None

    def subtract(self, other: "SimilarityMap") -> "SimilarityMap":
        """Cell-wise ``self - other`` over the union of bins; a cell empty in either is ``None``."""
        db = sorted(set(self.detected_bins) | set(other.detected_bins))
        cb = sorted(set(self.declared_bins) | set(other.declared_bins))
        mean, count = [], []
        for i in db:
            row, crow = [], []
            for j in cb:
                a, b = self.cell(i, j), other.cell(i, j)
                row.append(None if a is None or b is None else a - b)
                crow.append(0 if a is None or b is None else 1)
            mean.append(row)
            count.append(crow)
        return SimilarityMap(db, cb, mean, count)

    def to_dict(self) -> dict:
        return {"detected_bins": bin_edges(self.detected_bins),
                "declared_bins": bin_edges(self.declared_bins),
                "mean": self.mean, "count": self.count}


def similarity_map(matches: BestMatches, detected: Sequence[Group], declared: Sequence[Group],
                   bins: Sequence[int] | None = None) -> SimilarityMap:
    """Average positive best-match similarity per pair of log2 size bins.

    ``bins`` fixes the bin indices on both axes; by default every bin from 0 up
    to the largest group present is used.
    """
    dsize = {g.id: g.size for g in detected}
    csize = {g.id: g.size for g in declared}
    if bins is None:
        top = max([size_bin(s) for s in list(dsize.values()) + list(csize.values())] or [0])
        bins = list(range(top + 1))
    bins = list(bins)
    pos = {b: i for i, b in enumerate(bins)}
    sums = np.zeros((len(bins), len(bins)))
    count = np.zeros((len(bins), len(bins)), dtype=np.int64)
    for m in matches.matches:
        i, j = pos.get(size_bin(dsize[m.detected])), pos.get(size_bin(csize[m.declared]))
        if i is None or j is None:
            continue
        sums[i, j] += m.similarity
        count[i, j] += 1
    mean = [[float(sums[i, j] / count[i, j]) if count[i, j] else None for j in range(len(bins))]
            for i in range(len(bins))]
    return SimilarityMap(bins, list(bins), mean, count.tolist())


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Value with ``(100 - pct)%`` of the list at or above it (descending nearest rank)."""
    desc = sorted(values, reverse=True)
    rank = max(1, math.ceil((100.0 - pct) * len(desc) / 100.0))
    return desc[rank - 1]


def percentile_curves(matches: BestMatches, detected: Sequence[Group],
                      percentiles: Sequence[float] = (91, 99)) -> list[dict]:
    """Per detected-size bin, the requested percentiles of best-match similarity.

    Detected groups without a positive match count as similarity 0 here.
    """
    best = matches.by_detected()
    per_bin: dict[int, list[float]] = defaultdict(list)
    for g in detected:
        m = best.get(g.id)
        per_bin[size_bin(g.size)].append(m.similarity if m else 0.0)
    rows = []
    for k in sorted(per_bin):
        vals = per_bin[k]
        rows.append({"bin": k, "sizes": [2 ** k, 2 ** (k + 1)], "groups": len(vals),
                     "percentiles": {f"{p:g}": nearest_rank(vals, p) for p in percentiles}})
    return rows


@dataclass
class OverlapReport:
    seed: int
    real: BestMatches
    shuffled: BestMatches
    real_map: SimilarityMap
    shuffled_map: SimilarityMap
    real_percentiles: list[dict]
    shuffled_percentiles: list[dict]
    collisions: int
    substitutions: int
    percentiles: list[float] = field(default_factory=lambda: [91, 99])

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "mean_best_match": {"real": self.real.mean, "shuffled": self.shuffled.mean},
            "mean_best_match_with_zeros": {"real": self.real.mean_with_zeros,
                                           "shuffled": self.shuffled.mean_with_zeros},
            "matched_groups": {"real": len(self.real.matches), "shuffled": len(self.shuffled.matches),
                               "detected": self.real.n_detected},
            "similarity_map": {"real": self.real_map.to_dict(),
                               "shuffled": self.shuffled_map.to_dict(),
                               "difference": self.real_map.subtract(self.shuffled_map).to_dict()},
            "percentiles": {"requested": list(self.percentiles), "real": self.real_percentiles,
                            "shuffled": self.shuffled_percentiles},
            "shuffle": {"collisions": self.collisions, "substitutions": self.substitutions},
            "notes": {
                "maps": "cell means exclude detected groups without a positive match",
                "percentiles": "nearest rank on descending similarities; unmatched detected groups count as 0",
                "mean_best_match": "over detected groups with a positive match",
            },
        }


def overlap_analysis(detected: Sequence[Group], declared: Sequence[Group], seed: int,
                     percentiles: Sequence[float] = (91, 99)) -> OverlapReport:
    real = best_matches(detected, declared)
    sh = shuffle_members(detected, seed)
    null = best_matches(sh.groups, declared)
    top = max(size_bin(g.size) for g in list(detected) + list(declared))
    bins = list(range(top + 1))
    return OverlapReport(
        seed, real, null,
        similarity_map(real, detected, declared, bins),
        similarity_map(null, sh.groups, declared, bins),
        percentile_curves(real, detected, percentiles),
        percentile_curves(null, sh.groups, percentiles),
        sh.collisions, sh.substitutions, list(percentiles),
    )
