"""Per-group reciprocity, term entropy and relative activity metrics."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .model import (CHANNELS, KINDS, Corpus, EdgePartition, GroupOrigin, InteractionGraph,
                    InteractionType, TermBag, TermChannel, partition_members)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Undefined:
    """A metric value that cannot be computed, with the reason why."""

    reason: str

    def __repr__(self) -> str:
        return f"Undefined({self.reason!r})"


Value = Union[float, Undefined]


def is_defined(x: object) -> bool:
    return not isinstance(x, Undefined)


# ---------------------------------------------------------------- reciprocity

def _reciprocity(rec: int, nrec: int, where: str) -> Value:
    if rec + nrec == 0:
        return Undefined(f"no {where} dyads")
    half = rec / 2
    return half / (half + nrec)


def intra_reciprocity(part: EdgePartition) -> Value:
    return _reciprocity(part.int_rec, part.int_nrec, "internal")


def inter_reciprocity(part: EdgePartition) -> Value:
    return _reciprocity(part.ext_rec, part.ext_nrec, "boundary")


def normalized_reciprocity(r_int: Value, corpus_mean: Value) -> Value:
    if not is_defined(r_int):
        return r_int
    if not is_defined(corpus_mean):
        return corpus_mean
    if corpus_mean == 0:
        return Undefined("corpus mean intra-reciprocity is zero")
    return r_int / corpus_mean


def relative_reciprocity(r_int: Value, r_ext: Value) -> Value:
    for x in (r_int, r_ext):
        if not is_defined(x):
            return x
    return (r_int + 1.0) / (r_ext + 1.0)


# ---------------------------------------------------------------- entropy

def entropy(bag: TermBag | None) -> Value:
    """Shannon entropy in bits of the bag's occurrence distribution."""
    if bag is None or bag.total == 0:
        return Undefined("no terms")
    counts = np.fromiter(bag.counts.values(), dtype=np.float64, count=len(bag.counts))
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0


class EntropyBaseline:
    """Mean entropy of groups binned by term-bag size |T|.

    Bin ``k`` holds sizes in ``[base**k, base**(k+1))``. Bins with fewer than
    ``min_groups`` members are merged upward into the nearest larger
    populated bin; a short last bin merges into its smaller neighbour.
    """

    def __init__(self, bags: Iterable[TermBag], base: float = 2.0, min_groups: int = 5):
        if base <= 1:
            raise ValueError("bin base must exceed 1")
        self.base = base
        self.min_groups = min_groups
        by_bin: dict[int, list[float]] = {}
        for bag in bags:
            h = entropy(bag)
            if is_defined(h):
                by_bin.setdefault(self.bin_of(bag.total), []).append(h)
        keys = sorted(by_bin)
        merged: list[tuple[list[int], list[float]]] = []
        pending_keys: list[int] = []
        pending: list[float] = []
        for k in keys:
            pending_keys.append(k)
            pending.extend(by_bin[k])
            if len(pending) >= min_groups:
                merged.append((pending_keys, pending))
                pending_keys, pending = [], []
        if pending:
            if merged:
                merged[-1][0].extend(pending_keys)
                merged[-1][1].extend(pending)
            else:
                merged.append((pending_keys, pending))
        self._mean: dict[int, float] = {}
        self._count: dict[int, int] = {}
        for ks, values in merged:
            m = math.fsum(values) / len(values)
            for k in ks:
                self._mean[k] = m
                self._count[k] = len(values)
        self._keys = sorted(self._mean)

    def bin_of(self, total: int) -> int:
        k = int(math.floor(math.log(total, self.base)))
        # guard against float rounding at exact powers
        if self.base ** (k + 1) <= total:
            k += 1
        elif self.base ** k > total:
            k -= 1
        return k

    def mean_for(self, total: int) -> Value:
        if not self._keys:
            return Undefined("empty entropy baseline")
        k = self.bin_of(total)
        if k not in self._mean:
            larger = [j for j in self._keys if j > k]
            k = larger[0] if larger else self._keys[-1]
        return self._mean[k]

    def table(self) -> list[dict]:
        return [{"bin": k, "lo": self.base ** k, "hi": self.base ** (k + 1),
                 "mean_entropy": self._mean[k], "groups": self._count[k]} for k in self._keys]


def normalized_entropy(bag: TermBag | None, baseline: EntropyBaseline) -> Value:
    h = entropy(bag)
    if not is_defined(h):
        return h
    m = baseline.mean_for(bag.total)
    if not is_defined(m):
        return m
    if m == 0:
        return Undefined("bin mean entropy is zero")
    return h / m


# ---------------------------------------------------------------- activity

def relative_activity_a(part: EdgePartition, e_total: int) -> Value:
    denom = part.d_in * part.d_out
    if denom == 0 or e_total == 0:
        return Undefined("no interaction volume")
    return part.int_arcs / (denom / e_total)


def relative_activity_b(part: EdgePartition, n_nodes: int) -> Value:
    s = part.size
    if s < 2:
        return Undefined("fewer than 2 members")
    if s >= n_nodes:
        return Undefined("group spans the whole network")
    if part.ext_arcs == 0:
        return Undefined("no boundary arcs")
    internal = part.int_arcs / (s * (s - 1))
    external = part.ext_arcs / (2 * (n_nodes - s) * s)
    return internal / external


# ---------------------------------------------------------------- records

@dataclass(frozen=True)
class KindMetrics:
    e_int: int
    r_int: Value
    r_ext: Value
    t: Value
    u: Value
    a: Value
    b: Value


@dataclass(frozen=True)
class ChannelMetrics:
    H: Value
    h: Value


KIND_FIELDS = ("E_int", "r_int", "r_ext", "t", "u", "a", "b")
CHANNEL_FIELDS = ("H", "h")
_KIND_ATTR = {"E_int": "e_int", "r_int": "r_int", "r_ext": "r_ext", "t": "t", "u": "u",
              "a": "a", "b": "b"}

CSV_COLUMNS = (("group_id", "origin", "s_g")
               + tuple(f"{k.value}_{f}" for k in KINDS for f in KIND_FIELDS)
               + tuple(f"{c.value}_{f}" for c in CHANNELS for f in CHANNEL_FIELDS))


@dataclass(frozen=True)
class GroupMetrics:
    group_id: str
    origin: GroupOrigin
    size: int
    kinds: Mapping[InteractionType, KindMetrics]
    channels: Mapping[TermChannel, ChannelMetrics]

    def get(self, name: str) -> Value:
        """Look up a column by its CSV name, e.g. ``comment_t`` or ``pool_h``."""
        if name == "s_g":
            return self.size
        prefix, _, fld = name.partition("_")
        if fld in _KIND_ATTR and prefix in InteractionType._value2member_map_:
            return getattr(self.kinds[InteractionType(prefix)], _KIND_ATTR[fld])
        if fld in CHANNEL_FIELDS and prefix in TermChannel._value2member_map_:
            return getattr(self.channels[TermChannel(prefix)], fld)
        raise KeyError(name)

    def row(self) -> dict[str, Value | str | int]:
        out: dict = {"group_id": self.group_id, "origin": self.origin.value}
        for col in CSV_COLUMNS[2:]:
            out[col] = self.get(col)
        return out


# ---------------------------------------------------------------- corpus pass

def _universe_key(origin: GroupOrigin, pooled: bool) -> str:
    return "all" if pooled else origin.value


def compute_all(corpus: Corpus, pooled: bool = False, reciprocity_universe: Iterable[str] | None = None,
                bin_base: float = 2.0, min_bin_groups: int = 5,
                threads: int = 1) -> list[GroupMetrics]:
    """One :class:`GroupMetrics` per group, ordered by group id.

    Corpus means for normalized reciprocity and the entropy baselines are
    computed per origin (declared/detected) unless ``pooled``. When
    ``reciprocity_universe`` is given, the reciprocity means use only those
    group ids (for example the labeling candidates).
    """
    groups = list(corpus.groups)
    if not groups:
        return []
    graph = corpus.graph
    parts = _partitions(graph, groups, threads)
    n = graph.n_nodes
    e_tot = {k: graph.n_arcs(k) for k in KINDS}

    raw = []
    for g, gp in zip(groups, parts):
        per_kind = {}
        for k in KINDS:
            p = gp[k]
            per_kind[k] = (intra_reciprocity(p), inter_reciprocity(p),
                           relative_activity_a(p, e_tot[k]), relative_activity_b(p, n))
        raw.append(per_kind)

    restrict = set(reciprocity_universe) if reciprocity_universe is not None else None
    sums: dict[tuple[str, InteractionType], list[float]] = {}
    for g, per_kind in zip(groups, raw):
        if restrict is not None and g.id not in restrict:
            continue
        for k in KINDS:
            r = per_kind[k][0]
            if is_defined(r):
                sums.setdefault((_universe_key(g.origin, pooled), k), []).append(r)
    means: dict[tuple[str, InteractionType], Value] = {
        key: math.fsum(v) / len(v) for key, v in sums.items()}

    baselines: dict[tuple[str, TermChannel], EntropyBaseline] = {}
    for c in CHANNELS:
        by_u: dict[str, list[TermBag]] = {}
        for g in groups:
            bag = corpus.bags.get((g.id, c))
            if bag is not None:
                by_u.setdefault(_universe_key(g.origin, pooled), []).append(bag)
        for u, bags in by_u.items():
            baselines[u, c] = EntropyBaseline(bags, bin_base, min_bin_groups)

    out = []
    for g, gp, per_kind in zip(groups, parts, raw):
        ukey = _universe_key(g.origin, pooled)
        kinds = {}
        for k in KINDS:
            r_int, r_ext, a, b = per_kind[k]
            mean = means.get((ukey, k), Undefined("no groups with defined intra-reciprocity"))
            kinds[k] = KindMetrics(gp[k].int_arcs, r_int, r_ext,
                                   normalized_reciprocity(r_int, mean),
                                   relative_reciprocity(r_int, r_ext), a, b)
        channels = {}
        for c in CHANNELS:
            bag = corpus.bags.get((g.id, c))
            base = baselines.get((ukey, c))
            if bag is None or base is None:
                channels[c] = ChannelMetrics(Undefined("no terms"), Undefined("no terms"))
            else:
                channels[c] = ChannelMetrics(entropy(bag), normalized_entropy(bag, base))
        out.append(GroupMetrics(g.id, g.origin, g.size, kinds, channels))
    return out


def _partitions(graph: InteractionGraph, groups, threads: int):
    def work(chunk):
        mask = np.zeros(graph.n_nodes, dtype=bool)
        res = []
        for g in chunk:
            idx, _ = graph.member_indices(g.members)
            mask[idx] = True
            res.append({k: EdgePartition(g.id, k, g.size,
                                         *partition_members(graph.arcs[k], idx, mask))
                        for k in KINDS})
            mask[idx] = False
        return res

    threads = max(1, threads)
    size = max(1, math.ceil(len(groups) / (threads * 4)))
    chunks = [groups[i:i + size] for i in range(0, len(groups), size)]
    if threads == 1:
        results = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, chunks))
    return [p for chunk in results for p in chunk]


def labeling_candidates(metrics: Iterable[GroupMetrics], min_members: int = 5,
                        min_comments: int = 100, min_activity: float = 100) -> set[str]:
    """Groups active enough to be worth labeling by hand.

    All thresholds are strict; an undefined comment activity excludes the group.
    """
    keep = set()
    for m in metrics:
        c = m.kinds[InteractionType.COMMENT]
        if not (is_defined(c.a) and is_defined(c.b)):
            continue
        if (m.size > min_members and c.e_int > min_comments
                and c.a > min_activity and c.b > min_activity):
            keep.add(m.group_id)
    return keep


# ---------------------------------------------------------------- CSV

def _fmt(v) -> str:
    if isinstance(v, Undefined):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def metrics_to_csv(metrics: Sequence[GroupMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in sorted(metrics, key=lambda m: m.group_id):
        row = m.row()
        w.writerow([row["group_id"], row["origin"]] + [_fmt(row[c]) for c in CSV_COLUMNS[2:]])
    return buf.getvalue()


def write_metrics_csv(metrics: Sequence[GroupMetrics], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_to_csv(metrics))


def read_metrics_csv(path) -> list[dict[str, str]]:
    """Rows of a metrics CSV as string dicts (empty string = undefined)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header")
        return list(reader)
