"""Data model and validated TSV ingestion.

Interactions are stored per kind as a directed-dyad index: every ordered
pair ``(u, v)`` with at least one arc gets one entry carrying its arc
multiplicity and a reciprocation flag (``v -> u`` exists for the same kind).
Dyads are kept sorted by source, with a second ordering by destination, so
the out- and in-neighbourhoods of any node set can be gathered with numpy
slicing.
"""

from __future__ import annotations

import enum
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Union

import numpy as np

log = logging.getLogger(__name__)

Source = Union[str, os.PathLike, Iterable[str]]


class InteractionType(str, enum.Enum):
    COMMENT = "comment"
    FAVORITE = "favorite"
    CONTACT = "contact"


class GroupOrigin(str, enum.Enum):
    DECLARED = "declared"
    DETECTED = "detected"


class Label(str, enum.Enum):
    SOCIAL = "social"
    TOPICAL = "topical"
    UNKNOWN = "unknown"


class TermChannel(str, enum.Enum):
    POOL = "pool"
    COMMENT = "comment"
    FAVORITE = "favorite"


KINDS = tuple(InteractionType)
CHANNELS = tuple(TermChannel)


class SchemaError(ValueError):
    """A row or file violates one of the input schemas."""

    def __init__(self, message: str, row: int | None = None, source: str | None = None):
        self.row = row
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if row is not None:
            where += f"row {row}: "
        elif where:
            where += " "
        super().__init__(where + message)


def _valid_token(tok: str) -> bool:
    return bool(tok) and tok != "-" and not any(c.isspace() for c in tok)


@dataclass(frozen=True)
class Interaction:
    src: str
    dst: str
    kind: InteractionType
    photo: str | None = None
    timestamp: int | None = None

    def __post_init__(self):
        if self.src == self.dst:
            raise SchemaError(f"self-interaction {self.src!r}")
        if self.kind is InteractionType.CONTACT and self.photo is not None:
            raise SchemaError("contact interactions carry no photo")


@dataclass(frozen=True)
class Group:
    id: str
    origin: GroupOrigin
    members: frozenset[str]
    label: Label | None = None

    def __post_init__(self):
        if not self.members:
            raise SchemaError(f"group {self.id!r} has no members")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class TermBag:
    group_id: str
    channel: TermChannel
    counts: Mapping[str, int]

    def __post_init__(self):
        for tag, c in self.counts.items():
            if c < 1:
                raise SchemaError(f"nonpositive count {c} for tag {tag!r} in group {self.group_id!r}")

    @property
    def total(self) -> int:
        """|T(g)|: total term occurrences."""
        return int(sum(self.counts.values()))

    @property
    def distinct(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class EdgePartition:
    """Dyad and arc counts of one group for one interaction kind.

    ``int_*``: both endpoints are members. ``ext_*``: exactly one endpoint is
    a member. ``*_rec`` and ``*_nrec`` count directed dyads; ``*_arcs`` count
    arcs (multi-edges included). ``d_in``/``d_out`` are the arc totals
    targeted at / originated by members.
    """

    group_id: str
    kind: InteractionType
    size: int
    int_rec: int = 0
    int_nrec: int = 0
    int_arcs: int = 0
    ext_rec: int = 0
    ext_nrec: int = 0
    ext_arcs: int = 0
    d_in: int = 0
    d_out: int = 0


class KindArcs:
    """Dyad index of one interaction kind over ``n`` nodes."""

    __slots__ = ("n", "src", "dst", "mult", "recip", "out_ptr", "in_order", "in_ptr",
                 "out_deg", "in_deg")

    def __init__(self, src: np.ndarray, dst: np.ndarray, mult: np.ndarray, n: int):
        # src/dst/mult describe unique dyads (any order)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        mult = np.asarray(mult, dtype=np.int64)
        order = np.lexsort((dst, src))
        self.n = n
        self.src = src[order]
        self.dst = dst[order]
        self.mult = mult[order]
        key = self.src * n + self.dst
        rkey = self.dst * n + self.src
        pos = np.searchsorted(key, rkey)
        pos[pos >= len(key)] = 0
        self.recip = (key[pos] == rkey) if len(key) else np.zeros(0, dtype=bool)
        nodes = np.arange(n + 1)
        self.out_ptr = np.searchsorted(self.src, nodes)
        self.in_order = np.argsort(self.dst, kind="stable")
        self.in_ptr = np.searchsorted(self.dst[self.in_order], nodes)
        self.out_deg = np.bincount(self.src, weights=self.mult, minlength=n).astype(np.int64)
        self.in_deg = np.bincount(self.dst, weights=self.mult, minlength=n).astype(np.int64)

    @classmethod
    def from_arcs(cls, src: np.ndarray, dst: np.ndarray, n: int) -> "KindArcs":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keys, mult = np.unique(src * n + dst, return_counts=True)
        return cls(keys // n, keys % n, mult, n)

    @property
    def n_arcs(self) -> int:
        return int(self.mult.sum())

    @property
    def n_dyads(self) -> int:
        return len(self.src)


@dataclass
class IngestReport:
    rows: int = 0
    self_loops: dict[InteractionType, int] = field(default_factory=lambda: {k: 0 for k in KINDS})
    duplicate_contacts: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def warnings(self) -> int:
        return sum(self.self_loops.values()) + self.duplicate_contacts + len(self.skipped)


class InteractionGraph:
    """Typed directed multigraph. Immutable after construction."""

    def __init__(self, users: Iterable[str], arcs: Mapping[InteractionType, KindArcs],
                 report: IngestReport | None = None):
        self.users: tuple[str, ...] = tuple(users)
        self.index: dict[str, int] = {u: i for i, u in enumerate(self.users)}
        self.arcs = {k: arcs[k] for k in KINDS}
        self.report = report or IngestReport()

    @classmethod
    def from_interactions(cls, interactions: Iterable[Interaction],
                          nodes: Iterable[str] = ()) -> "InteractionGraph":
        index: dict[str, int] = {}
        ends: dict[InteractionType, tuple[list[int], list[int]]] = {k: ([], []) for k in KINDS}
        for u in nodes:
            index.setdefault(u, len(index))
        for it in interactions:
            s = index.setdefault(it.src, len(index))
            d = index.setdefault(it.dst, len(index))
            ends[it.kind][0].append(s)
            ends[it.kind][1].append(d)
        return _assemble(index, ends, IngestReport())

    @property
    def n_nodes(self) -> int:
        return len(self.users)

    def n_arcs(self, kind: InteractionType) -> int:
        return self.arcs[kind].n_arcs

    def out_degree(self, kind: InteractionType) -> np.ndarray:
        return self.arcs[kind].out_deg

    def in_degree(self, kind: InteractionType) -> np.ndarray:
        return self.arcs[kind].in_deg

    def dyads(self, kind: InteractionType) -> dict[tuple[str, str], int]:
        ka = self.arcs[kind]
        u = self.users
        return {(u[s], u[d]): int(m) for s, d, m in zip(ka.src, ka.dst, ka.mult)}

    def with_nodes(self, extra: Iterable[str]) -> "InteractionGraph":
        """Copy with ``extra`` ids added as isolated nodes (existing ids ignored)."""
        new = sorted(set(extra) - set(self.index))
        if not new:
            return self
        users = self.users + tuple(new)
        n = len(users)
        arcs = {k: KindArcs(ka.src, ka.dst, ka.mult, n) for k, ka in self.arcs.items()}
        return InteractionGraph(users, arcs, self.report)

    def without_kind(self, kind: InteractionType) -> "InteractionGraph":
        arcs = dict(self.arcs)
        empty = np.zeros(0, dtype=np.int64)
        arcs[kind] = KindArcs(empty, empty, empty, self.n_nodes)
        return InteractionGraph(self.users, arcs, self.report)

    def member_indices(self, members: Iterable[str]) -> tuple[np.ndarray, list[str]]:
        idx, missing = [], []
        for m in members:
            i = self.index.get(m)
            if i is None:
                missing.append(m)
            else:
                idx.append(i)
        return np.array(sorted(idx), dtype=np.int64), missing

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InteractionGraph):
            return NotImplemented
        if self.users != other.users:
            return False
        for k in KINDS:
            a, b = self.arcs[k], other.arcs[k]
            for name in ("src", "dst", "mult", "recip", "out_deg", "in_deg"):
                if not np.array_equal(getattr(a, name), getattr(b, name)):
                    return False
        return True

    __hash__ = None  # type: ignore[assignment]


def _assemble(index: dict[str, int], ends, report: IngestReport) -> InteractionGraph:
    n = len(index)
    arcs = {}
    for k in KINDS:
        src = np.fromiter(ends[k][0], dtype=np.int64, count=len(ends[k][0]))
        dst = np.fromiter(ends[k][1], dtype=np.int64, count=len(ends[k][1]))
        ka = KindArcs.from_arcs(src, dst, n)
        if k is InteractionType.CONTACT and len(ka.mult) and ka.mult.max() > 1:
            report.duplicate_contacts += int((ka.mult - 1).sum())
            ka = KindArcs(ka.src, ka.dst, np.ones_like(ka.mult), n)
        arcs[k] = ka
    users = [None] * n
    for u, i in index.items():
        users[i] = u
    return InteractionGraph(users, arcs, report)


# ---------------------------------------------------------------- ingestion

def _rows(source: Source) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(row_number, fields)`` skipping blank and ``#`` lines."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from _rows(fh)
        return
    for lineno, line in enumerate(source, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line.split("\t")


def _name(source: Source) -> str | None:
    return str(source) if isinstance(source, (str, os.PathLike)) else None


def ingest_interactions(source: Source, strict: bool = True) -> InteractionGraph:
    """Read ``src dst kind photo timestamp`` rows into an :class:`InteractionGraph`.

    Self-interactions are dropped and tallied per kind; repeated contact rows
    collapse to one arc. A malformed row aborts in strict mode and is skipped
    (and recorded in ``graph.report.skipped``) otherwise. A contact row with a
    photo id is a schema error in both modes.
    """
    name = _name(source)
    report = IngestReport()
    index: dict[str, int] = {}
    ends: dict[InteractionType, tuple[list[int], list[int]]] = {k: ([], []) for k in KINDS}
    kinds = {k.value: k for k in KINDS}
    for lineno, f in _rows(source):
        report.rows += 1
        problem = None
        kind = kinds.get(f[2]) if len(f) == 5 else None
        if len(f) != 5:
            problem = f"expected 5 fields, got {len(f)}"
        elif not (_valid_token(f[0]) and _valid_token(f[1])):
            problem = "invalid user id"
        elif kind is None:
            problem = f"unknown interaction kind {f[2]!r}"
        elif f[3] != "-" and not _valid_token(f[3]):
            problem = "invalid photo id"
        elif f[4] != "-" and not f[4].lstrip("-").isdigit():
            problem = f"invalid timestamp {f[4]!r}"
        if problem is not None:
            if strict:
                raise SchemaError(problem, lineno, name)
            report.skipped.append((lineno, problem))
            continue
        if kind is InteractionType.CONTACT and f[3] != "-":
            raise SchemaError("contact row carries a photo id", lineno, name)
        if f[0] == f[1]:
            report.self_loops[kind] += 1
            continue
        ends[kind][0].append(index.setdefault(f[0], len(index)))
        ends[kind][1].append(index.setdefault(f[1], len(index)))
    graph = _assemble(index, ends, report)
    if report.warnings:
        log.warning("%s: %d self-loops dropped, %d duplicate contacts collapsed, %d rows skipped",
                    name or "<interactions>", sum(report.self_loops.values()),
                    report.duplicate_contacts, len(report.skipped))
    return graph


def ingest_groups(source: Source) -> dict[str, Group]:
    """Read ``group_id origin member_id`` rows. Returns groups keyed and sorted by id."""
    name = _name(source)
    origins = {o.value: o for o in GroupOrigin}
    members: dict[str, set[str]] = defaultdict(set)
    origin_of: dict[str, GroupOrigin] = {}
    for lineno, f in _rows(source):
        if len(f) != 3:
            raise SchemaError(f"expected 3 fields, got {len(f)}", lineno, name)
        gid, org, member = f
        if not _valid_token(gid):
            raise SchemaError(f"invalid group id {gid!r}", lineno, name)
        origin = origins.get(org)
        if origin is None:
            raise SchemaError(f"unknown origin {org!r}", lineno, name)
        if origin_of.setdefault(gid, origin) is not origin:
            raise SchemaError(f"group {gid!r} listed with two origins", lineno, name)
        if not _valid_token(member):
            raise SchemaError(f"invalid member id {member!r}", lineno, name)
        members[gid].add(member)
    return {gid: Group(gid, origin_of[gid], frozenset(members[gid])) for gid in sorted(members)}


def ingest_labels(source: Source, groups: Mapping[str, Group] | None = None) -> dict[str, Label]:
    name = _name(source)
    labels = {l.value: l for l in Label}
    out: dict[str, Label] = {}
    for lineno, f in _rows(source):
        if len(f) != 2:
            raise SchemaError(f"expected 2 fields, got {len(f)}", lineno, name)
        label = labels.get(f[1])
        if label is None:
            raise SchemaError(f"unknown label {f[1]!r}", lineno, name)
        if groups is not None and f[0] not in groups:
            raise SchemaError(f"label for unknown group {f[0]!r}", lineno, name)
        if out.setdefault(f[0], label) is not label:
            raise SchemaError(f"conflicting labels for group {f[0]!r}", lineno, name)
    return out


def ingest_terms(source: Source, groups: Mapping[str, Group]) -> dict[tuple[str, TermChannel], TermBag]:
    """Read ``group_id channel tag count`` rows into one bag per (group, channel).

    Repeated (group, channel, tag) rows accumulate.
    """
    name = _name(source)
    channels = {c.value: c for c in CHANNELS}
    acc: dict[tuple[str, TermChannel], dict[str, int]] = defaultdict(dict)
    for lineno, f in _rows(source):
        if len(f) != 4:
            raise SchemaError(f"expected 4 fields, got {len(f)}", lineno, name)
        gid, ch, tag, count = f
        group = groups.get(gid)
        if group is None:
            raise SchemaError(f"unknown group {gid!r}", lineno, name)
        channel = channels.get(ch)
        if channel is None:
            raise SchemaError(f"unknown channel {ch!r}", lineno, name)
        if channel is TermChannel.POOL and group.origin is not GroupOrigin.DECLARED:
            raise SchemaError(f"pool channel on detected group {gid!r}", lineno, name)
        if not _valid_token(tag):
            raise SchemaError(f"invalid tag {tag!r}", lineno, name)
        try:
            c = int(count)
        except ValueError:
            raise SchemaError(f"invalid count {count!r}", lineno, name) from None
        if c < 1:
            raise SchemaError(f"nonpositive count {c}", lineno, name)
        bag = acc[gid, channel]
        bag[tag] = bag.get(tag, 0) + c
    return {key: TermBag(key[0], key[1], dict(sorted(acc[key].items()))) for key in sorted(acc)}


# ---------------------------------------------------------------- partitions

def _gather(ptr: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Concatenate the index ranges ``ptr[v]:ptr[v+1]`` for every v in ``nodes``."""
    starts = ptr[nodes]
    lens = ptr[nodes + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens)
    return offsets + np.arange(total)


def partition_members(ka: KindArcs, idx: np.ndarray, mask: np.ndarray) -> tuple[int, ...]:
    """Raw partition counts for member indices ``idx``; ``mask[idx]`` must be True.

    Returns ``(int_rec, int_nrec, int_arcs, ext_rec, ext_nrec, ext_arcs, d_in, d_out)``.
    """
    out_d = _gather(ka.out_ptr, idx)
    inside = mask[ka.dst[out_d]]
    d_int = out_d[inside]
    d_bo = out_d[~inside]
    in_d = ka.in_order[_gather(ka.in_ptr, idx)]
    d_bi = in_d[~mask[ka.src[in_d]]]

    int_rec = int(np.count_nonzero(ka.recip[d_int]))
    ext_rec = int(np.count_nonzero(ka.recip[d_bo]) + np.count_nonzero(ka.recip[d_bi]))
    return (
        int_rec,
        len(d_int) - int_rec,
        int(ka.mult[d_int].sum()),
        ext_rec,
        len(d_bo) + len(d_bi) - ext_rec,
        int(ka.mult[d_bo].sum() + ka.mult[d_bi].sum()),
        int(ka.in_deg[idx].sum()),
        int(ka.out_deg[idx].sum()),
    )


def partition_edges(graph: InteractionGraph, group: Group, kind: InteractionType) -> EdgePartition:
    """Split the ``kind`` dyads touching ``group`` into internal and boundary counts.

    A dyad ``u -> v`` is reciprocated iff ``v -> u`` exists for the same kind,
    regardless of timestamps or multiplicities.
    """
    idx, missing = graph.member_indices(group.members)
    if missing:
        log.warning("group %s: %d members absent from graph, treated as isolated",
                    group.id, len(missing))
    mask = np.zeros(graph.n_nodes, dtype=bool)
    mask[idx] = True
    counts = partition_members(graph.arcs[kind], idx, mask)
    return EdgePartition(group.id, kind, group.size, *counts)


# ---------------------------------------------------------------- corpus

@dataclass(frozen=True)
class Corpus:
    """Graph, groups (sorted by id, labels attached) and term bags."""

    graph: InteractionGraph
    groups: tuple[Group, ...]
    bags: Mapping[tuple[str, TermChannel], TermBag] = field(default_factory=dict)

    @classmethod
    def build(cls, graph: InteractionGraph, groups: Mapping[str, Group] | Iterable[Group],
              bags: Mapping[tuple[str, TermChannel], TermBag] | None = None,
              labels: Mapping[str, Label] | None = None) -> "Corpus":
        gs = list(groups.values()) if isinstance(groups, Mapping) else list(groups)
        if labels:
            gs = [Group(g.id, g.origin, g.members, labels.get(g.id, g.label)) for g in gs]
        gs.sort(key=lambda g: g.id)
        members = set().union(*(g.members for g in gs)) if gs else set()
        return cls(graph.with_nodes(members), tuple(gs), dict(bags or {}))

    @classmethod
    def load(cls, interactions: Source, groups: Source | None = None, terms: Source | None = None,
             labels: Source | None = None, strict: bool = True) -> "Corpus":
        graph = ingest_interactions(interactions, strict=strict)
        gmap = ingest_groups(groups) if groups is not None else {}
        bags = ingest_terms(terms, gmap) if terms is not None else {}
        lab = ingest_labels(labels, gmap) if labels is not None else None
        return cls.build(graph, gmap, bags, lab)

    @classmethod
    def load_dir(cls, directory: str | os.PathLike, strict: bool = True) -> "Corpus":
        d = Path(directory)
        opt = lambda name: d / name if (d / name).exists() else None  # noqa: E731
        return cls.load(d / "interactions.tsv", opt("groups.tsv"), opt("terms.tsv"),
                        opt("labels.tsv"), strict=strict)

    def group(self, gid: str) -> Group:
        for g in self.groups:
            if g.id == gid:
                return g
        raise KeyError(gid)

    @property
    def labels(self) -> dict[str, Label]:
        return {g.id: g.label for g in self.groups if g.label is not None}
