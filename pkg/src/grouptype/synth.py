"""Seeded synthetic corpora with planted social and topical groups, plus null models.

Social groups get dense, mostly reciprocated interactions and dispersed tags;
topical groups get star-like attention toward a few hub members (little
reciprocation) and tags concentrated on a few terms. Per-group parameters are
drawn around the type means so the two populations overlap, and an optional
share of "mixed" groups blends both recipes with a coin-flip label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import load_key_values, parse_key_values, to_key_values
from .model import (CHANNELS, Corpus, Group, GroupOrigin, InteractionGraph, InteractionType,
                    KindArcs, TermBag, TermChannel)


class InfeasibleConfig(ValueError):
    pass


@dataclass
class SynthConfig:
    """Generator parameters. Every field maps to one ``key = value`` config line."""

    seed: int
    n_users: int = 5000
    n_social: int = 250
    n_topical: int = 250
    mixed_fraction: float = 0.1
    unknown_fraction: float = 0.0
    social_size_mean: float = 35.0
    topical_size_mean: float = 172.0
    size_min: int = 2
    # internal dyads drawn per member, per kind
    comment_degree: float = 1.5
    favorite_degree: float = 0.8
    contact_degree: float = 1.0
    social_reciprocity: float = 0.6
    topical_reciprocity: float = 0.08
    contact_reciprocity: float = 0.4
    reciprocity_spread: float = 6.0
    hub_fraction: float = 0.05
    # mean arcs per comment dyad in topical groups; social groups get comment_volume_ratio times more
    comments_per_dyad: float = 1.5
    comment_volume_ratio: float = 2.0
    favorites_per_dyad: float = 1.2
    background_degree: float = 1.0
    background_reciprocity: float = 0.2
    vocabulary: int = 2000
    social_tag_concentration: float = 0.6
    topical_tag_concentration: float = 1.2
    tag_spread: float = 0.25
    tags_per_interaction: int = 2
    pool_tags_per_member: int = 3
    n_detected: int = 200
    detected_size_mean: float = 7.0
    detected_overlap: float = 0.5
    detected_noise: float = 0.2

    def validate(self) -> None:
        probs = ("mixed_fraction", "unknown_fraction", "social_reciprocity", "topical_reciprocity",
                 "contact_reciprocity", "background_reciprocity", "hub_fraction",
                 "detected_overlap", "detected_noise")
        for name in probs:
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InfeasibleConfig(f"{name}={v} is not a probability")
        if self.size_min < 2:
            raise InfeasibleConfig("size_min must be at least 2")
        if self.n_users < 20:
            raise InfeasibleConfig("n_users must be at least 20")
        if min(self.n_social, self.n_topical, self.n_detected) < 0:
            raise InfeasibleConfig("group counts must be nonnegative")
        for name in ("comments_per_dyad", "favorites_per_dyad"):
            if getattr(self, name) < 1:
                raise InfeasibleConfig(f"{name} must be at least 1")
        if self.comment_volume_ratio <= 0 or self.vocabulary < 1:
            raise InfeasibleConfig("comment_volume_ratio and vocabulary must be positive")
        for name in ("comment_degree", "favorite_degree", "contact_degree", "background_degree",
                     "social_tag_concentration", "topical_tag_concentration", "tag_spread",
                     "reciprocity_spread"):
            if getattr(self, name) < 0:
                raise InfeasibleConfig(f"{name} must be nonnegative")
        smax = self.size_max
        for name in ("social_size_mean", "topical_size_mean", "detected_size_mean"):
            m = getattr(self, name)
            if not self.size_min < m < smax:
                raise InfeasibleConfig(f"{name}={m} outside ({self.size_min}, {smax})")
        for rho in (self.social_reciprocity, self.topical_reciprocity):
            # per-pair edge probability after reciprocation must stay below 1 at mean size
            if self.comment_degree * (1 + rho) >= self.social_size_mean - 1:
                raise InfeasibleConfig("reciprocity target unreachable at the requested density")

    @property
    def size_max(self) -> int:
        return max(self.size_min + 1, self.n_users // 10)

    def to_text(self) -> str:
        return to_key_values(self)


def parse_config(text: str, **overrides) -> SynthConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) into a :class:`SynthConfig`."""
    return parse_key_values(text, SynthConfig, **overrides)


def load_config(path, **overrides) -> SynthConfig:
    return load_key_values(path, SynthConfig, **overrides)


# ---------------------------------------------------------------- sizes

def _power_law_probs(lo: int, hi: int, alpha: float) -> np.ndarray:
    s = np.arange(lo, hi + 1, dtype=np.float64)
    w = s ** -alpha
    return w / w.sum()


def power_law_exponent(mean: float, lo: int, hi: int) -> float:
    """Exponent of the discrete power law on [lo, hi] with the given mean (bisection)."""
    s = np.arange(lo, hi + 1, dtype=np.float64)

    def m(a):
        return float((_power_law_probs(lo, hi, a) * s).sum())

    a_lo, a_hi = -2.0, 6.0
    if not m(a_hi) <= mean <= m(a_lo):
        raise InfeasibleConfig(f"mean size {mean} unreachable on [{lo}, {hi}]")
    for _ in range(100):
        mid = (a_lo + a_hi) / 2
        if m(mid) > mean:
            a_lo = mid
        else:
            a_hi = mid
    return (a_lo + a_hi) / 2


def sample_sizes(rng: np.random.Generator, n: int, mean: float, lo: int, hi: int) -> np.ndarray:
    p = _power_law_probs(lo, hi, power_law_exponent(mean, lo, hi))
    return lo + rng.choice(len(p), size=n, p=p)


# ---------------------------------------------------------------- topology

def _pairs(rng, s: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Up to ``m`` distinct ordered pairs of distinct positions in ``range(s)``."""
    a = rng.integers(0, s, m)
    b = rng.integers(0, s - 1, m)
    b = b + (b >= a)
    key = np.unique(a * s + b)
    return key // s, key % s


def _reciprocate(rng, a, b, rho):
    back = rng.random(len(a)) < rho
    return np.r_[a, b[back]], np.r_[b, a[back]]


def _social_dyads(rng, s, degree, rho):
    m = rng.binomial(s * (s - 1), min(1.0, degree / (s - 1)))
    a, b = _pairs(rng, s, m)
    return _reciprocate(rng, a, b, rho)


def _topical_dyads(rng, s, degree, rho, hub_fraction):
    hubs = max(1, int(round(s * hub_fraction)))
    m = rng.binomial(s * (s - 1), min(1.0, degree / (s - 1)))
    a = rng.integers(0, s, m)
    b = rng.integers(0, hubs, m)
    keep = a != b
    a, b = a[keep], b[keep]
    key = np.unique(a * s + b)
    return _reciprocate(rng, key // s, key % s, rho)


def _multiplicity(rng, n, mean):
    return 1 + rng.poisson(max(0.0, mean - 1.0), n)


def _beta(rng, mean, spread):
    if spread <= 0 or mean in (0.0, 1.0):
        return mean
    return float(rng.beta(mean * spread, (1 - mean) * spread))


# ---------------------------------------------------------------- tags

def _tag_counts(rng, n_terms: int, vocabulary: int, concentration: float) -> dict[int, int]:
    if n_terms <= 0:
        return {}
    p = np.arange(1, vocabulary + 1, dtype=np.float64) ** -concentration
    p /= p.sum()
    ranks = rng.permutation(vocabulary)
    counts = rng.multinomial(n_terms, p)
    nz = np.nonzero(counts)[0]
    return {int(ranks[i]): int(counts[i]) for i in nz}


# ---------------------------------------------------------------- generation

@dataclass
class SynthCorpus:
    config: SynthConfig
    interactions: list[str]
    groups: list[str]
    terms: list[str]
    labels: list[str]

    FILES = ("interactions.tsv", "groups.tsv", "terms.tsv", "labels.tsv")

    def write(self, directory) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, lines in zip(self.FILES, (self.interactions, self.groups, self.terms, self.labels)):
            p = d / name
            with open(p, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("".join(line + "\n" for line in lines))
            paths.append(p)
        return paths

    def to_corpus(self, strict: bool = True) -> Corpus:
        return Corpus.load(self.interactions, self.groups, self.terms, self.labels, strict=strict)


def generate(config: SynthConfig) -> SynthCorpus:
    """Build a labeled synthetic corpus. Same config (seed included) gives identical output."""
    config.validate()
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_users
    lo, hi = cfg.size_min, cfg.size_max
    user = [f"u{i}" for i in range(n)]

    kinds = (InteractionType.COMMENT, InteractionType.FAVORITE, InteractionType.CONTACT)
    ends = {k: ([], []) for k in kinds}

    def emit(kind, src, dst, mult=None):
        if mult is not None:
            src, dst = np.repeat(src, mult), np.repeat(dst, mult)
        ends[kind][0].append(src)
        ends[kind][1].append(dst)

    # planted declared groups
    types = ["social"] * cfg.n_social + ["topical"] * cfg.n_topical
    order = rng.permutation(len(types))
    types = [types[i] for i in order]
    sizes = {
        "social": iter(sample_sizes(rng, cfg.n_social, cfg.social_size_mean, lo, hi)),
        "topical": iter(sample_sizes(rng, cfg.n_topical, cfg.topical_size_mean, lo, hi)),
    }
    group_lines, label_lines, term_lines = [], [], []
    declared_members = []
    width = max(4, len(str(len(types))))
    for j, kind_of in enumerate(types):
        gid = f"g{j:0{width}d}"
        s = int(next(sizes[kind_of]))
        members = np.sort(rng.choice(n, s, replace=False))
        declared_members.append(members)
        # blend: 1 = fully social recipe, 0 = fully topical
        if rng.random() < cfg.mixed_fraction:
            blend = float(rng.uniform(0.3, 0.7))
            label = "social" if rng.random() < blend else "topical"
        else:
            blend = 1.0 if kind_of == "social" else 0.0
            label = kind_of
        if rng.random() < cfg.unknown_fraction:
            label = "unknown"
        social_topology = rng.random() < blend
        rho = _beta(rng, blend * cfg.social_reciprocity + (1 - blend) * cfg.topical_reciprocity,
                    cfg.reciprocity_spread)
        volume = cfg.comments_per_dyad * (1 + blend * (cfg.comment_volume_ratio - 1))
        conc = (blend * cfg.social_tag_concentration + (1 - blend) * cfg.topical_tag_concentration)
        conc *= float(np.exp(rng.normal(0, cfg.tag_spread)))

        internal = {}
        for kind, degree, per_dyad in ((InteractionType.COMMENT, cfg.comment_degree, volume),
                                       (InteractionType.FAVORITE, cfg.favorite_degree,
                                        cfg.favorites_per_dyad)):
            if social_topology:
                a, b = _social_dyads(rng, s, degree, rho)
            else:
                a, b = _topical_dyads(rng, s, degree, rho, cfg.hub_fraction)
            mult = _multiplicity(rng, len(a), per_dyad)
            emit(kind, members[a], members[b], mult)
            internal[kind] = int(mult.sum())
        a, b = _social_dyads(rng, s, cfg.contact_degree, _beta(rng, cfg.contact_reciprocity,
                                                                 cfg.reciprocity_spread))
        emit(InteractionType.CONTACT, members[a], members[b])

        group_lines += [f"{gid}\tdeclared\t{user[m]}" for m in members]
        label_lines.append(f"{gid}\t{label}")
        channel_terms = {
            TermChannel.POOL: s * cfg.pool_tags_per_member,
            TermChannel.COMMENT: internal[InteractionType.COMMENT] * cfg.tags_per_interaction,
            TermChannel.FAVORITE: internal[InteractionType.FAVORITE] * cfg.tags_per_interaction,
        }
        for ch in CHANNELS:
            for tag, c in sorted(_tag_counts(rng, channel_terms[ch], cfg.vocabulary, conc).items()):
                term_lines.append(f"{gid}\t{ch.value}\tt{tag}\t{c}")

    # detected groups: noisy copies of declared groups or random sets
    if cfg.n_detected:
        dsizes = sample_sizes(rng, cfg.n_detected, cfg.detected_size_mean, lo, hi)
        dwidth = max(4, len(str(cfg.n_detected)))
        mid_conc = (cfg.social_tag_concentration + cfg.topical_tag_concentration) / 2
        decl_sizes = np.array([len(m) for m in declared_members])
        for j, s in enumerate(dsizes):
            s = int(s)
            if declared_members and rng.random() < cfg.detected_overlap:
                # copy part of a declared group at least as large, else the largest one
                fits = np.nonzero(decl_sizes >= s)[0]
                j_src = int(fits[rng.integers(len(fits))]) if len(fits) else int(decl_sizes.argmax())
                src = declared_members[j_src]
                core = rng.choice(src, min(s, len(src)), replace=False)
                noisy = rng.random(len(core)) < cfg.detected_noise
                core[noisy] = rng.integers(0, n, int(noisy.sum()))
                members = np.unique(core)
                while len(members) < s:
                    members = np.union1d(members, rng.integers(0, n, s - len(members)))
            else:
                members = np.sort(rng.choice(n, s, replace=False))
            gid = f"d{j:0{dwidth}d}"
            group_lines += [f"{gid}\tdetected\t{user[m]}" for m in members]
            for ch in (TermChannel.COMMENT, TermChannel.FAVORITE):
                n_terms = len(members) * cfg.tags_per_interaction
                for tag, c in sorted(_tag_counts(rng, n_terms, cfg.vocabulary, mid_conc).items()):
                    term_lines.append(f"{gid}\t{ch.value}\tt{tag}\t{c}")

    # background interactions over the whole user base
    for kind in kinds:
        m = int(round(cfg.background_degree * n))
        a = rng.integers(0, n, m)
        b = rng.integers(0, n - 1, m)
        b = b + (b >= a)
        a, b = _reciprocate(rng, a, b, cfg.background_reciprocity)
        emit(kind, a, b)

    lines = []
    for kind in kinds:
        src = np.concatenate(ends[kind][0]) if ends[kind][0] else np.zeros(0, np.int64)
        dst = np.concatenate(ends[kind][1]) if ends[kind][1] else np.zeros(0, np.int64)
        if kind is InteractionType.CONTACT:
            key = np.unique(src * n + dst)
            src, dst = key // n, key % n
        tail = f"\t{kind.value}\t-\t-"
        lines += [f"{user[s]}\t{user[d]}{tail}" for s, d in zip(src.tolist(), dst.tolist())]
    return SynthCorpus(cfg, lines, group_lines, term_lines, label_lines)


# ---------------------------------------------------------------- null models

def shuffle_terms(corpus: Corpus, seed: int) -> Corpus:
    """Permute tag occurrences across groups, per channel, keeping every bag's |T|.

    The global tag multiset of each channel is unchanged.
    """
    rng = np.random.default_rng(seed)
    new_bags: dict[tuple[str, TermChannel], TermBag] = {}
    for ch in CHANNELS:
        keys = sorted(k for k in corpus.bags if k[1] is ch)
        if not keys:
            continue
        vocab = sorted({t for k in keys for t in corpus.bags[k].counts})
        pos = {t: i for i, t in enumerate(vocab)}
        tag_idx, totals = [], []
        for k in keys:
            counts = corpus.bags[k].counts
            tag_idx.append(np.repeat([pos[t] for t in counts], list(counts.values())))
            totals.append(corpus.bags[k].total)
        pool = np.concatenate(tag_idx)[rng.permutation(sum(totals))]
        start = 0
        for k, size in zip(keys, totals):
            ids, cnt = np.unique(pool[start:start + size], return_counts=True)
            start += size
            new_bags[k] = TermBag(k[0], ch, {vocab[i]: int(c) for i, c in zip(ids, cnt)})
    return Corpus(corpus.graph, corpus.groups, new_bags)


def random_groups(graph: InteractionGraph, sizes: Sequence[int], seed: int,
                  origin: GroupOrigin = GroupOrigin.DETECTED) -> list[Group]:
    """Uniformly sampled member sets of the given sizes."""
    n = graph.n_nodes
    if any(s > n for s in sizes):
        raise ValueError("group size exceeds the number of nodes")
    rng = np.random.default_rng(seed)
    width = max(4, len(str(len(sizes))))
    return [Group(f"r{i:0{width}d}", origin,
                  frozenset(graph.users[j] for j in rng.choice(n, int(s), replace=False)))
            for i, s in enumerate(sizes)]


def configuration_graph(n_nodes: int, mean_degree: float, seed: int, exponent: float = 2.5,
                        kind: InteractionType = InteractionType.COMMENT,
                        structural_cutoff: bool = True) -> InteractionGraph:
    """Directed multigraph with heavy-tailed in/out activity, arcs paired at random.

    Sources and targets are drawn independently in proportion to per-node
    Pareto weights, which pairs out-stubs with in-stubs uniformly; self-loops
    are dropped. With ``structural_cutoff`` no node's expected degree exceeds
    sqrt(arcs), the usual bound under which the random pairing stays
    uncorrelated.
    """
    rng = np.random.default_rng(seed)
    m = int(round(mean_degree * n_nodes))
    w_out = rng.pareto(exponent - 1, n_nodes) + 1
    w_in = rng.pareto(exponent - 1, n_nodes) + 1
    if structural_cutoff:
        for w in (w_out, w_in):
            # fixed point: clipping lowers the total, which raises the cap
            for _ in range(50):
                cap = math.sqrt(m) * w.sum() / m
                if w.max() <= cap * (1 + 1e-12):
                    break
                np.minimum(w, cap, out=w)
    src = rng.choice(n_nodes, m, p=w_out / w_out.sum())
    dst = rng.choice(n_nodes, m, p=w_in / w_in.sum())
    keep = src != dst
    empty = np.zeros(0, dtype=np.int64)
    arcs = {k: KindArcs(empty, empty, empty, n_nodes) for k in InteractionType}
    arcs[kind] = KindArcs.from_arcs(src[keep], dst[keep], n_nodes)
    return InteractionGraph([f"n{i}" for i in range(n_nodes)], arcs)
