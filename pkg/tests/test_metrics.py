import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from grouptype.metrics import (CSV_COLUMNS, ChannelMetrics, EntropyBaseline, GroupMetrics,
                               KindMetrics, Undefined, compute_all, entropy, inter_reciprocity,
                               intra_reciprocity, is_defined, labeling_candidates,
                               metrics_to_csv, normalized_entropy, normalized_reciprocity,
                               relative_activity_a, relative_activity_b, relative_reciprocity)
from grouptype.model import (Corpus, EdgePartition, Group, GroupOrigin, InteractionType,
                             TermBag, TermChannel, ingest_interactions, partition_edges)

import oracle

C = InteractionType.COMMENT


def part(**kw):
    kw.setdefault("size", 3)
    return EdgePartition("g", C, **kw)


def bag(counts, gid="g", channel=TermChannel.COMMENT):
    return TermBag(gid, channel, counts)


def corpus_from(nodes, arcs, groups, bags):
    inter, grp, terms = oracle.corpus_lines(nodes, arcs, groups, bags)
    return Corpus.load(inter, grp, terms)


def assert_matches_reference(metrics, ref, rel=1e-12):
    assert [m.group_id for m in metrics] == sorted(ref)
    for m in metrics:
        for col, want in ref[m.group_id].items():
            got = m.get(col)
            if want is None:
                assert not is_defined(got), (m.group_id, col, got)
            else:
                assert is_defined(got), (m.group_id, col, got)
                assert got == pytest.approx(want, rel=rel, abs=1e-300), (m.group_id, col)


# ---------------------------------------------------------------- reciprocity

@pytest.mark.parametrize("rec,nrec,want", [(6, 0, 1.0), (0, 4, 0.0), (4, 2, 0.5)])
def test_intra_reciprocity(rec, nrec, want):
    assert intra_reciprocity(part(int_rec=rec, int_nrec=nrec)) == want


def test_intra_reciprocity_by_dyad_enumeration():
    # a<->b, c<->d reciprocated; a->c, b->d one-way: E_rec=4, E_nrec=2
    g = ingest_interactions([f"{u}\t{v}\tcomment\t-\t-" for u, v in
                             ["ab", "ba", "cd", "dc", "ac", "bd"]])
    p = partition_edges(g, Group("g", GroupOrigin.DECLARED, frozenset("abcd")), C)
    assert (p.int_rec, p.int_nrec) == (4, 2)
    assert intra_reciprocity(p) == 0.5


def test_intra_reciprocity_undefined_without_dyads():
    assert isinstance(intra_reciprocity(part()), Undefined)


def test_inter_reciprocity():
    assert inter_reciprocity(part(ext_rec=4, ext_nrec=0)) == 1.0
    assert isinstance(inter_reciprocity(part(int_rec=2)), Undefined)


def test_inter_reciprocity_eight_node_fixture():
    from test_model import EIGHT
    g = ingest_interactions([f"{u}\t{v}\tcomment\t-\t-" for u, v in EIGHT])
    members = set("abcd")
    p = partition_edges(g, Group("g", GroupOrigin.DECLARED, frozenset(members)), C)
    ref = oracle.partition(list("abcdefgh"), [(u, v, "comment") for u, v in EIGHT], members, "comment")
    assert inter_reciprocity(p) == oracle.ratio(ref["ext_rec"], ref["ext_nrec"]) == 0.5


def test_normalized_reciprocity():
    assert normalized_reciprocity(0.0, 0.4) == 0.0
    assert normalized_reciprocity(0.3, 0.3) == 1.0
    assert isinstance(normalized_reciprocity(0.3, 0.0), Undefined)
    u = Undefined("no internal dyads")
    assert normalized_reciprocity(u, 0.5) is u


def test_normalized_reciprocity_five_groups():
    rs = [0.1, 0.2, 0.3, 0.4, 0.5]
    mean = 0.3  # (0.1+0.2+0.3+0.4+0.5)/5
    assert [normalized_reciprocity(r, mean) for r in rs] == pytest.approx(
        [1 / 3, 2 / 3, 1.0, 4 / 3, 5 / 3], rel=1e-15)


def test_relative_reciprocity():
    assert relative_reciprocity(0.3, 0.3) == 1.0
    assert relative_reciprocity(1.0, 0.0) == 2.0
    assert relative_reciprocity(0.5, 0.25) == pytest.approx(1.2, rel=1e-15)
    assert isinstance(relative_reciprocity(0.5, Undefined("x")), Undefined)


# ---------------------------------------------------------------- entropy

def test_entropy_examples():
    assert entropy(bag({f"t{i}": 1 for i in range(8)})) == 3.0
    assert entropy(bag({"x": 17})) == 0.0
    assert entropy(bag({"a": 2, "b": 1, "c": 1})) == 1.5
    assert isinstance(entropy(None), Undefined)
    assert isinstance(entropy(bag({})), Undefined)


@settings(max_examples=100)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=30))
def test_entropy_bounds_and_scale_invariance(counts):
    b = bag({f"t{i}": c for i, c in enumerate(counts)})
    h = entropy(b)
    bound = math.log2(len(counts))
    assert 0 <= h <= bound + 1e-12
    if len(set(counts)) == 1:
        assert h == pytest.approx(bound, abs=1e-12)
    elif len(counts) > 1:
        assert h < bound
    doubled = bag({f"t{i}": 2 * c for i, c in enumerate(counts)})
    assert entropy(doubled) == pytest.approx(h, abs=1e-12)


def test_normalized_entropy_self_normalization():
    bags = [bag({"a": 1, "b": 1}, gid=f"g{i}") for i in range(6)]
    base = EntropyBaseline(bags)
    assert all(normalized_entropy(b, base) == 1.0 for b in bags)


def test_normalized_entropy_zero_entropy_group():
    bags = [bag({"a": 1, "b": 1}, gid=f"g{i}") for i in range(5)] + [bag({"z": 2}, gid="flat")]
    base = EntropyBaseline(bags)
    assert normalized_entropy(bags[-1], base) == 0.0


def test_normalized_entropy_zero_bin_mean():
    bags = [bag({"z": 3}, gid=f"g{i}") for i in range(5)]
    assert isinstance(normalized_entropy(bags[0], EntropyBaseline(bags)), Undefined)


def test_baseline_bins_merge_upward():
    # bag sizes 1 (x2), 2 (x2), 4 (x6)
    bags = ([bag({"a": 1}, gid=f"s{i}") for i in range(2)]
            + [bag({"a": 1, "b": 1}, gid=f"m{i}") for i in range(2)]
            + [bag({"a": 2, "b": 2}, gid=f"l{i}") for i in range(6)])
    base = EntropyBaseline(bags)
    rows = base.table()
    assert [r["groups"] for r in rows] == [10, 10, 10]
    # 2+2 < 5, so the merge continues into the 4..7 bin: all ten groups share one mean
    assert base.mean_for(1) == base.mean_for(5) == pytest.approx((0 * 2 + 1 * 2 + 1 * 6) / 10)


def test_baseline_bin_boundaries():
    base = EntropyBaseline([])
    assert [base.bin_of(t) for t in (1, 2, 3, 4, 7, 8, 1023, 1024)] == [0, 1, 1, 2, 2, 3, 9, 10]


# ---------------------------------------------------------------- activity

def test_activity_a_hand_fixture():
    assert relative_activity_a(part(int_arcs=10, d_in=20, d_out=30), 120) == 2.0


def test_activity_a_undefined():
    assert isinstance(relative_activity_a(part(d_in=0, d_out=5), 10), Undefined)


def test_activity_b_hand_fixture():
    assert relative_activity_b(part(int_arcs=6, size=3, ext_arcs=4), 13) == pytest.approx(15.0, rel=1e-15)


def test_activity_b_equal_density_is_one():
    # internal density 6/(3*2) = 1; external 60/(2*10*3) = 1
    assert relative_activity_b(part(int_arcs=6, size=3, ext_arcs=60), 13) == 1.0


@pytest.mark.parametrize("kw,n", [(dict(size=1, ext_arcs=3), 10), (dict(size=3, ext_arcs=0), 10),
                                  (dict(size=10, ext_arcs=3), 10)])
def test_activity_b_undefined(kw, n):
    assert isinstance(relative_activity_b(part(int_arcs=2, **kw), n), Undefined)


def test_activity_b_linear_in_network_size():
    # isolated 4-clique (12 arcs) with one outgoing arc: b = (12/12) / (1/(2(N-4)4)) = 8(N-4)
    vals = []
    for n in (10, 20, 40, 80):
        lines = [f"{u}\t{v}\tcomment\t-\t-" for u in "abcd" for v in "abcd" if u != v]
        lines.append("a\tx0\tcomment\t-\t-")
        g = ingest_interactions(lines).with_nodes(f"x{i}" for i in range(n - 4))
        assert g.n_nodes == n
        p = partition_edges(g, Group("k", GroupOrigin.DECLARED, frozenset("abcd")), C)
        vals.append(relative_activity_b(p, n))
    assert vals == pytest.approx([8.0 * (n - 4) for n in (10, 20, 40, 80)], rel=1e-14)


def test_activity_a_whole_network_is_one():
    rng = random.Random(7)
    nodes, arcs, _, _ = oracle.random_corpus(rng)
    g = ingest_interactions([f"{u}\t{v}\t{k}\t-\t-" for u, v, k in arcs])
    everyone = Group("all", GroupOrigin.DETECTED, frozenset(g.users))
    for k in InteractionType:
        if g.n_arcs(k):
            assert relative_activity_a(partition_edges(g, everyone, k), g.n_arcs(k)) == 1.0


# ---------------------------------------------------------------- candidates

def fake_metrics(gid, size, e_int, a, b):
    k = KindMetrics(e_int, 0.5, 0.5, 1.0, 1.0, a, b)
    ch = ChannelMetrics(1.0, 1.0)
    return GroupMetrics(gid, GroupOrigin.DECLARED, size,
                        {kind: k for kind in InteractionType}, {c: ch for c in TermChannel})


def test_labeling_candidates_simple():
    assert labeling_candidates([fake_metrics("g", 4, 500, 1e3, 1e3)]) == set()
    assert labeling_candidates([fake_metrics("g", 6, 101, 101, 101)]) == {"g"}
    assert labeling_candidates([fake_metrics("g", 60, 500, Undefined("x"), 1e3)]) == set()


TWENTY = [  # id, s_g, E_int, a, b
    ("g00", 6, 101, 101.0, 101.0), ("g01", 5, 900, 1e4, 1e4), ("g02", 40, 100, 1e4, 1e4),
    ("g03", 40, 900, 100.0, 1e4), ("g04", 40, 900, 1e4, 100.0), ("g05", 12, 250, 300.0, 120.0),
    ("g06", 3, 20, 1.0, 1.0), ("g07", 80, 5000, 150.0, 2e3), ("g08", 7, 99, 500.0, 500.0),
    ("g09", 6, 101, 99.9, 1e3), ("g10", 200, 1e4, 1.5e3, 1.5e3), ("g11", 9, 300, 1e3, 50.0),
    ("g12", 4, 1e3, 1e3, 1e3), ("g13", 18, 140, 180.0, 100.5), ("g14", 25, 101, 100.01, 3e3),
    ("g15", 30, 60, 1e3, 1e3), ("g16", 8, 800, 10.0, 1e3), ("g17", 11, 400, 700.0, 900.0),
    ("g18", 2, 500, 1e3, 1e3), ("g19", 50, 1e3, 1e3, 99.0),
]


def test_labeling_candidates_twenty_groups():
    ms = [fake_metrics(*row) for row in TWENTY]
    # hand filter: size > 5, E_int > 100, a > 100, b > 100
    assert labeling_candidates(ms) == {"g00", "g05", "g07", "g10", "g13", "g14", "g17"}


# ---------------------------------------------------------------- compute_all

def test_compute_all_empty():
    assert compute_all(Corpus.load([], [], [])) == []
    assert metrics_to_csv([]) == ",".join(CSV_COLUMNS) + "\n"


def test_compute_all_single_group_self_normalizes():
    nodes, arcs, _, _ = oracle.random_corpus(random.Random(5))
    groups = {"g": ("declared", set(nodes[: max(2, len(nodes) // 2)]))}
    (m,) = compute_all(corpus_from(nodes, arcs, groups, {}))
    for k in InteractionType:
        km = m.kinds[k]
        if is_defined(km.r_int) and km.r_int > 0:
            assert km.t == 1.0


def test_compute_all_matches_reference_fifty_groups():
    rng = random.Random(50)
    nodes = [f"u{i}" for i in range(45)]
    arcs = [(rng.choice(nodes), rng.choice(nodes), rng.choice(oracle.KINDS)) for _ in range(260)]
    groups, bags = {}, {}
    for j in range(50):
        origin = "declared" if j % 3 else "detected"
        groups[f"g{j:02d}"] = (origin, set(rng.sample(nodes, rng.randint(1, 20))))
        for ch in oracle.CHANNELS:
            if ch == "pool" and origin == "detected":
                continue
            bags[(f"g{j:02d}", ch)] = {f"t{i}": rng.randint(1, 4) for i in range(rng.randint(1, 30))}
    nodes = oracle.effective_nodes(arcs, groups)
    got = compute_all(corpus_from(nodes, arcs, groups, bags))
    assert_matches_reference(got, oracle.reference_metrics(nodes, arcs, groups, bags))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_compute_all_matches_reference_random(seed):
    nodes, arcs, groups, bags = oracle.random_corpus(random.Random(seed))
    got = compute_all(corpus_from(nodes, arcs, groups, bags))
    assert_matches_reference(got, oracle.reference_metrics(nodes, arcs, groups, bags))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_metric_bounds_and_t_mean(seed):
    nodes, arcs, groups, bags = oracle.random_corpus(random.Random(seed))
    ms = compute_all(corpus_from(nodes, arcs, groups, bags))
    for origin in GroupOrigin:
        for k in InteractionType:
            ts = [m.kinds[k].t for m in ms if m.origin is origin and is_defined(m.kinds[k].t)]
            if ts:
                assert math.fsum(ts) / len(ts) == pytest.approx(1.0, abs=1e-12)
    for m in ms:
        for km in m.kinds.values():
            for r in (km.r_int, km.r_ext):
                assert not is_defined(r) or 0 <= r <= 1
            assert not is_defined(km.u) or 0.5 <= km.u <= 2
        for cm in m.channels.values():
            assert not is_defined(cm.H) or cm.H >= 0


def test_relabeling_users_leaves_metrics_unchanged():
    nodes, arcs, groups, bags = oracle.random_corpus(random.Random(99))
    rename = {u: f"z{len(nodes) - i}" for i, u in enumerate(nodes)}
    arcs2 = [(rename.get(u, u + "_"), rename.get(v, v + "_"), k) for u, v, k in arcs]
    groups2 = {g: (o, {rename[m] for m in ms}) for g, (o, ms) in groups.items()}
    a = metrics_to_csv(compute_all(corpus_from(nodes, arcs, groups, bags)))
    b = metrics_to_csv(compute_all(corpus_from(nodes, arcs2, groups2, bags)))
    assert a == b


def test_doubling_tag_counts_leaves_entropy_unchanged():
    nodes, arcs, groups, bags = oracle.random_corpus(random.Random(4), max_groups=10)
    doubled = {k: {t: 2 * c for t, c in v.items()} for k, v in bags.items()}
    a = compute_all(corpus_from(nodes, arcs, groups, bags))
    b = compute_all(corpus_from(nodes, arcs, groups, doubled))
    for x, y in zip(a, b):
        for c in TermChannel:
            for f in ("H", "h"):
                vx, vy = getattr(x.channels[c], f), getattr(y.channels[c], f)
                assert is_defined(vx) == is_defined(vy)
                if is_defined(vx):
                    assert vx == pytest.approx(vy, abs=1e-12)


def test_kind_isolation():
    nodes, arcs, groups, bags = oracle.random_corpus(random.Random(21))
    base = corpus_from(nodes, arcs, groups, bags)
    full = compute_all(base)
    stripped = compute_all(Corpus(base.graph.without_kind(InteractionType.FAVORITE),
                                  base.groups, base.bags))
    for x, y in zip(full, stripped):
        for k in (InteractionType.COMMENT, InteractionType.CONTACT):
            assert x.kinds[k] == y.kinds[k]


def test_pooled_and_restricted_universes():
    nodes, arcs, groups, bags = oracle.random_corpus(random.Random(8))
    corpus = corpus_from(nodes, arcs, groups, bags)
    pooled = compute_all(corpus, pooled=True)
    ts = [m.kinds[C].t for m in pooled if is_defined(m.kinds[C].t)]
    if ts:
        assert math.fsum(ts) / len(ts) == pytest.approx(1.0, abs=1e-12)
    some = [m.group_id for m in pooled if is_defined(m.kinds[C].r_int) and m.kinds[C].r_int > 0][:1]
    if some:
        restricted = compute_all(corpus, pooled=True, reciprocity_universe=some)
        assert [m.kinds[C].t for m in restricted if m.group_id == some[0]] == [1.0]


def test_threads_do_not_change_output():
    nodes, arcs, groups, bags = oracle.random_corpus(random.Random(12))
    corpus = corpus_from(nodes, arcs, groups, bags)
    assert metrics_to_csv(compute_all(corpus, threads=1)) == metrics_to_csv(compute_all(corpus, threads=8))
