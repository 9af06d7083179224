"""Randomization baselines as size curves.

1. Normalized entropy per term-bag size bin, for the planted corpus and for the
   same corpus with tags shuffled across groups (the shuffled curve sits at 1).
2. Relative activity a_g of uniformly random groups on a configuration-model
   graph, per group size (values scatter around 1).

    python3 scripts/null_baselines.py --seed 0
"""

import argparse
from collections import defaultdict

import numpy as np

from grouptype.metrics import compute_all, is_defined, relative_activity_a
from grouptype.model import CHANNELS, InteractionType, partition_edges
from grouptype.overlap import size_bin
from grouptype.synth import SynthConfig, configuration_graph, generate, random_groups, shuffle_terms


def entropy_curve(corpus):
    per_bin = defaultdict(list)
    for m in compute_all(corpus):
        if m.origin.value != "declared":
            continue
        for ch in CHANNELS:
            h = m.channels[ch].h
            if is_defined(h):
                per_bin[size_bin(m.size)].append(h)
    return {k: float(np.mean(v)) for k, v in sorted(per_bin.items())}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--nodes", type=int, default=10_000)
    ap.add_argument("--degree", type=float, default=50.0)
    args = ap.parse_args()

    corpus = generate(SynthConfig(seed=args.seed)).to_corpus()
    real = entropy_curve(corpus)
    null = entropy_curve(shuffle_terms(corpus, args.seed))
    print("group size bin   mean h (real)   mean h (shuffled tags)")
    for k in real:
        print(f"[{2 ** k:5d},{2 ** (k + 1):5d})   {real[k]:13.3f}   {null.get(k, float('nan')):22.3f}")

    g = configuration_graph(args.nodes, args.degree, seed=args.seed)
    e = g.n_arcs(InteractionType.COMMENT)
    print("\nrandom group size   mean a_g   std")
    for size in (5, 10, 20, 50, 100, 200, 500):
        groups = random_groups(g, [size] * 200, seed=args.seed + size)
        a = [relative_activity_a(partition_edges(g, x, InteractionType.COMMENT), e) for x in groups]
        a = np.array([v for v in a if is_defined(v)])
        print(f"{size:17d}   {a.mean():8.3f}   {a.std():.3f}")


if __name__ == "__main__":
    main()
