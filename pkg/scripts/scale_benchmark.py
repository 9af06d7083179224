"""Ingest + full metric computation on a large synthetic corpus.

Generates about 1.4M interactions over 100K users with 10K declared groups,
then times loading and metric computation in a fresh process and reports the
peak resident memory.

    python3 scripts/scale_benchmark.py --seed 0 --dir /tmp/scale
"""

import argparse
import json
import subprocess
import sys
import time

from grouptype.synth import SynthConfig, generate

MEASURE = """
import json, resource, sys, time
from grouptype.metrics import compute_all
from grouptype.model import Corpus
t = time.perf_counter()
corpus = Corpus.load_dir(sys.argv[1])
t_load = time.perf_counter() - t
metrics = compute_all(corpus, threads=int(sys.argv[2]))
print(json.dumps({"load_s": t_load, "total_s": time.perf_counter() - t,
                  "rss_mb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024,
                  "rows": corpus.graph.report.rows, "groups": len(metrics)}))
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--dir", required=True, help="where to write the corpus")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = SynthConfig(seed=args.seed, n_users=100_000, n_social=5000, n_topical=5000, n_detected=0,
                      comment_degree=0.25, favorite_degree=0.15, contact_degree=0.15,
                      background_degree=1.0)
    t = time.perf_counter()
    generate(cfg).write(args.dir)
    print(f"generated in {time.perf_counter() - t:.1f}s")
    out = subprocess.run([sys.executable, "-c", MEASURE, args.dir, str(args.threads)],
                         capture_output=True, text=True, check=True).stdout
    res = json.loads(out)
    print(f"{res['rows']} interaction rows, {res['groups']} groups: load {res['load_s']:.1f}s, "
          f"load + metrics {res['total_s']:.1f}s, peak RSS {res['rss_mb']:.0f} MB")


if __name__ == "__main__":
    main()
