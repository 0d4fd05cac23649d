"""Compare the compiled and pure-Python engines on the same body set.

    python3 benchmarks/bench_backends.py --n 4000 --p 4
"""

import argparse
import time


from taskfmm import backend
from taskfmm.bench import generate_bodies
from taskfmm.oracle import compare
from taskfmm.traversal import InteractionLog, TraversalConfig, dual_tree_traverse, make_engine
from taskfmm.tree import build_tree


def run(name, bodies, p, ncrit, theta, q):
    tree = build_tree(bodies, ncrit, p)
    eng = make_engine(tree, theta, name)
    times = {}
    t0 = time.perf_counter()
    eng.upward()
    t1 = time.perf_counter()
    log = InteractionLog()
    dual_tree_traverse(tree, TraversalConfig(theta=theta, Q=q, p=p), engine=eng, log=log)
    t2 = time.perf_counter()
    eng.downward()
    t3 = time.perf_counter()
    times.update(upward=t1 - t0, traversal=t2 - t1, downward=t3 - t2, total=t3 - t0)
    return times, tree.potentials_in_input_order(), log


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--ncrit", type=int, default=64)
    ap.add_argument("--theta", type=float, default=0.5)
    ap.add_argument("--q", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    bodies = generate_bodies("cube", args.n, args.seed)
    names = [b for b in ("compiled", "python") if b in backend.available()]
    results = {b: run(b, bodies, args.p, args.ncrit, args.theta, args.q) for b in names}

    print(f"N={args.n} p={args.p} ncrit={args.ncrit} theta={args.theta}")
    print(f"{'backend':<10}{'upward':>10}{'traversal':>12}{'downward':>10}{'total':>10}")
    for b, (t, _, log) in results.items():
        print(f"{b:<10}{t['upward']:>10.3f}{t['traversal']:>12.3f}"
              f"{t['downward']:>10.3f}{t['total']:>10.3f}   m2l {log.m2l} p2p {log.p2p}")
    if len(results) == 2:
        (tc, pc, _), (tp, pp, _) = results["compiled"], results["python"]
        print(f"speedup of compiled over python: {tp['total'] / tc['total']:.1f}x")
        print(f"max relative potential difference: {compare(pp, pc).rel_linf:.2e}")


if __name__ == "__main__":
    main()
