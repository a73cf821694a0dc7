"""Coarse DM blocks from the descent against the coordinate brute-force oracle
on random 0/1 support patterns.
"""
import argparse
from dataclasses import dataclass

import numpy as np

from unbflow import dm, opscale
from unbflow.errors import UnresolvedStructure
from unbflow.tuples import monomial_tuple


@dataclass(frozen=True)
class OracleConfig:
    count: int = 200
    seed: int = 1
    max_dim: int = 5
    iters: int = 10000


def random_supports(cfg):
    rng = np.random.default_rng(cfg.seed)
    while True:
        n, m = rng.integers(1, cfg.max_dim + 1, 2)
        M = (rng.random((n, m)) < rng.uniform(0.2, 0.8)).astype(float)
        if M.any(1).all() and M.any(0).all():
            yield M


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--iters", type=int, default=10000)
    a = ap.parse_args(argv)
    cfg = OracleConfig(a.count, a.seed, iters=a.iters)
    agree = 0
    gen = random_supports(cfg)
    for idx in range(cfg.count):
        M = next(gen)
        truth = list(dm.coordinate_dm_bruteforce(M).blocks)
        try:
            got = list(opscale.analyze(monomial_tuple(M), cfg.iters).blocks)
        except UnresolvedStructure as exc:
            got = f"unresolved ({exc})"
        if got == truth:
            agree += 1
        else:
            print(f"#{idx} {M.astype(int).tolist()}: oracle {truth}, descent {got}")
    print(f"{agree}/{cfg.count} agree")


if __name__ == "__main__":
    main()
