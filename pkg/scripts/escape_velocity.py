"""Distance travelled per step, d((I, I), (x_k, y_k)) / k, against half the
minimum norm of the moment polytope.

    python3 scripts/escape_velocity.py --ks 1000 3000 10000
"""
import argparse
from dataclasses import dataclass, field

import numpy as np

from unbflow import dm, opscale, pencil

CASES = {
    "L1+L1dag": lambda s: pencil.synthesize(pencil.PencilStructure((1,), (1,)), s)[0],
    "L2+L1dag": lambda s: pencil.synthesize(pencil.PencilStructure((2,), (1,)), s)[0],
    "L1+R1+L2dag": lambda s: pencil.synthesize(pencil.PencilStructure((1,), (2,), 1), s)[0],
    "blocks(1,3)(1,1)(3,1)": lambda s: dm.block_tuple([(1, 3), (1, 1), (3, 1)], seed=s),
}


@dataclass(frozen=True)
class VelocityConfig:
    ks: tuple = (1000, 3000, 10000)
    seeds: tuple = (0, 1, 2)
    cases: tuple = field(default_factory=lambda: tuple(CASES))


def measure(cfg):
    out = []
    kmax = max(cfg.ks)
    for name in cfg.cases:
        for seed in cfg.seeds:
            A = CASES[name](seed)
            tr = opscale.run_descent(A, kmax, int(np.gcd.reduce(cfg.ks)))
            est = opscale.spectral_monitor(tr.final.state, kmax).pstar_estimate
            kappa = dm.dm_report(opscale.extract_coarse_blocks(est, k=kmax)).min_norm
            by_k = {e.k: e for e in tr.entries}
            for k in cfg.ks:
                v = by_k[k].state.distance_from_identity() / k
                out.append((name, seed, k, v, kappa / 2, v / (kappa / 2) - 1))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--ks", type=int, nargs="+", default=[1000, 3000, 10000])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    a = ap.parse_args(argv)
    rows = measure(VelocityConfig(tuple(a.ks), tuple(a.seeds)))
    print(f"{'case':24s} seed {'k':>6s} {'d/k':>10s} {'kappa/2':>10s} {'rel err':>10s}")
    for name, seed, k, v, half, err in rows:
        print(f"{name:24s} {seed:4d} {k:6d} {v:10.6f} {half:10.6f} {err:10.2e}")


if __name__ == "__main__":
    main()
