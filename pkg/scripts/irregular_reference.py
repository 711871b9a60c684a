"""Build the reference irregular-set construction and print its oscillation profile,
local-dimension slopes and the box-counting slope of a generated point cloud."""

import argparse
import sys

import numpy as np

from irregdim.config import load_config
from irregdim.dimension import box_counting
from irregdim.moran import (
    build_concatenated,
    build_schedule,
    generate_point,
    generate_points,
    local_dimension,
    oscillation_profile,
)
from irregdim.symbolic import cylinder_pass


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/irregular_doubling.yaml")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--points", type=int, default=10, help="points for the local-dimension fit")
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.require_seed("irregular")
    T = cfg.build_map()
    pot = cfg.build_potential(T)
    mu, nu = cfg.build_measures(T)
    q = cfg.irregular
    sched = build_schedule(q.stages, q.base_length, q.growth, q.eps0, q.delta, symmetric=q.symmetric)
    cm = build_concatenated(sched, mu, nu, pot, T, seed=seed, budget=q.budget)
    print(f"lengths {sched.lengths}\nmultiplicities {sched.multiplicities}\ntotal length {sched.total_length}")

    print("\nstage  n          average   mixture   budget")
    for r in oscillation_profile(cm, T, pot, generate_point(cm, seed)):
        print(f"{r.stage:<6} {r.n:<10} {r.value[0]:<9.4f} {r.mixture[0]:<9.4f} {r.budget:.4f}")

    words = generate_points(cm, seed + 1, args.points, min(q.point_length, sched.total_length))
    slopes = np.array([local_dimension(cm, T, w).slope for w in words])
    floor = min(f.h / f.lam for f in cm.families[:2])
    print(f"\nlocal dimension slopes: min {slopes.min():.3f} median {np.median(slopes):.3f} (floor {floor:.3f})")

    cloud = generate_points(cm, seed + 2, q.cloud, min(q.cloud_length, sched.total_length))
    box = box_counting(cylinder_pass(T, cloud).center)
    print(f"box-counting slope of {q.cloud} points: {box.slope:.3f} (r^2 {box.r_squared:.4f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
