"""Tabulate the dimension spectrum of a config's map and potential and compare the
doubling-map digit case with its closed form."""

import argparse
import math
import sys

from irregdim.config import load_config
from irregdim.spectrum import spectrum_curve


def closed_form(alpha):
    if alpha in (0.0, 1.0):
        return 0.0
    return -(alpha * math.log(alpha) + (1 - alpha) * math.log(1 - alpha)) / math.log(2)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/besicovitch.yaml")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    T = cfg.build_map()
    pot = cfg.build_potential(T)
    seed = args.seed if args.seed is not None else (cfg.seed or 0)
    points, flags = spectrum_curve(T, pot, cfg.spectrum.alphas, cfg.spectrum.order, cfg.spectrum.starts, seed)
    compare = cfg.map.get("kind") == "doubling" and cfg.potential == {"kind": "indicator", "pattern": "1"}
    print("alpha      dim        status" + ("      closed_form" if compare else ""))
    for p in points:
        a = float(p.alpha[0])
        line = f"{a:<10.4g} {p.dim_value:<10.6f} {p.status:<11}"
        if compare:
            line += f" {closed_form(a):.6f}"
        print(line)
    print(f"concave: {flags['concave']}  failed: {flags['failed']}")
    return 1 if flags["failed"] else 0


if __name__ == "__main__":
    sys.exit(main())
