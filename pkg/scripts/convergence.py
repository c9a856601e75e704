"""Objective trace of the layer-by-layer phase optimization over random starts.

Usage: python scripts/convergence.py [--layers L] [--users U] [--seeds S] [--sweeps T]
"""

import argparse

import numpy as np

from simtrx.channel import ChannelSet, WidebandConfig
from simtrx.geometry import UePlacement, build_urpa_geometry
from simtrx.holographic import OptimizerSettings, optimize
from simtrx.phase_error import PhaseErrorModel

LAM = 0.03


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layers", type=int, default=3)
    ap.add_argument("--users", type=int, default=1)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sweeps", type=int, default=8)
    ap.add_argument("--variance", type=float, default=0.1)
    args = ap.parse_args()

    geo = build_urpa_geometry((16, 16), LAM / 4, (5 * LAM,) * args.layers, (2, 2), LAM / 2)
    xs = np.linspace(-0.3, 0.3, args.users) if args.users > 1 else np.zeros(1)
    users = UePlacement(np.column_stack([xs, np.zeros_like(xs), np.ones_like(xs)]))
    ch = ChannelSet(geo, users, WidebandConfig(1e10, 6e8, 1, 1e-13, 1e-3)).center()
    model = PhaseErrorModel.from_variance("uniform", args.variance)
    for seed in range(args.seeds):
        _, tr = optimize(ch, model, OptimizerSettings(max_sweeps=args.sweeps, epsilon=1e-15, seed=seed))
        trace = " ".join(f"{v:.6e}" for v in tr.objective_per_sweep)
        opt = f" worst layer optimality {min(tr.layer_optimality):.12f}" if tr.layer_optimality else ""
        print(f"seed {seed}: {trace} (decreases: {tr.monotone_violations}){opt}")


if __name__ == "__main__":
    main()
