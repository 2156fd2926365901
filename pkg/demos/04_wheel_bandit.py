"""
Thompson sampling on the wheel bandit
=====================================

Contexts are uniform on the unit disk.  Inside radius 0.95 the safe arm
pays 1.2 and the others 1.0; outside, the arm matching the quadrant pays
50.  Only about one context in ten is outside, so an agent that trusts its
first impressions settles on the safe arm and never finds the large
rewards.

Each round the agent picks one particle at random and plays its greedy
arm.  We compare the function-space particle agent with an ensemble of
independently trained networks and with uniform play.
"""
import argparse
import tempfile

import numpy as np

from fspovi import bandit as bd
from fspovi import runner

parser = argparse.ArgumentParser(description=__doc__.split("\n")[1])
parser.add_argument("--horizon", type=int, default=2000)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

out = tempfile.mkdtemp(prefix="wheel-")
for method in ("fsvgd", "ensemble"):
    res = runner.run({"experiment": "bandit", "method": method, "bandit": {"horizon": args.horizon}},
                     seed=args.seed, out=f"{out}/{method}")
    d = np.genfromtxt(res.out / "metrics.csv", delimiter=",", names=True)
    half = args.horizon // 2
    print(f"{method}: cumulative regret {res.summary['cumulative_regret']:.0f} "
          f"(first half {d['regret'][:half].sum():.0f}, second half {d['regret'][half:].sum():.0f}); "
          f"arm counts {np.bincount(d['action'].astype(int), minlength=5).tolist()}")

cfg = runner.resolve_config({"experiment": "bandit"})["bandit"]
wheel = bd.WheelConfig(cfg["delta"], cfg["mu1"], cfg["mu2"], cfg["mu3"], cfg["sigma_r"])
print(f"uniform play, expected: {bd.wheel_random_regret(wheel) * args.horizon:.0f}")
