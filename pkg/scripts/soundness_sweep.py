"""Sweep seeded random local and hybrid models through the sharpened-bound checks."""

import argparse

from bellpost.hvmodels import appendix_b_diagnostics, appendix_c_diagnostics, random_model
from bellpost.inequalities import catalog
from bellpost.scenario import BellScenario
from bellpost.sharpening import sharpen


def sweep(f, scen, kind, trials, seed):
    check = appendix_b_diagnostics if kind == "lhv" else appendix_c_diagnostics
    worst, nonvacuous = float("inf"), 0
    for s in range(seed, seed + trials):
        diag = check(random_model(scen, kind=kind, seed=s), f)
        worst = min(worst, diag.worst_margin)
        nonvacuous += not sharpen(f, diag.eta_c).vacuous
    return worst, nonvacuous


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cases = [
        ("chsh", BellScenario.dichotomic(2), "lhv"),
        ("mermin", BellScenario.dichotomic(3), "lhv"),
        ("svetlichny", BellScenario.dichotomic(3), "hlnhv"),
    ]
    for name, scen, kind in cases:
        worst, nv = sweep(catalog(name), scen, kind, args.trials, args.seed)
        print(f"{name:<11} {kind:<6} worst margin {worst:+.3e}   non-vacuous in {nv}/{args.trials}")


if __name__ == "__main__":
    main()
