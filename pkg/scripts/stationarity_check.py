"""Exact stationarity of the sampler on a slot grid, plus the histogram test."""
import argparse

from sbmc.validation import stationarity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    for c in stationarity(args.steps, args.seed):
        print(c.line(), c.detail or "")


if __name__ == "__main__":
    main()
