"""Train full HAM on the 20-dialog toy corpus and report training-set accuracy."""

import argparse
import json

from hamqa.experiments import toy_overfit

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--out")
    args = parser.parse_args()
    print(json.dumps(toy_overfit(args.seed, args.steps, args.out), indent=2))
