"""Full HAM against the equal-weights ablation on the topic-return corpus."""

import argparse
import json

from hamqa.experiments import topic_return_ablation

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--steps", type=int, default=1000)
    args = parser.parse_args()
    wins = 0
    for seed in args.seeds:
        r = topic_return_ablation(seed, args.steps)
        wins += r["ham"] > r["equal_weights"]
        print(json.dumps(r), flush=True)
    print(json.dumps({"ham_wins": wins, "seeds": len(args.seeds)}))
