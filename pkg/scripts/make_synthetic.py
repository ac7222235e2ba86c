"""Write the generated corpora as QuAC-format JSON files."""

import argparse
import json
from pathlib import Path

from hamqa.synthetic import toy_corpus, topic_return_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/synthetic")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpora = {
        "toy.json": toy_corpus(seed=args.seed),
        "topic_return_train.json": topic_return_corpus(1000, seed=1000 + args.seed),
        "topic_return_heldout.json": topic_return_corpus(100, seed=5000 + args.seed),
    }
    for name, doc in corpora.items():
        (out / name).write_text(json.dumps(doc, indent=1) + "\n")
        print(out / name)


if __name__ == "__main__":
    main()
