"""Regenerate the bundled toy detector checkpoint.

Trains on the first 400 scenes of a deterministic 540-scene corpus and writes
src/imgcloak/data/toy_detector.npz. Rerunning reproduces the shipped asset
bit-for-bit.
"""

import os

from imgcloak.detector import generate_corpus, train_toy_detector

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "imgcloak", "data", "toy_detector.npz")


def main():
    corpus = generate_corpus(540, seed=1)[:400]
    detector = train_toy_detector(corpus)
    detector.save(OUT)
    print(f"wrote {os.path.abspath(OUT)}")


if __name__ == "__main__":
    main()
