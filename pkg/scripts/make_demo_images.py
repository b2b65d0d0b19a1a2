#!/usr/bin/env python3
"""Write a directory of synthetic 544x544 high-quality PNGs for demo runs."""

import argparse
from pathlib import Path

from noisemill.imgcore import save_png
from noisemill.testimages import synth_natural


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default="demo_hq")
    ap.add_argument("--count", type=int, default=4)
    ap.add_argument("--seed", type=int, default=600)
    ap.add_argument("--size", type=int, default=544)
    args = ap.parse_args()

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        path = out / f"hq_{i:03d}.png"
        save_png(synth_natural(args.seed + i, args.size, args.size), path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
