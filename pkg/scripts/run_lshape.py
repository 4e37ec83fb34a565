#!/usr/bin/env python3
"""L-shaped domain: uniform against adaptive refinement of the symmetric variant."""
import argparse
import sys

from signorini_dpg.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--uniform-elems", default="190000")
    ap.add_argument("--adaptive-elems", default="10000")
    ap.add_argument("--out", default="results/lshape")
    args = ap.parse_args()
    status = main(["lshape", "--refine", "uniform", "--max-elems", args.uniform_elems,
                   "--out", f"{args.out}/uniform"])
    status |= main(["lshape", "--refine", "adaptive", "--max-elems", args.adaptive_elems,
                    "--out", f"{args.out}/adaptive"])
    sys.exit(status)
