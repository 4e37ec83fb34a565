#!/usr/bin/env python3
"""Uniform refinement of the smooth benchmark for the three variants."""
import argparse
import sys

from signorini_dpg.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-elems", default="32000")
    ap.add_argument("--out", default="results/smooth")
    args = ap.parse_args()
    status = 0
    for star in ("0", "n", "s"):
        status |= main(["smooth", "--variant", star, "--refine", "uniform",
                        "--max-elems", args.max_elems, "--out", f"{args.out}/{star}"])
    sys.exit(status)
