#!/usr/bin/env python3
"""Adaptive reaction-diffusion study over the default epsilon list."""
import argparse
import sys

from signorini_dpg.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-elems", default="20000")
    ap.add_argument("--solution", default="boundary-layer",
                    choices=["boundary-layer", "contact-layer"])
    ap.add_argument("--out", default="results/rd")
    args = ap.parse_args()
    sys.exit(main(["rd", "--refine", "adaptive", "--eps", "1e-2,1e-4,1e-6,1e-8",
                   "--solution", args.solution, "--max-elems", args.max_elems,
                   "--out", f"{args.out}/{args.solution}", "-v"]))
