"""Shared output handling for the demo scripts."""
import argparse
from pathlib import Path


def parse_args(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default="demo_output", help="directory for the figure")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    return p.parse_args()


def save(fig, args, name):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out / name, dpi=120)
    print(f"wrote {out / name}")
