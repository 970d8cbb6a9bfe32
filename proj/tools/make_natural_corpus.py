#!/usr/bin/env python3
"""Cut 160x120 crops out of the photographs bundled with scikit-image and
matplotlib. The crops are committed under tests/data/natural; rerun only if
the set needs to change."""
import argparse
import pathlib

import numpy as np
import skimage.data
from matplotlib import cbook
from PIL import Image

PHOTOS = ["astronaut", "camera", "chelsea", "coffee", "rocket", "coins", "moon",
          "grass", "gravel", "brick", "hubble_deep_field", "immunohistochemistry", "retina"]
W, H = 160, 120


def sources():
    for name in PHOTOS:
        yield name, getattr(skimage.data, name)()
    with cbook.get_sample_data("grace_hopper.jpg") as f:
        yield "grace_hopper", np.asarray(Image.open(f).convert("RGB"))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/data/natural")
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    srcs = list(sources())
    for i in range(args.count):
        name, img = srcs[i % len(srcs)]
        h, w = img.shape[:2]
        y = int(rng.integers(0, h - H + 1))
        x = int(rng.integers(0, w - W + 1))
        crop = np.ascontiguousarray(img[y:y + H, x:x + W])
        Image.fromarray(crop).save(out / f"{name}_{i:02d}.png", optimize=True)


if __name__ == "__main__":
    main()
