#!/usr/bin/env python3
"""Generate a small synthetic demo dataset: images + DOTA annotations.

Usage: python scripts/make_demo_data.py [out_dir] [--images N] [--seed S]
"""

import argparse
import random
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

CATEGORIES = ["plane", "ship", "harbor", "storage-tank", "bridge", "vehicle-lot"]


def synth_scene(w, h, boxes, seed):
    rng = np.random.default_rng(seed)
    arr = (rng.integers(40, 90, size=(h, w, 3)) + rng.integers(0, 30, size=(h, w, 1))).astype("uint8")
    img = Image.fromarray(arr, "RGB")
    draw = ImageDraw.Draw(img)
    palette = [(200, 200, 210), (120, 140, 200), (90, 160, 90), (220, 180, 90)]
    for i, (x0, y0, x1, y1) in enumerate(boxes):
        draw.rectangle([x0, y0, x1, y1], fill=palette[i % len(palette)])
    return img


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir", nargs="?", default="demo_data")
    parser.add_argument("--images", type=int, default=3)
    parser.add_argument("--per-image", type=int, default=4)
    parser.add_argument("--width", type=int, default=800)
    parser.add_argument("--height", type=int, default=600)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out_dir)
    ann_dir = out / "annotations"
    img_dir = out / "images"
    ann_dir.mkdir(parents=True, exist_ok=True)
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    for i in range(args.images):
        boxes, lines = [], []
        for j in range(args.per_image):
            cat = CATEGORIES[(i + j) % len(CATEGORIES)]
            w = rng.randint(50, 160)
            h = rng.randint(40, 130)
            x0 = rng.randint(10, args.width - w - 10)
            y0 = rng.randint(10, args.height - h - 10)
            boxes.append((x0, y0, x0 + w, y0 + h))
            lines.append(
                f"{x0} {y0} {x0 + w} {y0} {x0 + w} {y0 + h} {x0} {y0 + h} {cat} 0"
            )
        name = f"demo_{i:03d}"
        synth_scene(args.width, args.height, boxes, seed=args.seed + i).save(img_dir / f"{name}.png")
        (ann_dir / f"{name}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    print(f"wrote {args.images} images + annotations under {out}/")


if __name__ == "__main__":
    main()
