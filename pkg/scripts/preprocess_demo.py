#!/usr/bin/env python3
"""Render the preprocessing stages side by side, like the pipeline figure:
original | blurred | CLAHE-enhanced | sharpened.

    python scripts/preprocess_demo.py [--image photo.jpg] [--out demo.png]
"""

import argparse

import numpy as np

from cashsight import imageio, imgproc


def synthetic_note(seed=0):
    rng = np.random.default_rng(seed)
    img = np.full((240, 320, 3), 200, np.uint8)
    img[40:200, 30:290] = (90, 140, 60)
    for i in range(8):
        x = 50 + i * 30
        img[60:180, x : x + 3] = (30, 40, 30)
    img = img.astype(np.int16) + rng.normal(0, 12, img.shape).astype(np.int16)
    return np.clip(img, 0, 255).astype(np.uint8)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--image", help="input photo; synthetic banknote-ish pattern if omitted")
    parser.add_argument("--out", default="preprocess_demo.png")
    args = parser.parse_args()

    original = imageio.read_bgr(args.image) if args.image else synthetic_note()
    blurred = imgproc.gaussian_blur(original, 5)
    enhanced = imgproc.clahe_enhance(blurred, 5.0, (8, 8))
    sharpened = imgproc.sharpen(enhanced)

    strip = np.concatenate([original, blurred, enhanced, sharpened], axis=1)
    imageio.write_bgr(args.out, strip)
    print(f"wrote {args.out} (original | blur | CLAHE | sharpen)")
    for name, img in (("original", original), ("blur", blurred), ("clahe", enhanced), ("sharpen", sharpened)):
        lab = imgproc.bgr_to_lab(img)
        print(f"  {name:<8} L-channel std {lab[:, :, 0].std():6.2f}")


if __name__ == "__main__":
    main()
