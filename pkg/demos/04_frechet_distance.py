"""Frechet distance from first principles.

The distance between two Gaussian fits has a closed form we can sanity-check
by hand, and a Monte-Carlo behavior (shrinking with sample size) that any
correct implementation must show.  On images we fit the Gaussians over
extracted features: the built-in desk extractor (8x8 average pool, D=64)
keeps the whole pipeline dependency-free; plugging in pretrained inception
features is a one-argument change once a weights file is supplied.
"""

import numpy as np

from bonegan.metrics import (compute_stats, desk_features, frechet_between_image_sets,
                             frechet_distance, uniform_noise_images)
from bonegan.phantom import PhantomSpec, generate_phantom

rng = np.random.default_rng(0)

# closed-form cases: identical stats -> 0; unit covariances -> squared mean gap
s = compute_stats(rng.standard_normal((500, 5)))
print(f"identical stats: {frechet_distance(s, s):.2e}")
a = compute_stats(rng.standard_normal((20000, 2)))
b = compute_stats(rng.standard_normal((20000, 2)) + np.array([3.0, 4.0]))
print(f"N(0,I) vs N((3,4),I): {frechet_distance(a, b):.3f}  (limit 25.0)")

# the estimate tightens as both samples grow
for n in (50, 500, 5000):
    d = np.mean([
        frechet_distance(compute_stats(np.random.default_rng(k).standard_normal((n, 5))),
                         compute_stats(np.random.default_rng(k + 99).standard_normal((n, 5))))
        for k in range(5)])
    print(f"same distribution, n={n:5d}: mean distance {d:.3f}")

# on images: phantoms of one age population vs another, vs pure noise
def phantom_batch(age_lo, age_hi, n=80, seed=1):
    r = np.random.default_rng(seed)
    imgs = []
    for i in range(n):
        img, _ = generate_phantom(PhantomSpec(float(r.uniform(age_lo, age_hi)),
                                              int(r.integers(1e6)), size=64))
        imgs.append(img / 127.5 - 1.0)
    return np.stack(imgs)[:, None].astype(np.float32)

young = phantom_batch(0, 4, seed=1)
young2 = phantom_batch(0, 4, seed=2)
old = phantom_batch(12, 16, seed=3)
noise = uniform_noise_images(80, 64, seed=4)
print(f"\ndesk-extractor feature dim: {desk_features(young).shape[1]}")
print(f"young vs young   : {frechet_between_image_sets(young, young2):8.3f}")
print(f"young vs old     : {frechet_between_image_sets(young, old):8.3f}")
print(f"young vs noise   : {frechet_between_image_sets(young, noise):8.3f}")
