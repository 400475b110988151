"""t-SNE on phantoms: age structure appears as a 1-D progression.

Pixels are normalized to [0, 1] before embedding.  The bandwidth search
drives every point's conditional entropy to ln(perplexity); the optimizer
uses early exaggeration and the 0.5 -> 0.8 momentum switch.
"""

from pathlib import Path

import numpy as np

from bonegan.phantom import PhantomSpec, generate_phantom
from bonegan.tsne import bandwidth_search, plot_embedding, squared_distances, tsne_embed

OUT = Path(__file__).parent / "_out" / "05"
OUT.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(0)
images, bins = [], []
for i in range(210):  # 42 per age bin
    b = i % 5
    age = float(b * 4 + rng.uniform(0, 3.999))
    img, _ = generate_phantom(PhantomSpec(age, int(rng.integers(1e6)), size=32))
    images.append((img / 255.0).reshape(-1))  # [0, 1] pixels
    bins.append(b)
x = np.stack(images)
bins = np.array(bins)

# every point's entropy lands on ln(perplexity)
_, _, entropies = bandwidth_search(squared_distances(x), perplexity=50.0)
print(f"entropy target ln(50)={np.log(50):.4f}; "
      f"max deviation {np.abs(entropies - np.log(50)).max():.2e}")

emb = tsne_embed(x, perplexity=50, steps=500, seed=0)
plot_embedding(OUT / "tsne.png", emb, bins, ["real"] * len(bins),
               title="phantoms, colored by age bin")
print(f"wrote {OUT / 'tsne.png'}")

# neighboring bins should sit closer than distant ones
centroids = np.stack([emb[bins == b].mean(axis=0) for b in range(5)])
d01 = np.linalg.norm(centroids[0] - centroids[1])
d04 = np.linalg.norm(centroids[0] - centroids[4])
print(f"centroid distance bin0-bin1 {d01:.2f} vs bin0-bin4 {d04:.2f}")
