"""t-SNE, implemented directly.

Per-point Gaussian bandwidths come from a binary search driving each
conditional distribution's entropy to ln(perplexity); the low-dimensional
map uses Student-t affinities, and the optimizer is gradient descent with
momentum 0.5 switching to 0.8 at step 250 and early exaggeration (factor 12
for the first 100 steps).  Everything is seeded and the returned embedding
is centered.
"""

import numpy as np

from .errors import ConfigurationError

_EPS = 1e-12


def squared_distances(x):
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def bandwidth_search(d2, perplexity, tol=1e-4, max_iter=200):
    """Per-point precision (beta) binary search.

    Returns (conditional probabilities with zero diagonal, betas, entropies);
    each row's Shannon entropy (nats) lands within tol of ln(perplexity).
    """
    n = d2.shape[0]
    target = np.log(perplexity)
    p_cond = np.zeros((n, n))
    betas = np.ones(n)
    entropies = np.zeros(n)
    for i in range(n):
        di = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            w = np.exp(-di * beta)
            sw = max(w.sum(), _EPS)
            p = w / sw
            # H = log(sum w) + beta * <d>_p
            h = np.log(sw) + beta * float((di * p).sum())
            if abs(h - target) <= tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        entropies[i] = h
        betas[i] = beta
        row = np.insert(p, i, 0.0)
        p_cond[i] = row
    return p_cond, betas, entropies


def joint_probabilities(x, perplexity):
    d2 = squared_distances(np.asarray(x, dtype=np.float64))
    p_cond, _, _ = bandwidth_search(d2, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * x.shape[0])
    return np.maximum(p, _EPS)


def tsne_embed(x, perplexity=50.0, steps=500, seed=0, learning_rate=200.0,
               early_exaggeration=12.0, exaggeration_steps=100,
               momentum_switch=250):
    """Embed an (n, D) matrix to centered (n, 2) coordinates."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigurationError(f"expected an (n, D) matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ConfigurationError("input contains non-finite values")
    n = x.shape[0]
    if n <= 3 * perplexity:
        raise ConfigurationError(
            f"perplexity {perplexity} too large for {n} points (need n > 3*perplexity)")

    p = joint_probabilities(x, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)

    for step in range(steps):
        d2y = squared_distances(y)
        num = 1.0 / (1.0 + d2y)
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), _EPS)
        p_eff = p * early_exaggeration if step < exaggeration_steps else p
        w = (p_eff - q) * num
        grad = 4.0 * ((np.diag(w.sum(axis=1)) - w) @ y)
        momentum = 0.5 if step < momentum_switch else 0.8
        velocity = momentum * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)
    return y


def write_embedding_csv(path, embedding, age_bins, sources):
    import csv
    emb = np.asarray(embedding)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "age_bin", "source", "x", "y"])
        for i, ((xx, yy), b, src) in enumerate(zip(emb, age_bins, sources)):
            w.writerow([i, int(b), src, f"{xx:.6f}", f"{yy:.6f}"])


def plot_embedding(path, embedding, age_bins, sources, title=""):
    """Scatter PNG, one panel per source, colored by age bin."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    emb = np.asarray(embedding)
    age_bins = np.asarray(age_bins)
    sources = np.asarray(sources)
    names = list(dict.fromkeys(sources.tolist()))
    fig, axes = plt.subplots(1, len(names), figsize=(5 * len(names), 4.5), squeeze=False)
    cmap = plt.get_cmap("viridis", int(age_bins.max()) + 1)
    for ax, name in zip(axes[0], names):
        mask = sources == name
        sc = ax.scatter(emb[mask, 0], emb[mask, 1], c=age_bins[mask], cmap=cmap,
                        s=14, vmin=0, vmax=int(age_bins.max()))
        ax.set_title(name)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(sc, ax=axes[0], label="age bin", shrink=0.85)
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
