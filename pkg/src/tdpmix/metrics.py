"""Evaluation metrics: Rand index, within-cluster alignment score,
mean pixelwise entropy (bits) and the per-step standard-deviation score."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AlignmentScore",
    "rand_index",
    "alignment_score",
    "mean_pixel_entropy",
    "stddev_score",
]


@dataclass(frozen=True)
class AlignmentScore:
    """Mean / std / standard error of pairwise within-cluster distances."""

    mean: float
    std: float
    stderr: float
    pair_count: int


def rand_index(pred, truth):
    """Fraction of item pairs on which two labelings agree.

    A pair agrees if it is co-clustered in both labelings or separated in
    both. Invariant to label renaming; always in [0, 1].
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("pred and truth must be equal-length 1D label lists")
    n = pred.size
    if n < 2:
        raise ValueError("need at least 2 items")
    same_pred = pred[:, None] == pred[None, :]
    same_truth = truth[:, None] == truth[None, :]
    iu = np.triu_indices(n, k=1)
    agree = same_pred[iu] == same_truth[iu]
    return float(np.mean(agree))


def alignment_score(aligned, z):
    """Euclidean distances over all within-cluster pairs of aligned items.

    stderr is std / sqrt(pair count); a single pair yields std 0, stderr 0.
    """
    aligned = np.asarray(aligned, dtype=float)
    z = np.asarray(z)
    if aligned.shape[0] != z.size:
        raise ValueError("aligned items and assignments disagree in length")
    dists = []
    for label in np.unique(z):
        members = aligned[z == label]
        m = members.shape[0]
        if m < 2:
            continue
        diff = members[:, None, :] - members[None, :, :]
        dmat = np.sqrt(np.sum(diff * diff, axis=2))
        iu = np.triu_indices(m, k=1)
        dists.append(dmat[iu])
    if not dists:
        raise ValueError("no cluster has two or more members")
    dists = np.concatenate(dists)
    npairs = dists.size
    std = float(np.std(dists, ddof=1)) if npairs > 1 else 0.0
    stderr = std / np.sqrt(npairs) if npairs > 1 else 0.0
    return AlignmentScore(float(np.mean(dists)), std, stderr, int(npairs))


def mean_pixel_entropy(images):
    """Mean over pixels of the binary entropy (bits) of the pixel means."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 2:
        raise ValueError("expected a (n_images, n_pixels) array")
    if np.any(images < 0) or np.any(images > 1):
        raise ValueError("pixel values must lie in [0, 1]")
    p = np.mean(images, axis=0)
    ent = np.zeros_like(p)
    inner = (p > 0) & (p < 1)
    q = p[inner]
    ent[inner] = -q * np.log2(q) - (1 - q) * np.log2(1 - q)
    return float(np.mean(ent))


def stddev_score(curves):
    """Sum over time steps of the population standard deviation across curves."""
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 2:
        raise ValueError("expected >= 2 equal-length curves")
    return float(np.sum(np.std(curves, axis=0)))
