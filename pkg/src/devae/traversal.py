"""Latent traversals and prior sampling: qualitative views of a trained model.

A traversal sweeps one latent dimension across a range while the others stay
frozen at the values encoded from a seed image, then decodes every point. The
swept dimensions are the top-k by per-dimension KL (the dimensions actually
carrying information).
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from devae.config import RunConfig
from devae.data import FactorDataset
from devae.images import probabilities_to_gray, tile, write_pgm, write_ppm
from devae.metrics import collect_latents
from devae.models import Model
from devae.nn.ops import sigmoid_value
from devae.rng import stream

__all__ = ["top_kl_dimensions", "traverse", "sample_prior", "sprite_centroids"]

KL_ACTIVE_THRESHOLD = 0.01


def top_kl_dimensions(kl_per_dim: np.ndarray, top_k: int) -> list[int]:
    """Indices of the top-k dimensions by KL, skipping collapsed ones."""
    order = np.argsort(kl_per_dim)[::-1]
    alive = [int(j) for j in order if kl_per_dim[j] >= KL_ACTIVE_THRESHOLD]
    if len(alive) < top_k:
        warnings.warn(
            f"only {len(alive)} non-degenerate dimensions available (wanted {top_k})"
        )
    return alive[:top_k]


def _decode_probabilities(model: Model, z: np.ndarray, space_i: int, loss_kind: str) -> np.ndarray:
    logits = model.decode(z, space_i).data
    if loss_kind == "bce":
        return sigmoid_value(logits)
    return np.clip(logits, 0.0, 1.0)


def traverse(
    model: Model,
    dataset: FactorDataset,
    config: RunConfig,
    out_dir: str,
    space_i: int = 0,
    value_range: tuple[float, float] = (-2.0, 2.0),
    steps: int = 8,
    top_k: int = 5,
    n_seeds: int = 3,
) -> list[str]:
    """Emit one PGM grid per seed image: rows = swept dimensions, cols = steps.

    Returns the written paths. Non-traversed dimensions hold the seed image's
    encoded posterior mean.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = stream(config.seed, "traverse")
    tracked = collect_latents(
        model, dataset, space_i, n=min(2048, max(2, len(dataset))), rng=rng, representation="mean"
    )
    dims = top_kl_dimensions(tracked.kl_per_dim, top_k)
    if not dims:
        dims = [int(np.argmax(tracked.kl_per_dim))]
    values = np.linspace(value_range[0], value_range[1], steps)
    seed_indices = rng.integers(0, len(dataset), size=n_seeds)
    base = model.posterior(dataset.batch(seed_indices), space_i).mean.data

    paths = []
    comments = (config.to_text(), f"space = {space_i}", f"dims = {dims}")
    for s in range(n_seeds):
        grid = np.empty((len(dims), steps, dataset.resolution, dataset.resolution))
        for row, dim in enumerate(dims):
            z = np.repeat(base[s : s + 1], steps, axis=0)
            z[:, dim] = values
            probs = _decode_probabilities(model, z, space_i, config.loss)
            grid[row] = probs[:, 0]
        path = os.path.join(out_dir, f"traversal_seed{s}.pgm")
        write_pgm(path, probabilities_to_gray(tile(grid)), comments=comments)
        paths.append(path)
    return paths


def sample_prior(
    model: Model, config: RunConfig, out_dir: str, n: int, space_i: int = 0
) -> list[str]:
    """Decode n unit-normal latent draws and emit one PGM per sample."""
    os.makedirs(out_dir, exist_ok=True)
    if n == 0:
        return []
    rng = stream(config.seed, "prior")
    z = rng.standard_normal((n, model.latent_dim))
    probs = _decode_probabilities(model, z, space_i, config.loss)
    paths = []
    for i in range(n):
        path = os.path.join(out_dir, f"sample_{i:04d}.pgm")
        write_pgm(path, probabilities_to_gray(probs[i, 0]), comments=(config.to_text(),))
        paths.append(path)
    return paths


def sprite_centroids(probabilities: np.ndarray) -> np.ndarray:
    """Intensity-weighted centroid (x, y) of each [h, w] image in a stack."""
    probs = np.asarray(probabilities, dtype=np.float64)
    h, w = probs.shape[-2:]
    flat = probs.reshape(-1, h, w)
    mass = flat.sum(axis=(1, 2))
    ys = (flat.sum(axis=2) * np.arange(h)).sum(axis=1)
    xs = (flat.sum(axis=1) * np.arange(w)).sum(axis=1)
    mass = np.where(mass == 0, 1.0, mass)
    return np.stack([xs / mass, ys / mass], axis=1)
