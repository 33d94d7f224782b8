"""Disentanglement and reconstruction evaluation.

The estimation pipeline: sample images, push them through the encoder cascade
to a latent space, discretize each latent dimension into 20 equal-width bins
over its sampled range, and estimate mutual information with the ground-truth
factors from the joint 2-D histogram (plug-in, natural log). Equal-width
binning over the sampled range is invariant under positive per-dimension
rescaling of the latents, so every histogram-MI score (MIG, NMI) is too; DCI
standardizes latents before regression and inherits the same invariance.

Disentanglement scores default to the posterior-mean representation. Means
transform across spaces by exactly the per-dimension positive scaling the
cascade applies, which is what makes per-space scores of a DiT hierarchy
identical rather than merely close. Sampled-z collection (fresh posterior
noise per image) is available via ``representation="sample"``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from devae.data import FactorDataset, sample_fixed_factor_batch
from devae.errors import DataError
from devae.models import Model
from devae.nn.ops import bce_with_logits_value, squared_error_value

__all__ = [
    "MetricUndefined",
    "LatentSampleSet",
    "collect_latents",
    "discretize",
    "discrete_entropy",
    "mutual_info_discrete",
    "mig",
    "nmi_track",
    "dci_disentanglement",
    "factor_vae_score",
    "reconstruction_error",
    "representation_fn",
    "SpaceMetrics",
    "MetricsReport",
    "evaluate_model",
]

DEFAULT_SAMPLES = 10_000
DEFAULT_BINS = 20
FACTOR_VAE_VOTES = 800
FACTOR_VAE_BATCH = 100
KL_PRUNE_THRESHOLD = 0.01


class MetricUndefined(Exception):
    """The metric has no value for this representation (e.g. all dims pruned)."""


@dataclass
class LatentSampleSet:
    """Aggregated posterior samples aligned with ground-truth factor labels."""

    z: np.ndarray  # [n, d]
    labels: np.ndarray  # [n, F]
    kl_per_dim: np.ndarray  # [d]
    representation: str = "sample"
    with_replacement: bool = False

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def dim(self) -> int:
        return self.z.shape[1]

    @property
    def num_factors(self) -> int:
        return self.labels.shape[1]


def _encode_space(model: Model, dataset: FactorDataset, indices, space_i: int, chunk: int = 512):
    means, logvars = [], []
    indices = np.asarray(indices)
    for start in range(0, len(indices), chunk):
        x = dataset.batch(indices[start : start + chunk])
        p = model.posterior(x, space_i)
        means.append(p.mean.data)
        logvars.append(p.logvar.data)
    return np.concatenate(means, axis=0), np.concatenate(logvars, axis=0)


def representation_fn(model: Model, space_i: int):
    """images -> posterior means of space i, as a plain array function."""

    def represent(images: np.ndarray) -> np.ndarray:
        return model.posterior(images, space_i).mean.data

    return represent


def collect_latents(
    model: Model,
    dataset: FactorDataset,
    space_i: int,
    n: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    representation: str = "sample",
) -> LatentSampleSet:
    """Draw n images uniformly and collect space-i latents with their labels.

    ``representation="sample"`` draws z ~ q(z|x) through the cascade;
    ``"mean"`` records the posterior mean. If n exceeds the dataset size the
    draw falls back to sampling with replacement (flagged on the result).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if representation not in ("sample", "mean"):
        raise ValueError(f"unknown representation {representation!r}")
    replace = n > len(dataset)
    if replace:
        indices = rng.integers(0, len(dataset), size=n)
    else:
        indices = rng.choice(len(dataset), size=n, replace=False)
    mean, logvar = _encode_space(model, dataset, indices, space_i)
    if representation == "sample":
        z = mean + np.exp(logvar / 2.0) * rng.standard_normal(mean.shape)
    else:
        z = mean
    kl_per_dim = 0.5 * (mean**2 + np.exp(logvar) - 1.0 - logvar).mean(axis=0)
    return LatentSampleSet(
        z=z,
        labels=dataset.labels[indices].copy(),
        kl_per_dim=kl_per_dim,
        representation=representation,
        with_replacement=replace,
    )


# ---------------------------------------------------------------------------
# Discretization and plug-in information quantities
# ---------------------------------------------------------------------------


def discretize(column: np.ndarray, bins: int = DEFAULT_BINS) -> tuple[np.ndarray, bool]:
    """Equal-width binning over [min, max] of the column.

    Returns (codes in 0..bins-1, degenerate flag). The maximum lands in the
    last bin; a constant column maps to bin 0 and is flagged degenerate.
    """
    column = np.asarray(column, dtype=np.float64)
    if column.ndim != 1 or column.size < 2:
        raise ValueError(f"discretize needs a 1-D column with n >= 2, got shape {column.shape}")
    lo, hi = column.min(), column.max()
    if hi == lo:
        return np.zeros(column.size, dtype=np.int64), True
    codes = np.floor((column - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(codes, 0, bins - 1, out=codes)
    return codes, False


def discrete_entropy(codes: np.ndarray) -> float:
    """Plug-in entropy in nats from empirical symbol counts."""
    _, counts = np.unique(np.asarray(codes), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_info_discrete(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information (nats) from the joint 2-D histogram."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need matching 1-D code vectors, got {a.shape} and {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    joint = np.bincount(ai * kb + bi, minlength=ka * kb).reshape(ka, kb)
    n = a.size
    na = joint.sum(axis=1)
    nb = joint.sum(axis=0)
    nz = joint > 0
    # ratio n_ij * n / (n_i * n_j) stays exact in float64 for n <= ~1e5,
    # so exactly independent tables contribute exactly zero.
    ratio = (joint[nz].astype(np.float64) * n) / np.outer(na, nb)[nz]
    return float(((joint[nz] / n) * np.log(ratio)).sum())


def _mi_matrix(samples: LatentSampleSet, bins: int) -> np.ndarray:
    """MI between every discretized latent dimension and every factor."""
    codes = [discretize(samples.z[:, j], bins)[0] for j in range(samples.dim)]
    out = np.zeros((samples.dim, samples.num_factors))
    for k in range(samples.num_factors):
        labels = samples.labels[:, k]
        for j in range(samples.dim):
            out[j, k] = mutual_info_discrete(codes[j], labels)
    return out


def mig(samples: LatentSampleSet, bins: int = DEFAULT_BINS) -> float:
    """Mutual information gap, averaged over factors with positive entropy."""
    if samples.dim < 2:
        raise ValueError("the information gap needs at least two latent dimensions")
    m = _mi_matrix(samples, bins)
    gaps = []
    for k in range(samples.num_factors):
        h = discrete_entropy(samples.labels[:, k])
        if h == 0.0:
            warnings.warn(f"factor {k} is constant in the sample; excluded from the gap")
            continue
        top = np.sort(m[:, k])[::-1]
        gaps.append((top[0] - top[1]) / h)
    if not gaps:
        raise MetricUndefined("every factor had zero entropy")
    return float(np.mean(gaps))


def nmi_track(
    samples: LatentSampleSet, bins: int = DEFAULT_BINS
) -> tuple[np.ndarray, np.ndarray, int]:
    """Normalized MI matrix [d, F] plus the row of the highest-KL dimension."""
    m = _mi_matrix(samples, bins)
    entropies = np.array([discrete_entropy(samples.labels[:, k]) for k in range(samples.num_factors)])
    safe = np.where(entropies == 0.0, 1.0, entropies)
    nmi = m / safe
    nmi[:, entropies == 0.0] = 0.0
    top_dim = int(np.argmax(samples.kl_per_dim))
    return nmi, nmi[top_dim], top_dim


# ---------------------------------------------------------------------------
# Regression-importance disentanglement
# ---------------------------------------------------------------------------


def dci_disentanglement(samples: LatentSampleSet, ridge_scale: float = 1e-3) -> float:
    """Entropy-based score over a ridge-regression importance matrix.

    Latents and targets are both standardized, each factor is regressed on
    the latents, and importance is the absolute (standardized) coefficient,
    comparable across factors of different cardinality. Per-dimension
    disentanglement is one minus the entropy (log base F) of the dimension's
    normalized importance row; the overall score weights dimensions by total
    importance. All-zero rows (constant latents) are excluded from the
    weighting.
    """
    if samples.num_factors < 2:
        raise ValueError("importance entropy needs at least two factors")
    z = samples.z
    std = z.std(axis=0)
    active = std > 0
    if not active.any():
        raise MetricUndefined("every latent dimension is constant")
    x = (z[:, active] - z[:, active].mean(axis=0)) / std[active]
    n, da = x.shape
    f = samples.num_factors
    gram = x.T @ x + ridge_scale * n * np.eye(da)
    importance = np.zeros((samples.dim, f))
    for k in range(f):
        y = samples.labels[:, k].astype(np.float64)
        y_std = y.std()
        if y_std == 0.0:
            continue  # constant factor carries no importance
        coef = np.linalg.solve(gram, x.T @ ((y - y.mean()) / y_std))
        importance[active, k] = np.abs(coef)
    row_sums = importance.sum(axis=1)
    informative = row_sums > 0
    if not informative.any():
        raise MetricUndefined("importance matrix is identically zero")
    p = importance[informative] / row_sums[informative, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    entropy = -plogp.sum(axis=1) / np.log(f)
    per_dim = 1.0 - entropy
    weights = row_sums[informative] / row_sums[informative].sum()
    return float((weights * per_dim).sum())


# ---------------------------------------------------------------------------
# Fixed-factor majority-vote classification
# ---------------------------------------------------------------------------


def factor_vae_score(
    represent,
    dataset: FactorDataset,
    rng: np.random.Generator,
    votes: int = FACTOR_VAE_VOTES,
    batch: int = FACTOR_VAE_BATCH,
    kl_per_dim: np.ndarray | None = None,
    kl_threshold: float = KL_PRUNE_THRESHOLD,
    std_samples: int = DEFAULT_SAMPLES,
) -> float:
    """Majority-vote accuracy of predicting the fixed factor from the
    lowest-variance latent dimension.

    Dimensions with per-dimension KL below ``kl_threshold`` are pruned first
    (collapsed dimensions would win every argmin); without a KL vector,
    zero-variance dimensions are pruned instead. Factors of cardinality 1 are
    skipped with a warning.
    """
    ref_idx = rng.integers(0, len(dataset), size=std_samples)
    z_ref = represent(dataset.batch(ref_idx))
    global_std = z_ref.std(axis=0)
    if kl_per_dim is not None:
        active = np.asarray(kl_per_dim) >= kl_threshold
    else:
        active = global_std > 0
    active &= global_std > 0
    if not active.any():
        raise MetricUndefined("all latent dimensions pruned; the vote is undefined")
    usable = [k for k, card in enumerate(dataset.cardinalities) if card >= 2]
    skipped = [k for k in range(dataset.num_factors) if k not in usable]
    if skipped:
        warnings.warn(f"factors {skipped} have cardinality 1 and are skipped")
    if not usable:
        raise MetricUndefined("no factor has cardinality >= 2")

    active_idx = np.flatnonzero(active)
    tally = np.zeros((dataset.num_factors, len(active_idx)), dtype=np.int64)
    for _ in range(votes):
        k = usable[int(rng.integers(0, len(usable)))]
        images, _, _ = sample_fixed_factor_batch(dataset, k, batch, rng)
        z = represent(images)[:, active_idx] / global_std[active_idx]
        tally[k, int(np.argmin(z.var(axis=0)))] += 1
    winners = tally.argmax(axis=0)
    correct = tally[winners, np.arange(len(active_idx))].sum()
    return float(correct / tally.sum())


# ---------------------------------------------------------------------------
# Reconstruction error
# ---------------------------------------------------------------------------


def reconstruction_error(
    model: Model,
    dataset: FactorDataset,
    space_i: int,
    n_eval: int = 2048,
    rng: np.random.Generator | None = None,
    loss_kind: str = "bce",
    chunk: int = 256,
) -> float:
    """Mean per-sample pixel-summed loss, decoding the posterior mean of space i."""
    if rng is None:
        rng = np.random.default_rng(0)
    n_eval = min(n_eval, len(dataset))
    indices = rng.choice(len(dataset), size=n_eval, replace=False)
    value_fn = bce_with_logits_value if loss_kind == "bce" else squared_error_value
    total = 0.0
    for start in range(0, n_eval, chunk):
        batch_idx = indices[start : start + chunk]
        x = dataset.batch(batch_idx)
        p = model.posterior(x, space_i)
        logits = model.decode(p.mean, space_i)
        total += value_fn(logits.data, x) * len(batch_idx)
    return total / n_eval


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


@dataclass
class SpaceMetrics:
    mig: float
    dci_disentanglement: float
    factor_vae_score: float | None
    recon_error: float
    note: str = ""


@dataclass
class MetricsReport:
    """Per-space scores plus per-dimension KL and the space-0 NMI matrix."""

    spaces: list[SpaceMetrics]
    kl_per_dim: list[list[float]]
    nmi: list[list[float]]
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "spaces": [vars(s) for s in self.spaces],
            "kl_per_dim": self.kl_per_dim,
            "nmi": self.nmi,
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        payload = json.loads(text)
        return cls(
            spaces=[SpaceMetrics(**s) for s in payload["spaces"]],
            kl_per_dim=payload["kl_per_dim"],
            nmi=payload["nmi"],
            metadata=payload["metadata"],
        )


def evaluate_model(
    model: Model,
    dataset: FactorDataset,
    seed: int,
    n_samples: int = DEFAULT_SAMPLES,
    bins: int = DEFAULT_BINS,
    votes: int = FACTOR_VAE_VOTES,
    fv_batch: int = FACTOR_VAE_BATCH,
    kl_threshold: float = KL_PRUNE_THRESHOLD,
    recon_samples: int = 2048,
    loss_kind: str = "bce",
    representation: str = "mean",
) -> MetricsReport:
    """Score every latent space of a model against a labeled dataset."""
    from devae.rng import stream

    spaces = []
    kl_rows = []
    nmi_matrix: np.ndarray | None = None
    # Streams are re-created identically for every space so per-space scores
    # are computed over the same image draw (the comparison Table-2-style
    # reports make is only meaningful on a common sample).
    for i in range(model.spaces):
        samples = collect_latents(
            model, dataset, i, n=n_samples, rng=stream(seed, "eval-latents"),
            representation=representation,
        )
        note = ""
        try:
            fv = factor_vae_score(
                representation_fn(model, i),
                dataset,
                stream(seed, "eval-votes"),
                votes=votes,
                batch=fv_batch,
                kl_per_dim=samples.kl_per_dim,
                kl_threshold=kl_threshold,
            )
        except (MetricUndefined, DataError) as exc:
            fv = None
            note = str(exc)
        spaces.append(
            SpaceMetrics(
                mig=mig(samples, bins),
                dci_disentanglement=dci_disentanglement(samples),
                factor_vae_score=fv,
                recon_error=reconstruction_error(
                    model, dataset, i, n_eval=recon_samples,
                    rng=stream(seed, "eval-recon"), loss_kind=loss_kind,
                ),
                note=note,
            )
        )
        kl_rows.append([float(v) for v in samples.kl_per_dim])
        if i == 0:
            nmi_matrix, _, _ = nmi_track(samples, bins)
    return MetricsReport(
        spaces=spaces,
        kl_per_dim=kl_rows,
        nmi=[[float(v) for v in row] for row in nmi_matrix],
        metadata={
            "n_samples": n_samples,
            "bins": bins,
            "votes": votes,
            "fv_batch": fv_batch,
            "kl_threshold": kl_threshold,
            "representation": representation,
            "regressor": "ridge-on-standardized-latents",
            "encoding_for_scores": "posterior means",
        },
    )
