"""Hierarchical diagonal-Gaussian latent spaces.

Space 0 comes from the encoder; each following space is derived by a
disentanglement-invariant transform (DiT): a learnable positive diagonal
rescaling of means and standard deviations,

    mean_{i+1}   = exp(w1_i) * mean_i
    std_{i+1}    = exp(w2_i) * std_i     (logvar_{i+1} = logvar_i + 2 w2_i)

Positivity comes for free from the exponential; storing log-variance makes the
std rescaling additive. The per-space KL against the unit-normal prior is
available in two forms: the standard closed form on a space's own parameters,
and a chained form written directly in space-0 parameters plus cumulative
log-scales. The two must agree (a core consistency check).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from devae.errors import ConfigurationError
from devae.nn import Tensor, ops

__all__ = [
    "GaussianParams",
    "DiTChain",
    "HierarchyConfig",
    "reparameterize",
    "dit_apply",
    "cascade_params",
    "KLTerms",
    "kl_standard",
    "kl_chain",
    "devae_loss",
    "correlation_matrix",
]


@dataclass
class GaussianParams:
    """Batched diagonal-Gaussian parameters: mean and log-variance, [batch, d]."""

    mean: Tensor
    logvar: Tensor

    def __post_init__(self):
        if self.mean.shape != self.logvar.shape:
            raise ConfigurationError(
                f"mean/logvar shape mismatch: {self.mean.shape} vs {self.logvar.shape}"
            )

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @classmethod
    def from_arrays(cls, mean, logvar) -> "GaussianParams":
        return cls(Tensor(np.atleast_2d(mean)), Tensor(np.atleast_2d(logvar)))


class DiTChain:
    """K-1 pairs of learnable log-scale vectors connecting K latent spaces."""

    def __init__(self, w1: list[Tensor], w2: list[Tensor]):
        if len(w1) != len(w2):
            raise ConfigurationError("w1/w2 chains must have equal length")
        for a, b in zip(w1, w2):
            if a.shape != b.shape or a.ndim != 1:
                raise ConfigurationError("chain entries must be matching 1-D vectors")
        self.w1 = w1
        self.w2 = w2

    @classmethod
    def zeros(cls, dim: int, transitions: int) -> "DiTChain":
        """Identity initialization: all spaces start coincident."""
        make = lambda: Tensor(np.zeros(dim), requires_grad=True)
        return cls([make() for _ in range(transitions)], [make() for _ in range(transitions)])

    def __len__(self) -> int:
        return len(self.w1)

    def parameters(self) -> list[Tensor]:
        return [*self.w1, *self.w2]


@dataclass(frozen=True)
class HierarchyConfig:
    """Number of latent spaces and their bottleneck pressures."""

    spaces: int
    betas: tuple[float, ...]

    def __post_init__(self):
        if self.spaces < 1:
            raise ConfigurationError(f"need at least one latent space, got {self.spaces}")
        if len(self.betas) != self.spaces:
            raise ConfigurationError(
                f"{self.spaces} spaces but {len(self.betas)} pressures: {self.betas}"
            )
        if any(b <= 0 for b in self.betas):
            raise ConfigurationError(f"pressures must be positive: {self.betas}")
        # Decreasing pressure along the cascade defeats the design (capacity
        # must shrink space by space); equal neighbors are allowed so pressure
        # sweeps can include the degenerate endpoint.
        if any(b1 < b0 for b0, b1 in zip(self.betas, self.betas[1:])):
            raise ConfigurationError(f"pressures must be non-decreasing: {self.betas}")

    @classmethod
    def default_two_space(cls) -> "HierarchyConfig":
        return cls(2, (1.0, 40.0))


def reparameterize(params: GaussianParams, noise: np.ndarray) -> Tensor:
    """z = mean + exp(logvar / 2) * noise, differentiable in mean and logvar."""
    std = ops.exp(params.logvar * 0.5)
    return params.mean + std * ops.as_tensor(noise)


def dit_apply(params: GaussianParams, w1: Tensor, w2: Tensor) -> GaussianParams:
    """One transition: rescale means by exp(w1) and stds by exp(w2)."""
    return GaussianParams(mean=params.mean * ops.exp(w1), logvar=params.logvar + w2 * 2.0)


def _cumulative(chain: DiTChain, i: int) -> tuple[Tensor, Tensor]:
    s1, s2 = chain.w1[0], chain.w2[0]
    for j in range(1, i):
        s1 = s1 + chain.w1[j]
        s2 = s2 + chain.w2[j]
    return s1, s2


def cascade_params(params0: GaussianParams, chain: DiTChain, i: int) -> GaussianParams:
    """Parameters of space i from space 0 via summed log-scales; i = 0 is identity."""
    if not 0 <= i <= len(chain):
        raise IndexError(f"space index {i} out of range for a {len(chain) + 1}-space hierarchy")
    if i == 0:
        return params0
    s1, s2 = _cumulative(chain, i)
    return dit_apply(params0, s1, s2)


@dataclass
class KLTerms:
    """Per-dimension KL (batch-averaged) and its sum over dimensions."""

    per_dim: Tensor
    total: Tensor


def kl_standard(params: GaussianParams) -> KLTerms:
    """KL(N(mean, exp(logvar)) || N(0, 1)) per dimension: mean over batch, sum over dims.

    Closed form per element: (mu^2 + sigma^2 - 1 - log sigma^2) / 2.
    """
    elem = (params.mean * params.mean + ops.exp(params.logvar) - 1.0 - params.logvar) * 0.5
    per_dim = elem.mean(axis=0)
    return KLTerms(per_dim=per_dim, total=per_dim.sum())


def kl_chain(params0: GaussianParams, chain: DiTChain, i: int) -> KLTerms:
    """KL of space i expressed through space-0 parameters and cumulative log-scales.

    Independent of :func:`cascade_params`; must agree with
    ``kl_standard(cascade_params(params0, chain, i))`` to ~1e-9. Returns the
    nonnegative KL (the quantity the objective penalizes).
    """
    if not 0 <= i <= len(chain):
        raise IndexError(f"space index {i} out of range for a {len(chain) + 1}-space hierarchy")
    if i == 0:
        return kl_standard(params0)
    s1, s2 = _cumulative(chain, i)
    logvar_i = s2 * 2.0 + params0.logvar
    elem = (
        ops.exp(s1 * 2.0) * (params0.mean * params0.mean)
        + ops.exp(logvar_i)
        - 1.0
        - logvar_i
    ) * 0.5
    per_dim = elem.mean(axis=0)
    return KLTerms(per_dim=per_dim, total=per_dim.sum())


def devae_loss(recon_terms: list[Tensor], kl_terms: list[Tensor], betas) -> Tensor:
    """Minimized objective: sum of reconstruction terms plus pressure-weighted KLs."""
    if not (len(recon_terms) == len(kl_terms) == len(betas)):
        raise ValueError(
            f"term count mismatch: {len(recon_terms)} recon, {len(kl_terms)} KL, {len(betas)} betas"
        )
    total = recon_terms[0] + kl_terms[0] * float(betas[0])
    for r, k, b in zip(recon_terms[1:], kl_terms[1:], betas[1:]):
        total = total + r + k * float(b)
    return total


def correlation_matrix(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlations between latent dimensions of samples z[n, d].

    Returns (rho, degenerate) where degenerate flags zero-variance dimensions;
    their rows/columns are reported as 0. The diagonal is exactly 1 for
    non-degenerate dimensions. Invariant under positive diagonal rescaling of
    the columns.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError(f"need a 2-D sample matrix with n >= 2, got shape {z.shape}")
    centered = z - z.mean(axis=0)
    std = np.sqrt((centered * centered).mean(axis=0))
    degenerate = std == 0.0
    safe_std = np.where(degenerate, 1.0, std)
    cov = centered.T @ centered / z.shape[0]
    rho = cov / np.outer(safe_std, safe_std)
    rho[degenerate, :] = 0.0
    rho[:, degenerate] = 0.0
    idx = np.arange(z.shape[1])
    rho[idx[~degenerate], idx[~degenerate]] = 1.0
    return rho, degenerate
