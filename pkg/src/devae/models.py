"""Encoder/decoder assembly, model variants, and the per-batch training loss.

Four variants share one code path where they coincide:

* ``beta_vae``     - single latent space (the one-space special case).
* ``devae``        - hierarchical spaces connected by DiT rescalings.
* ``multi_space``  - independent symmetric encoders per space, no transform.
* ``his_linear``   - hierarchical spaces connected by full-matrix maps, which
                     deliberately break the correlation-preserving property.

A single decoder serves every space; for K >= 2 the space index is injected by
concatenating a one-hot indicator to the latent sample at the decoder input.
With K = 1 no indicator is concatenated, so a one-space ``devae`` is
arithmetically identical to ``beta_vae``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from devae.errors import ConfigurationError, NumericalAbort
from devae.hierarchy import (
    DiTChain,
    GaussianParams,
    HierarchyConfig,
    KLTerms,
    cascade_params,
    devae_loss,
    kl_chain,
    kl_standard,
    reparameterize,
)
from devae.nn import Tensor, conv2d, deconv2d, ops

__all__ = [
    "ModelVariant",
    "ArchitectureConfig",
    "Model",
    "LossBreakdown",
    "forward_loss",
    "linear_transition_apply",
]


class ModelVariant(str, Enum):
    BETA_VAE = "beta-vae"
    MULTI_SPACE = "multi-space"
    HIS_LINEAR = "his-linear"
    DEVAE = "devae"


# Fixed convolutional stack (kernel 4, stride 2, pad 1 throughout).
CONV_CHANNELS = (32, 32, 64, 64)
CONV_FC = 256
CONV_RESOLUTION = 64


@dataclass(frozen=True)
class ArchitectureConfig:
    """Encoder/decoder geometry.

    ``mlp`` works on any square resolution >= 8 with the given hidden widths;
    ``conv`` requires resolution 64 and uses the fixed four-layer stack.
    """

    kind: str = "mlp"
    widths: tuple[int, ...] = (128, 128)
    resolution: int = 16
    channels: int = 1
    latent_dim: int = 10

    def __post_init__(self):
        if self.kind not in ("mlp", "conv"):
            raise ConfigurationError(f"unknown architecture kind {self.kind!r}")
        if self.kind == "conv" and self.resolution != CONV_RESOLUTION:
            raise ConfigurationError(
                f"conv architecture requires resolution {CONV_RESOLUTION}, got {self.resolution}"
            )
        if self.kind == "mlp" and self.resolution < 8:
            raise ConfigurationError(f"mlp resolution must be >= 8, got {self.resolution}")
        if self.kind == "mlp" and not self.widths:
            raise ConfigurationError("mlp needs at least one hidden width")
        if self.latent_dim < 1:
            raise ConfigurationError(f"latent_dim must be positive, got {self.latent_dim}")

    @property
    def pixels(self) -> int:
        return self.channels * self.resolution * self.resolution


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


class _Layers:
    """Base for parameter-owning submodules; tracks (name, tensor) in order."""

    def __init__(self):
        self._params: list[tuple[str, Tensor]] = []

    def _add(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = True
        self._params.append((name, tensor))
        return tensor

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self._params)


class Encoder(_Layers):
    """Image batch -> diagonal-Gaussian parameters of latent space 0."""

    def __init__(self, arch: ArchitectureConfig, rng: np.random.Generator, tag: str = "enc"):
        super().__init__()
        self.arch = arch
        d = arch.latent_dim
        if arch.kind == "mlp":
            sizes = [arch.pixels, *arch.widths, 2 * d]
            self.weights = []
            self.biases = []
            for i, (nin, nout) in enumerate(zip(sizes, sizes[1:])):
                self.weights.append(self._add(f"{tag}.w{i}", Tensor(_fan_in_uniform(rng, nin, (nin, nout)))))
                self.biases.append(self._add(f"{tag}.b{i}", Tensor(np.zeros(nout))))
        else:
            self.kernels = []
            cin = arch.channels
            for i, cout in enumerate(CONV_CHANNELS):
                fan_in = cin * 16
                self.kernels.append(
                    self._add(f"{tag}.k{i}", Tensor(_fan_in_uniform(rng, fan_in, (cout, cin, 4, 4))))
                )
                cin = cout
            flat = CONV_CHANNELS[-1] * 4 * 4
            self.fc_w = [
                self._add(f"{tag}.fw0", Tensor(_fan_in_uniform(rng, flat, (flat, CONV_FC)))),
                self._add(f"{tag}.fw1", Tensor(_fan_in_uniform(rng, CONV_FC, (CONV_FC, 2 * d)))),
            ]
            self.fc_b = [
                self._add(f"{tag}.fb0", Tensor(np.zeros(CONV_FC))),
                self._add(f"{tag}.fb1", Tensor(np.zeros(2 * d))),
            ]

    def __call__(self, x: Tensor) -> GaussianParams:
        arch = self.arch
        if x.ndim != 4 or x.shape[1:] != (arch.channels, arch.resolution, arch.resolution):
            raise ConfigurationError(
                f"encoder expects [batch, {arch.channels}, {arch.resolution}, {arch.resolution}], got {x.shape}"
            )
        d = arch.latent_dim
        if arch.kind == "mlp":
            h = ops.reshape(x, (x.shape[0], arch.pixels))
            last = len(self.weights) - 1
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                h = ops.affine(h, w, b)
                if i < last:
                    h = ops.relu(h)
        else:
            h = x
            for k in self.kernels:
                h = ops.relu(conv2d(h, k))
            h = ops.reshape(h, (x.shape[0], CONV_CHANNELS[-1] * 16))
            h = ops.relu(ops.affine(h, self.fc_w[0], self.fc_b[0]))
            h = ops.affine(h, self.fc_w[1], self.fc_b[1])
        return GaussianParams(mean=ops.slice_cols(h, 0, d), logvar=ops.slice_cols(h, d, 2 * d))


class Decoder(_Layers):
    """Latent sample (+ optional space indicator) -> image logits.

    Input weights on the indicator columns start at zero so that all spaces
    decode identically until the conditioning is learned (coincident spaces
    at initialization).
    """

    def __init__(
        self, arch: ArchitectureConfig, in_dim: int, rng: np.random.Generator, indicator_dims: int = 0
    ):
        super().__init__()
        self.arch = arch
        self.in_dim = in_dim
        if arch.kind == "mlp":
            sizes = [in_dim, *reversed(arch.widths), arch.pixels]
            self.weights = []
            self.biases = []
            for i, (nin, nout) in enumerate(zip(sizes, sizes[1:])):
                self.weights.append(self._add(f"dec.w{i}", Tensor(_fan_in_uniform(rng, nin, (nin, nout)))))
                self.biases.append(self._add(f"dec.b{i}", Tensor(np.zeros(nout))))
        else:
            flat = CONV_CHANNELS[-1] * 4 * 4
            self.fc_w = [
                self._add("dec.fw0", Tensor(_fan_in_uniform(rng, in_dim, (in_dim, CONV_FC)))),
                self._add("dec.fw1", Tensor(_fan_in_uniform(rng, CONV_FC, (CONV_FC, flat)))),
            ]
            self.fc_b = [
                self._add("dec.fb0", Tensor(np.zeros(CONV_FC))),
                self._add("dec.fb1", Tensor(np.zeros(flat))),
            ]
            self.kernels = []
            chain = [CONV_CHANNELS[-1], 64, 32, 32, arch.channels]
            for i, (cin, cout) in enumerate(zip(chain, chain[1:])):
                fan_in = cin * 16
                self.kernels.append(
                    self._add(f"dec.k{i}", Tensor(_fan_in_uniform(rng, fan_in, (cin, cout, 4, 4))))
                )
        if indicator_dims:
            first = self.weights[0] if arch.kind == "mlp" else self.fc_w[0]
            first.data[in_dim - indicator_dims :, :] = 0.0

    def __call__(self, z: Tensor) -> Tensor:
        arch = self.arch
        if z.ndim != 2 or z.shape[1] != self.in_dim:
            raise ConfigurationError(f"decoder expects [batch, {self.in_dim}], got {z.shape}")
        batch = z.shape[0]
        if arch.kind == "mlp":
            h = z
            last = len(self.weights) - 1
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                h = ops.affine(h, w, b)
                if i < last:
                    h = ops.relu(h)
        else:
            h = ops.relu(ops.affine(z, self.fc_w[0], self.fc_b[0]))
            h = ops.relu(ops.affine(h, self.fc_w[1], self.fc_b[1]))
            h = ops.reshape(h, (batch, CONV_CHANNELS[-1], 4, 4))
            for i, k in enumerate(self.kernels):
                h = deconv2d(h, k)
                if i < len(self.kernels) - 1:
                    h = ops.relu(h)
        return ops.reshape(h, (batch, arch.channels, arch.resolution, arch.resolution))


def linear_transition_apply(params: GaussianParams, m1: Tensor, m2: Tensor) -> GaussianParams:
    """Full-matrix transition: mean' = M1 mean, logvar' = M2 logvar (columns mix)."""
    if m1.shape != m2.shape or m1.ndim != 2 or m1.shape[0] != m1.shape[1]:
        raise ConfigurationError(f"transition matrices must be square and matched: {m1.shape}, {m2.shape}")
    return GaussianParams(
        mean=ops.matmul(params.mean, ops.transpose(m1)),
        logvar=ops.matmul(params.logvar, ops.transpose(m2)),
    )


class Model:
    """A variant-specific assembly of encoders, decoder, and transitions."""

    def __init__(
        self,
        variant: ModelVariant,
        hierarchy: HierarchyConfig,
        arch: ArchitectureConfig,
        seed: int,
    ):
        variant = ModelVariant(variant)
        k = hierarchy.spaces
        if variant is ModelVariant.BETA_VAE and k != 1:
            raise ConfigurationError(f"beta-vae requires exactly one space, got {k}")
        if variant in (ModelVariant.MULTI_SPACE, ModelVariant.HIS_LINEAR) and k < 2:
            raise ConfigurationError(f"{variant.value} requires at least two spaces, got {k}")
        self.variant = variant
        self.hierarchy = hierarchy
        self.arch = arch
        self.seed = int(seed)

        from devae.rng import stream

        rng = stream(seed, "init")
        n_encoders = k if variant is ModelVariant.MULTI_SPACE else 1
        self.encoders = [
            Encoder(arch, rng, tag=f"enc{i}" if n_encoders > 1 else "enc")
            for i in range(n_encoders)
        ]
        indicator_dims = k if k >= 2 else 0
        self.decoder = Decoder(arch, arch.latent_dim + indicator_dims, rng, indicator_dims)
        self.chain: DiTChain | None = None
        self.linear_maps: list[tuple[Tensor, Tensor]] = []
        if variant is ModelVariant.DEVAE and k >= 2:
            self.chain = DiTChain.zeros(arch.latent_dim, k - 1)
        elif variant is ModelVariant.HIS_LINEAR:
            d = arch.latent_dim
            for _ in range(k - 1):
                m1 = Tensor(np.eye(d), requires_grad=True)
                m2 = Tensor(np.eye(d), requires_grad=True)
                self.linear_maps.append((m1, m2))

    @property
    def spaces(self) -> int:
        return self.hierarchy.spaces

    @property
    def latent_dim(self) -> int:
        return self.arch.latent_dim

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for enc in self.encoders:
            named.extend(enc.named_parameters())
        named.extend(self.decoder.named_parameters())
        if self.chain is not None:
            for i, (a, b) in enumerate(zip(self.chain.w1, self.chain.w2)):
                named.append((f"dit.w1_{i}", a))
                named.append((f"dit.w2_{i}", b))
        for i, (m1, m2) in enumerate(self.linear_maps):
            named.append((f"lin.m1_{i}", m1))
            named.append((f"lin.m2_{i}", m2))
        return named

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def encode(self, x, encoder_index: int = 0) -> GaussianParams:
        return self.encoders[encoder_index](ops.as_tensor(x))

    def space_params(self, params0: GaussianParams, i: int) -> GaussianParams:
        """Parameters of space i derived from space 0 (identity for i = 0)."""
        if i == 0:
            return params0
        if self.variant is ModelVariant.DEVAE:
            return cascade_params(params0, self.chain, i)
        if self.variant is ModelVariant.HIS_LINEAR:
            p = params0
            for m1, m2 in self.linear_maps[:i]:
                p = linear_transition_apply(p, m1, m2)
            return p
        raise ValueError(f"{self.variant.value} derives no space {i} from space 0")

    def posterior(self, x, space_i: int) -> GaussianParams:
        """Posterior parameters of space i for an image batch, any variant."""
        if self.variant is ModelVariant.MULTI_SPACE:
            return self.encode(x, encoder_index=space_i)
        return self.space_params(self.encode(x), space_i)

    def space_indicator(self, i: int, batch: int) -> Tensor:
        v = np.zeros((batch, self.spaces))
        v[:, i] = 1.0
        return Tensor(v)

    def decode(self, z: Tensor, space_i: int) -> Tensor:
        """Decode a latent sample, conditioning on the space index when K >= 2."""
        z = ops.as_tensor(z)
        if not 0 <= space_i < self.spaces:
            raise IndexError(f"space index {space_i} out of range")
        if self.spaces >= 2:
            z = ops.concat([z, self.space_indicator(space_i, z.shape[0])], axis=1)
        return self.decoder(z)


@dataclass
class LossBreakdown:
    """Everything the training loop and the metrics tracker need per batch."""

    total: Tensor
    recon_terms: list[Tensor]
    kl_terms: list[KLTerms]
    space_params: list[GaussianParams]

    @property
    def kl_totals(self) -> list[float]:
        return [k.total.item() for k in self.kl_terms]

    @property
    def recon_values(self) -> list[float]:
        return [r.item() for r in self.recon_terms]

    def kl_per_dim(self, i: int = 0) -> np.ndarray:
        return self.kl_terms[i].per_dim.data


def forward_loss(
    model: Model,
    x: np.ndarray,
    noise: np.ndarray,
    loss_kind: str = "bce",
    iteration: int | None = None,
) -> LossBreakdown:
    """One pass of the training objective over a batch.

    ``noise`` has shape [K, batch, d]: one standard-normal draw per space
    (pass identical rows for shared-noise ablations).
    """
    k = model.spaces
    x = np.asarray(x)
    if x.shape[0] == 0:
        raise ValueError("forward_loss needs a nonempty batch")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[0] != k:
        raise ConfigurationError(f"need {k} noise blocks, got {noise.shape[0]}")
    x_t = ops.as_tensor(x)
    recon_fn = ops.bce_with_logits if loss_kind == "bce" else ops.squared_error

    params0 = model.encode(x_t)
    recons: list[Tensor] = []
    kls: list[KLTerms] = []
    space_params: list[GaussianParams] = []
    for i in range(k):
        if model.variant is ModelVariant.MULTI_SPACE:
            params_i = model.encode(x_t, encoder_index=i)
        else:
            params_i = model.space_params(params0, i)
        z_i = reparameterize(params_i, noise[i])
        logits = model.decode(z_i, i)
        recons.append(recon_fn(logits, x_t))
        if model.variant is ModelVariant.DEVAE and model.chain is not None:
            kls.append(kl_chain(params0, model.chain, i))
        else:
            kls.append(kl_standard(params_i))
        space_params.append(params_i)

    total = devae_loss(recons, [kl.total for kl in kls], model.hierarchy.betas)
    if not np.isfinite(total.data):
        bad = [
            name
            for name, value in zip(
                [f"recon_{i}" for i in range(k)] + [f"kl_{i}" for i in range(k)],
                [r.item() for r in recons] + [kl.total.item() for kl in kls],
            )
            if not np.isfinite(value)
        ]
        raise NumericalAbort(
            f"non-finite loss at iteration {iteration}: {', '.join(bad) or 'total'}",
            iteration=iteration,
            term=",".join(bad),
        )
    return LossBreakdown(total=total, recon_terms=recons, kl_terms=kls, space_params=space_params)
