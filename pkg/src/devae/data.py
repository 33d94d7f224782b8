"""Procedural factor-labeled sprite dataset.

Images are rendered by a center-of-pixel inside-test of a rotated, scaled,
translated implicit region (square / ellipse / heart), which makes generation
fully deterministic: same specs, same bits. All factor values live on strictly
increasing grids; the dataset is the exhaustive Cartesian product of the
grids, with the label row uniquely indexing its image.

Canvas coordinates are [0, 1]^2; positions and scales are fractions of the
canvas. Recognized factor names: shape, scale, orientation, pos_x, pos_y.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from devae.errors import ConfigurationError, DataError

__all__ = [
    "SHAPE_NAMES",
    "FactorSpec",
    "FactorDataset",
    "render_sprite",
    "generate_dataset",
    "dataset_size",
    "sample_fixed_factor_batch",
    "save_dataset",
    "load_dataset",
    "toy_default_specs",
    "dsprites_like_specs",
    "parse_spec_string",
]

SHAPE_NAMES = ("square", "ellipse", "heart")
FACTOR_NAMES = ("shape", "scale", "orientation", "pos_x", "pos_y")

# Defaults used when a factor is absent from the spec list.
DEFAULTS = {"shape": 0.0, "scale": 0.3, "orientation": 0.0, "pos_x": 0.5, "pos_y": 0.5}

MAX_IMAGES = 1_000_000


@dataclass(frozen=True)
class FactorSpec:
    """One generative factor: its name, cardinality and value grid."""

    name: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.name not in FACTOR_NAMES:
            raise ConfigurationError(f"unknown factor {self.name!r}; expected one of {FACTOR_NAMES}")
        if len(self.values) < 1:
            raise ConfigurationError(f"factor {self.name} needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigurationError(f"factor {self.name} grid must be strictly increasing")
        if self.name == "shape" and any(
            v != int(v) or not 0 <= int(v) < len(SHAPE_NAMES) for v in self.values
        ):
            raise ConfigurationError(f"shape values must be integer indices into {SHAPE_NAMES}")

    @property
    def cardinality(self) -> int:
        return len(self.values)

    @classmethod
    def uniform(cls, name: str, cardinality: int, lo: float, hi: float) -> "FactorSpec":
        if cardinality == 1:
            return cls(name, (float((lo + hi) / 2.0),))
        return cls(name, tuple(np.linspace(lo, hi, cardinality)))


@dataclass
class FactorDataset:
    """Exhaustive grid of rendered sprites with ground-truth factor labels.

    Images are stored as uint8 in {0, 1}; :meth:`batch` exposes float64 in
    [0, 1] with a channel axis.
    """

    images: np.ndarray  # [N, h, w] uint8
    labels: np.ndarray  # [N, F] int32
    specs: list[FactorSpec]
    resolution: int
    channels: int = 1
    _strides: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cards = [s.cardinality for s in self.specs]
        strides = np.ones(len(cards), dtype=np.int64)
        for i in range(len(cards) - 2, -1, -1):
            strides[i] = strides[i + 1] * cards[i + 1]
        self._strides = strides

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def num_factors(self) -> int:
        return len(self.specs)

    @property
    def cardinalities(self) -> list[int]:
        return [s.cardinality for s in self.specs]

    def index_of(self, label_row: np.ndarray) -> int:
        """Flat dataset index of a label tuple (row-major factor order)."""
        return int(np.dot(np.asarray(label_row, dtype=np.int64), self._strides))

    def indices_of(self, label_rows: np.ndarray) -> np.ndarray:
        return np.asarray(label_rows, dtype=np.int64) @ self._strides

    def batch(self, indices) -> np.ndarray:
        """Float images [len(indices), channels, h, w] with values in [0, 1]."""
        imgs = self.images[np.asarray(indices)]
        return imgs[:, None, :, :].astype(np.float64)

    def pixels_per_image(self) -> int:
        return self.channels * self.resolution * self.resolution


def _inside(shape_name: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Membership test in shape-local coordinates (unit half-extent box)."""
    if shape_name == "square":
        return np.maximum(np.abs(u), np.abs(v)) <= 1.0
    if shape_name == "ellipse":
        return u * u + (2.0 * v) * (2.0 * v) <= 1.0
    if shape_name == "heart":
        # Classic sextic heart region, scaled to roughly fill the unit box,
        # with v up so the point faces down.
        x = 1.3 * u
        y = 1.3 * v + 0.25
        a = x * x + y * y - 1.0
        return a * a * a - x * x * y * y * y <= 0.0
    raise ConfigurationError(f"unknown shape {shape_name!r}")


def render_sprite(
    shape: str,
    scale: float,
    orientation: float,
    pos_x: float,
    pos_y: float,
    resolution: int,
    cos_t: float | None = None,
    sin_t: float | None = None,
) -> np.ndarray:
    """Rasterize one sprite to a binary uint8 image via center-of-pixel tests.

    cos_t/sin_t may be supplied precomputed (one rounding per orientation grid
    value) so bulk generation has a single fixed rounding of the rotation.
    """
    if scale <= 0:
        raise ConfigurationError(f"scale must be positive, got {scale}")
    if cos_t is None:
        cos_t = float(np.cos(orientation))
    if sin_t is None:
        sin_t = float(np.sin(orientation))
    centers = (np.arange(resolution, dtype=np.float64) + 0.5) / resolution
    px = centers[None, :]  # column -> x
    py = centers[:, None]  # row -> y
    dx = px - pos_x
    dy = py - pos_y
    # Rotate into the shape frame, y up, then normalize by the half-extent.
    u = (cos_t * dx + sin_t * dy) / (scale / 2.0)
    v = (sin_t * dx - cos_t * dy) / (scale / 2.0)
    return _inside(shape, u, v).astype(np.uint8)


def dataset_size(specs: list[FactorSpec]) -> int:
    n = 1
    for s in specs:
        n *= s.cardinality
    return n


def generate_dataset(specs: list[FactorSpec], resolution: int, seed: int = 0) -> FactorDataset:
    """Render the exhaustive Cartesian product of the factor grids.

    Labels are in row-major factor order (last factor fastest). ``seed`` is
    recorded for provenance only; generation itself is deterministic.
    """
    if resolution < 4:
        raise ConfigurationError(f"resolution must be at least 4, got {resolution}")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate factor names: {names}")
    n = dataset_size(specs)
    if n > MAX_IMAGES:
        raise ConfigurationError(f"{n} images exceed the {MAX_IMAGES} budget")

    cards = [s.cardinality for s in specs]
    grids = np.meshgrid(*[np.arange(c) for c in cards], indexing="ij")
    labels = np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int32)

    # One rounding of each orientation's rotation, reused for every tuple.
    trig = {}
    for s in specs:
        if s.name == "orientation":
            trig = {
                i: (float(np.cos(val)), float(np.sin(val))) for i, val in enumerate(s.values)
            }

    def factor_value(row, name):
        if name in names:
            spec = specs[names.index(name)]
            return spec.values[row[names.index(name)]]
        return DEFAULTS[name]

    images = np.empty((n, resolution, resolution), dtype=np.uint8)
    default_trig = (1.0, 0.0)
    for i, row in enumerate(labels):
        shape_idx = int(factor_value(row, "shape"))
        orientation = factor_value(row, "orientation")
        if "orientation" in names:
            cos_t, sin_t = trig[int(row[names.index("orientation")])]
        else:
            cos_t, sin_t = default_trig
        images[i] = render_sprite(
            SHAPE_NAMES[shape_idx],
            factor_value(row, "scale"),
            orientation,
            factor_value(row, "pos_x"),
            factor_value(row, "pos_y"),
            resolution,
            cos_t=cos_t,
            sin_t=sin_t,
        )
        if not images[i].any():
            raise DataError(f"factor tuple {row.tolist()} renders no lit pixel (sprite off canvas)")
    return FactorDataset(images=images, labels=labels, specs=list(specs), resolution=resolution)


def sample_fixed_factor_batch(
    dataset: FactorDataset, factor_k: int, batch: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, int]:
    """A batch sharing one random value of factor k, all other factors uniform.

    Returns (images [batch, c, h, w], labels [batch, F], fixed value index).
    """
    if batch < 2:
        raise ValueError(f"need at least 2 samples per batch, got {batch}")
    cards = dataset.cardinalities
    if not 0 <= factor_k < len(cards):
        raise IndexError(f"factor index {factor_k} out of range")
    if cards[factor_k] < 2:
        raise DataError(
            f"factor {dataset.specs[factor_k].name} has cardinality 1; fixing it is meaningless"
        )
    fixed = int(rng.integers(0, cards[factor_k]))
    labels = np.empty((batch, len(cards)), dtype=np.int32)
    for j, card in enumerate(cards):
        labels[:, j] = rng.integers(0, card, size=batch)
    labels[:, factor_k] = fixed
    return dataset.batch(dataset.indices_of(labels)), labels, fixed


# ---------------------------------------------------------------------------
# File format: textual header, packed image bits, little-endian int32 labels.
# ---------------------------------------------------------------------------

_MAGIC_LINE = "sprites-dataset-v1"


def save_dataset(path: str, dataset: FactorDataset) -> None:
    header = io.StringIO()
    header.write(_MAGIC_LINE + "\n")
    header.write(f"resolution = {dataset.resolution}\n")
    header.write(f"channels = {dataset.channels}\n")
    header.write(f"images = {len(dataset)}\n")
    header.write(f"factors = {dataset.num_factors}\n")
    for s in dataset.specs:
        vals = ",".join(repr(float(v)) for v in s.values)
        header.write(f"factor {s.name} = {vals}\n")
    header.write("end-header\n")
    packed = np.packbits(dataset.images.reshape(len(dataset), -1), axis=None)
    with open(path, "wb") as fh:
        fh.write(header.getvalue().encode("utf-8"))
        fh.write(packed.tobytes())
        fh.write(dataset.labels.astype("<i4").tobytes())


def load_dataset(path: str) -> FactorDataset:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    end = blob.find(b"end-header\n")
    if end < 0 or not blob.startswith(_MAGIC_LINE.encode()):
        raise DataError(f"{path} is not a sprite dataset file")
    head_lines = blob[:end].decode("utf-8").splitlines()[1:]
    fields = {}
    specs: list[FactorSpec] = []
    for line in head_lines:
        key, _, value = line.partition(" = ")
        if key.startswith("factor "):
            name = key.split(" ", 1)[1]
            specs.append(FactorSpec(name, tuple(float(v) for v in value.split(","))))
        else:
            fields[key] = int(value)
    try:
        resolution, channels, n, f = (
            fields["resolution"],
            fields["channels"],
            fields["images"],
            fields["factors"],
        )
    except KeyError as missing:
        raise DataError(f"{path} header missing {missing}") from None
    if len(specs) != f:
        raise DataError(f"{path} header promises {f} factors, lists {len(specs)}")
    body = blob[end + len(b"end-header\n") :]
    n_pixels = n * resolution * resolution
    n_image_bytes = (n_pixels + 7) // 8
    bits = np.unpackbits(np.frombuffer(body[:n_image_bytes], dtype=np.uint8))[:n_pixels]
    images = bits.reshape(n, resolution, resolution).astype(np.uint8)
    labels = np.frombuffer(body[n_image_bytes:], dtype="<i4").reshape(n, f).astype(np.int32)
    return FactorDataset(
        images=images, labels=labels, specs=specs, resolution=resolution, channels=channels
    )


# ---------------------------------------------------------------------------
# Ready-made spec sets
# ---------------------------------------------------------------------------


def toy_default_specs() -> list[FactorSpec]:
    """CI-scale spec: 16 x 16 positions x 4 scales of a square, 1024 images."""
    return [
        FactorSpec.uniform("pos_x", 16, 0.3, 0.7),
        FactorSpec.uniform("pos_y", 16, 0.3, 0.7),
        FactorSpec.uniform("scale", 4, 0.2, 0.5),
    ]


def dsprites_like_specs() -> list[FactorSpec]:
    """Fidelity-scale spec mirroring the classic 3*40*6*32*32 factor structure."""
    return [
        FactorSpec("shape", (0.0, 1.0, 2.0)),
        FactorSpec.uniform("scale", 6, 0.18, 0.45),
        FactorSpec.uniform("orientation", 40, 0.0, 2.0 * np.pi * 39.0 / 40.0),
        FactorSpec.uniform("pos_x", 32, 0.25, 0.75),
        FactorSpec.uniform("pos_y", 32, 0.25, 0.75),
    ]


def parse_spec_string(text: str) -> list[FactorSpec]:
    """Parse inline specs like ``pos_x:16,pos_y:16,scale:4`` with default ranges."""
    ranges = {
        "pos_x": (0.3, 0.7),
        "pos_y": (0.3, 0.7),
        "scale": (0.2, 0.5),
        "orientation": None,
        "shape": None,
    }
    specs = []
    for item in text.split(","):
        name, _, card_text = item.partition(":")
        name = name.strip()
        try:
            card = int(card_text)
        except ValueError:
            raise ConfigurationError(f"bad factor spec {item!r}; expected name:cardinality") from None
        if name == "shape":
            specs.append(FactorSpec("shape", tuple(float(i) for i in range(card))))
        elif name == "orientation":
            specs.append(
                FactorSpec.uniform("orientation", card, 0.0, 2.0 * np.pi * (card - 1) / card)
            )
        elif name in ranges:
            lo, hi = ranges[name]
            specs.append(FactorSpec.uniform(name, card, lo, hi))
        else:
            raise ConfigurationError(f"unknown factor {name!r} in spec string")
    return specs
