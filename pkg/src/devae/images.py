"""Binary portable graymap/pixmap (P5/P6) emission.

Codec-free formats keep image artifacts bit-exact; comment lines carry the
serialized run configuration for provenance.
"""

from __future__ import annotations

import numpy as np

__all__ = ["write_pgm", "write_ppm", "probabilities_to_gray", "tile"]


def _header(magic: str, width: int, height: int, comments: tuple[str, ...]) -> bytes:
    lines = [magic]
    for comment in comments:
        for part in comment.splitlines():
            lines.append(f"# {part}")
    lines.append(f"{width} {height}")
    lines.append("255")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_pgm(path: str, image: np.ndarray, comments: tuple[str, ...] = ()) -> None:
    """Write a [h, w] uint8 array as binary PGM."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError(f"PGM wants a 2-D grayscale image, got shape {image.shape}")
    with open(path, "wb") as fh:
        fh.write(_header("P5", image.shape[1], image.shape[0], comments))
        fh.write(image.tobytes())


def write_ppm(path: str, image: np.ndarray, comments: tuple[str, ...] = ()) -> None:
    """Write a [h, w, 3] uint8 array as binary PPM."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"PPM wants a [h, w, 3] image, got shape {image.shape}")
    with open(path, "wb") as fh:
        fh.write(_header("P6", image.shape[1], image.shape[0], comments))
        fh.write(image.tobytes())


def probabilities_to_gray(probabilities: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to uint8 levels by round-to-nearest."""
    return np.clip(np.rint(np.asarray(probabilities) * 255.0), 0, 255).astype(np.uint8)


def tile(images: np.ndarray) -> np.ndarray:
    """Arrange [rows, cols, h, w] images into one [rows*h, cols*w] sheet."""
    images = np.asarray(images)
    rows, cols, h, w = images.shape
    return images.transpose(0, 2, 1, 3).reshape(rows * h, cols * w)
