"""Grayscale image I/O, degradation synthesis, and quality metrics.

Images travel as 2-D float arrays with values in [0, 1], row-major.
PGM (binary P5) gets a hand-rolled reader/writer; PNG goes through
Pillow.  The noise RNG is pinned to a documented xorshift64* generator
with splitmix64 seeding so degraded inputs are bit-reproducible.
"""

from __future__ import annotations

import os
from typing import Tuple

import numpy as np

from .errors import ConfigurationError, InvalidReferenceError
from . import tvl1

_LUMA = np.array([0.299, 0.587, 0.114])


class Xorshift64Star:
    """xorshift64* with splitmix64 state initialization.

    Documented constants: splitmix increments with 0x9E3779B97F4A7C15 and
    mixes with 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB; the xorshift
    variant uses shifts (12, 25, 27) and multiplier 0x2545F4914F6CDD1D.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        s = seed & self.MASK
        s = (s + 0x9E3779B97F4A7C15) & self.MASK
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        z = z ^ (z >> 31)
        self.state = z if z != 0 else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= (x >> 12)
        x ^= (x << 25) & self.MASK
        x ^= (x >> 27)
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & self.MASK

    def next_below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ConfigurationError("bound must be positive")
        limit = (self.MASK + 1) - (self.MASK + 1) % bound
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound

    def next_bit(self) -> int:
        return self.next_u64() >> 63


def _check_range(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ConfigurationError("image must be 2-D")
    if img.min() < -1e-9 or img.max() > 1.0 + 1e-9:
        raise ConfigurationError("pixel values must lie in [0, 1]")
    return img


def _load_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them.
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise IOError(f"truncated PGM header in {path}")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if tokens[0] != b"P5":
        raise IOError(f"{path} is not a binary (P5) PGM file")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise IOError(f"unsupported PGM bit depth (maxval={maxval})")
    i += 1  # single whitespace byte after maxval
    raster = data[i:i + rows * cols]
    if len(raster) < rows * cols:
        raise IOError(f"truncated PGM raster in {path}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(rows, cols) / 255.0


def _save_pgm(img: np.ndarray, path: str) -> None:
    q = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (cols, rows))
        fh.write(q.tobytes())


def load_image(path: str) -> np.ndarray:
    """Load an 8-bit PGM or PNG as a [0,1] grayscale array.

    RGB inputs are collapsed with the 0.299/0.587/0.114 luminance weights
    (idempotent on grayscale).
    """
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        return _load_pgm(path)
    from PIL import Image
    with Image.open(path) as im:
        if im.mode in ("L", "P"):
            arr = np.asarray(im.convert("L"), dtype=float)
        elif im.mode in ("RGB", "RGBA"):
            rgb = np.asarray(im.convert("RGB"), dtype=float)
            arr = rgb @ _LUMA
        elif im.mode == "I;16":
            raise IOError(f"unsupported bit depth in {path} (16-bit)")
        else:
            arr = np.asarray(im.convert("L"), dtype=float)
    return arr / 255.0


def save_image(img: np.ndarray, path: str) -> None:
    """Write an 8-bit grayscale image (round-half-up quantization)."""
    img = _check_range(np.clip(img, 0.0, 1.0))
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        _save_pgm(img, path)
        return
    from PIL import Image
    q = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path)


def add_salt_pepper(img: np.ndarray, density: float, seed: int) -> np.ndarray:
    """Replace floor(density * n) pixels with 0 or 1 (fair coin each).

    The corrupted subset comes from a partial Fisher-Yates shuffle driven
    by the seeded generator, so results are deterministic given
    (image shape, density, seed).
    """
    img = _check_range(img)
    if not 0.0 <= density <= 1.0:
        raise ConfigurationError("density must lie in [0, 1]")
    rows, cols = img.shape
    n = rows * cols
    count = int(np.floor(density * n))
    out = img.ravel().copy()
    if count > 0:
        rng = Xorshift64Star(seed)
        idx = np.arange(n)
        for k in range(count):
            j = k + rng.next_below(n - k)
            idx[k], idx[j] = idx[j], idx[k]
            out[idx[k]] = float(rng.next_bit())
    return out.reshape(rows, cols)


def degrade(img: np.ndarray, hsize: int, density: float,
            seed: int, boundary: str = "periodic") -> np.ndarray:
    """Uniform blur followed by salt-pepper corruption."""
    img = _check_range(img)
    rows, cols = img.shape
    K = tvl1.make_blur(rows, cols, hsize, boundary)
    blurred = K.apply(img.ravel()).reshape(rows, cols)
    # Averaging cannot leave [0,1]; clip away FFT round-off only.
    blurred = np.clip(blurred, 0.0, 1.0)
    return add_salt_pepper(blurred, density, seed)


def relative_objective_error(P: "tvl1.TvL1Problem", x,
                             f_star: float) -> float:
    """(F(x) - F*)/F* against a certified reference optimum (may be
    slightly negative when x beats the reference)."""
    if f_star <= 0:
        raise InvalidReferenceError("reference optimum must be positive")
    return (tvl1.objective(P, x) - f_star) / f_star


def psnr(img: np.ndarray, reference: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against a [0,1] reference."""
    img = np.asarray(img, dtype=float)
    reference = np.asarray(reference, dtype=float)
    mse = float(np.mean((img - reference) ** 2))
    if mse == 0.0:
        return np.inf
    return 10.0 * np.log10(1.0 / mse)
