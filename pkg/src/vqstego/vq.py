"""Toy VQ tokenizer: seeded codebook, affine-tanh decoder, exact inverse encoder.

The decoder maps each cell's codebook vector through a fixed seeded affine
map to a p x p x C pixel patch, then squashes with tanh(alpha * u). The
encoder inverts it in closed form (atanh + left pseudo-inverse), so on a
noiseless channel quantize(encode(decode(q))) == q exactly and all decoder
gradients are available analytically for the optimizer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import (DegenerateCodebook, IndexOutOfRange, MalformedInput,
                     ShapeMismatch)

_MAGIC = b"VQI1"
_ATANH_EPS = 1e-6
_CHANNELS = 3


@dataclass(frozen=True)
class Codebook:
    """N x d matrix of pairwise-distinct rows, each rescaled to unit RMS."""

    vectors: np.ndarray
    min_distance: float

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_codebook(seed: int, n: int, d: int) -> Codebook:
    if n < 2 or d < 1:
        raise ValueError("need n >= 2, d >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    vectors = rng.standard_normal((n, d))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    vectors = vectors / norms * np.sqrt(d)
    min_distance = float(pdist(vectors).min())
    if min_distance < 1e-6:
        raise DegenerateCodebook(
            f"minimum pairwise distance {min_distance} below 1e-6")
    return Codebook(vectors=vectors, min_distance=min_distance)


@dataclass(frozen=True)
class Tokenizer:
    """Codebook plus the decoder/encoder pair and grid geometry."""

    codebook: Codebook
    weight: np.ndarray      # (p*p*C, d)
    bias: np.ndarray        # (p*p*C,)
    weight_pinv: np.ndarray
    alpha: float
    patch: int
    grid_h: int
    grid_w: int

    @property
    def height(self) -> int:
        return self.grid_h * self.patch

    @property
    def width(self) -> int:
        return self.grid_w * self.patch

    @property
    def n_cells(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def lipschitz(self) -> float:
        """Per-cell bound on ||decode(z) - decode(z')|| / ||z - z'||."""
        return self.alpha * float(np.linalg.norm(self.weight, 2))

    def _check_grid(self, grid: np.ndarray) -> np.ndarray:
        grid = np.asarray(grid)
        if grid.shape != (self.grid_h, self.grid_w):
            raise ShapeMismatch(
                f"grid {grid.shape} != {(self.grid_h, self.grid_w)}")
        if grid.min() < 0 or grid.max() >= self.codebook.size:
            raise IndexOutOfRange("token index outside the codebook")
        return grid

    def decode_continuous(self, latents: np.ndarray) -> np.ndarray:
        """Affine map plus tanh squashing on raw latent vectors."""
        h, w, p = self.grid_h, self.grid_w, self.patch
        if latents.shape != (h, w, self.codebook.dim):
            raise ShapeMismatch(f"latents {latents.shape}")
        pre = latents.reshape(h * w, -1) @ self.weight.T + self.bias
        x = np.tanh(self.alpha * pre)
        return (x.reshape(h, w, p, p, _CHANNELS)
                 .transpose(0, 2, 1, 3, 4)
                 .reshape(h * p, w * p, _CHANNELS))

    def decode(self, grid: np.ndarray) -> np.ndarray:
        grid = self._check_grid(grid)
        return self.decode_continuous(self.codebook.vectors[grid])

    def _patches(self, image: np.ndarray) -> np.ndarray:
        h, w, p = self.grid_h, self.grid_w, self.patch
        if image.shape != (h * p, w * p, _CHANNELS):
            raise ShapeMismatch(
                f"image {image.shape} != {(h * p, w * p, _CHANNELS)}")
        return (image.reshape(h, p, w, p, _CHANNELS)
                     .transpose(0, 2, 1, 3, 4)
                     .reshape(h * w, p * p * _CHANNELS))

    def encode(self, image: np.ndarray) -> np.ndarray:
        """Closed-form inverse of decode_continuous (clamped atanh + pinv)."""
        patches = self._patches(image)
        u = np.arctanh(np.clip(patches, -1.0 + _ATANH_EPS,
                               1.0 - _ATANH_EPS)) / self.alpha
        z = (u - self.bias) @ self.weight_pinv.T
        return z.reshape(self.grid_h, self.grid_w, self.codebook.dim)

    def grad_latents(self, image_grad: np.ndarray,
                     decoded: np.ndarray) -> np.ndarray:
        """Chain image-space gradient back through tanh and the affine map."""
        patches_g = self._patches(image_grad)
        x = self._patches(decoded)
        pre_g = patches_g * self.alpha * (1.0 - x * x)
        return (pre_g @ self.weight).reshape(
            self.grid_h, self.grid_w, self.codebook.dim)

    def quantize(self, latents: np.ndarray) -> np.ndarray:
        """Nearest codebook row per cell; ties resolve to the lowest index."""
        h, w = self.grid_h, self.grid_w
        if latents.shape != (h, w, self.codebook.dim):
            raise ShapeMismatch(f"latents {latents.shape}")
        if not np.all(np.isfinite(latents)):
            raise ValueError("latents must be finite")
        flat = latents.reshape(h * w, 1, -1)
        d2 = ((flat - self.codebook.vectors[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1).reshape(h, w)


def build_tokenizer(decoder_seed: int, codebook: Codebook, patch: int,
                    grid_h: int, grid_w: int, alpha: float,
                    weight_scale: float, bias_scale: float = 0.0) -> Tokenizer:
    rng = np.random.Generator(np.random.PCG64(decoder_seed))
    out_dim = patch * patch * _CHANNELS
    weight = rng.standard_normal((out_dim, codebook.dim)) * weight_scale
    bias = rng.standard_normal(out_dim) * bias_scale
    return Tokenizer(codebook=codebook, weight=weight, bias=bias,
                     weight_pinv=np.linalg.pinv(weight), alpha=alpha,
                     patch=patch, grid_h=grid_h, grid_w=grid_w)


def write_image(path, image: np.ndarray) -> None:
    """Canonical flat binary format: 16-byte header + LE float32 row-major."""
    h, w, c = image.shape
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(image.astype("<f4").tobytes())


def read_image(path) -> np.ndarray:
    try:
        return _read_image(path)
    except OSError as exc:
        raise MalformedInput(f"cannot read image {path}: {exc}") from None


def _read_image(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != _MAGIC:
            raise MalformedInput(f"{path}: not a {_MAGIC!r} image file")
        h, w, c = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != h * w * c:
        raise MalformedInput(f"{path}: truncated pixel data")
    return data.reshape(h, w, c).astype(np.float64)


def export_ppm(path, image: np.ndarray) -> None:
    """Lossy 8-bit export for eyeballing; the float binary is canonical."""
    h, w, _ = image.shape
    raw = np.clip((image + 1.0) * 127.5, 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(raw.tobytes())
