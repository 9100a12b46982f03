"""Channel noise simulation with a differentiability contract.

A channel is an ordered stage list over {Gaussian, Quantize, Rescale}. The
Gaussian field is a pure function of (noise_seed, stage index, image shape),
so a sender simulating the channel with the receiver's seed reproduces the
receiver's lossy image exactly. `apply` is the hard channel; `apply_smooth`
is the optimizer-facing surrogate: straight-through quantization and a soft
clip that is identity on [-1+m, 1-m].
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import MalformedInput

_SOFT_MARGIN = 0.01


@dataclass(frozen=True)
class GaussianStage:
    sigma: float

    def __str__(self):
        return f"gaussian:{self.sigma:g}"


@dataclass(frozen=True)
class QuantizeStage:
    levels: int

    def __str__(self):
        return f"quantize:{self.levels}"


@dataclass(frozen=True)
class RescaleStage:
    factor: float

    def __str__(self):
        return f"rescale:{self.factor:g}"


Stage = Union[GaussianStage, QuantizeStage, RescaleStage]


@dataclass(frozen=True)
class ChannelSpec:
    stages: tuple[Stage, ...] = ()
    noise_seed: int = 0

    def __str__(self):
        return ",".join(str(s) for s in self.stages) or "lossless"

    def with_seed(self, noise_seed: int) -> "ChannelSpec":
        return ChannelSpec(self.stages, noise_seed)


def parse_channel(text: str, noise_seed: int = 0) -> ChannelSpec:
    """Parse e.g. "gaussian:0.01,quantize:32,rescale:0.5"."""
    text = text.strip()
    if not text or text == "lossless":
        return ChannelSpec((), noise_seed)
    stages: list[Stage] = []
    for part in text.split(","):
        try:
            name, _, arg = part.strip().partition(":")
            if name == "gaussian":
                stage: Stage = GaussianStage(float(arg))
                if stage.sigma < 0:
                    raise ValueError
            elif name == "quantize":
                stage = QuantizeStage(int(arg))
                if stage.levels < 2:
                    raise ValueError
            elif name == "rescale":
                stage = RescaleStage(float(arg))
                if stage.factor not in (0.5, 1.0, 2.0):
                    raise ValueError
            else:
                raise ValueError
        except ValueError:
            raise MalformedInput(f"bad channel stage {part!r}") from None
        stages.append(stage)
    return ChannelSpec(tuple(stages), noise_seed)


def _noise_field(spec: ChannelSpec, index: int, shape: tuple) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(b"channel-noise")
    h.update(spec.noise_seed.to_bytes(8, "big", signed=True))
    h.update(index.to_bytes(4, "big"))
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(h.digest(), "big")))
    return rng.standard_normal(shape)


@lru_cache(maxsize=64)
def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Bilinear (half-pixel convention) 1-D interpolation matrix."""
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    m[np.arange(n_out), i0] += 1.0 - w1
    m[np.arange(n_out), i1] += w1
    return m


@lru_cache(maxsize=64)
def _rescale_matrices(n: int, factor: float) -> tuple[np.ndarray, np.ndarray]:
    """Down-then-up operator along one axis, returned as (forward, transpose)."""
    n_low = int(round(n * factor)) if factor < 1.0 else n
    n_high = int(round(n * factor)) if factor > 1.0 else n
    if factor < 1.0:
        a = _interp_matrix(n, n_low) @ _interp_matrix(n_low, n)
    elif factor > 1.0:
        a = _interp_matrix(n, n_high) @ _interp_matrix(n_high, n)
    else:
        a = np.eye(n)
    return a, a.T


def _apply_separable(ah: np.ndarray, aw: np.ndarray,
                     x: np.ndarray) -> np.ndarray:
    """Apply per-axis operators: out[i,l,c] = ah[i,j] x[j,k,c] aw[l,k]."""
    y = np.tensordot(ah, x, axes=(1, 0))           # (H, W, C)
    return np.tensordot(y, aw, axes=(1, 1)).transpose(0, 2, 1)


def _quantize_values(x: np.ndarray, levels: int) -> np.ndarray:
    return np.round((x + 1.0) / 2.0 * (levels - 1)) / (levels - 1) * 2.0 - 1.0


def _soft_clip(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """C1 clip: identity inside [-(1-m), 1-m], saturating to +-1 outside."""
    m = _SOFT_MARGIN
    absx = np.abs(x)
    outside = absx > 1.0 - m
    decay = np.exp(-(np.maximum(absx - (1.0 - m), 0.0)) / m)
    y = np.where(outside, np.sign(x) * (1.0 - m * decay), x)
    dy = np.where(outside, decay, 1.0)
    return y, dy


def _run_stages(spec: ChannelSpec, image: np.ndarray, smooth: bool,
                tape: list | None) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    for idx, stage in enumerate(spec.stages):
        if isinstance(stage, GaussianStage):
            if stage.sigma > 0.0:
                x = x + stage.sigma * _noise_field(spec, idx, x.shape)
            if tape is not None:
                tape.append(("identity", None))
        elif isinstance(stage, QuantizeStage):
            x = _quantize_values(x, stage.levels)
            if tape is not None:
                tape.append(("identity", None))  # straight-through
        elif isinstance(stage, RescaleStage):
            ah, aht = _rescale_matrices(x.shape[0], stage.factor)
            aw, awt = _rescale_matrices(x.shape[1], stage.factor)
            x = _apply_separable(ah, aw, x)
            if tape is not None:
                tape.append(("rescale", (aht, awt)))
    if smooth:
        y, dy = _soft_clip(x)
        if tape is not None:
            tape.append(("diag", dy))
        return y
    return np.clip(x, -1.0, 1.0)


def apply(spec: ChannelSpec, image: np.ndarray) -> np.ndarray:
    """Hard channel: stages in order, output clamped to [-1, 1]."""
    return _run_stages(spec, image, smooth=False, tape=None)


def apply_smooth(spec: ChannelSpec, image: np.ndarray) -> np.ndarray:
    """Differentiable surrogate used inside the optimization loop."""
    return _run_stages(spec, image, smooth=True, tape=None)


def apply_smooth_with_tape(spec: ChannelSpec,
                           image: np.ndarray) -> tuple[np.ndarray, list]:
    tape: list = []
    out = _run_stages(spec, image, smooth=True, tape=tape)
    return out, tape


def backward(tape: list, grad_out: np.ndarray) -> np.ndarray:
    """Pull an output-space gradient back to the channel input."""
    g = grad_out
    for kind, payload in reversed(tape):
        if kind == "identity":
            continue
        if kind == "diag":
            g = g * payload
        elif kind == "rescale":
            aht, awt = payload
            g = _apply_separable(aht, awt, g)
    return g
