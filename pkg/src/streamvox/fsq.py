"""Finite scalar quantization speech-token codec.

Each latent dimension is squashed through tanh into (-1, 1), then binned into
``levels`` equal-width cells whose centers are evenly spaced at
``(2l + 1) / levels - 1``.  A code is the per-dimension vector of cell ids; a
token index is the code read as a little-endian base-``levels`` integer.  With
the defaults (8 dimensions, 3 levels) the codebook holds 3**8 = 6561 tokens,
and token streams run at 25 tokens per second of speech.

``dequantize`` returns the pre-squash representative of each center
(``atanh(center)``), i.e. the unique latent that squashes exactly onto the
center, so encode(dequantize(code)) == code holds for every level count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEECH_TOKENS_PER_SECOND = 25
DEFAULT_CODEBOOK_SIZE = 6561  # 3 ** 8


@dataclass(frozen=True)
class FsqConfig:
    """Quantizer geometry: ``dims`` scalar dimensions with ``levels`` cells each."""

    dims: int = 8
    levels: int = 3

    def __post_init__(self) -> None:
        if self.dims < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")

    @property
    def codebook_size(self) -> int:
        return self.levels**self.dims


def level_centers(config: FsqConfig) -> np.ndarray:
    """Centers of the quantization cells inside (-1, 1)."""
    return (2.0 * np.arange(config.levels) + 1.0) / config.levels - 1.0


def encode(latent, config: FsqConfig = FsqConfig()) -> np.ndarray:
    """Squash and round a latent vector to per-dimension level ids.

    Boundary values round toward the higher level (half-up); values past the
    squash range saturate at levels 0 and ``levels - 1``.
    """
    latent = np.asarray(latent, dtype=float)
    if latent.shape != (config.dims,):
        raise ValueError(f"latent has shape {latent.shape}, expected ({config.dims},)")
    if not np.all(np.isfinite(latent)):
        raise ValueError("latent must be finite")
    squashed = np.tanh(latent)
    cells = np.floor((squashed + 1.0) * config.levels / 2.0).astype(int)
    return np.clip(cells, 0, config.levels - 1)


def dequantize(code, config: FsqConfig = FsqConfig()) -> np.ndarray:
    """Latent representatives of a code's level centers (pre-squash space)."""
    code = _check_code(code, config)
    return np.arctanh(level_centers(config)[code])


def code_to_index(code, config: FsqConfig = FsqConfig()) -> int:
    """Little-endian base-``levels`` positional value of a code
    (digit 0 is least significant)."""
    code = _check_code(code, config)
    index = 0
    for digit in reversed(code):
        index = index * config.levels + int(digit)
    return index


def index_to_code(index: int, config: FsqConfig = FsqConfig()) -> np.ndarray:
    """Inverse of :func:`code_to_index` on [0, levels**dims)."""
    if not 0 <= index < config.codebook_size:
        raise ValueError(f"index {index} out of range [0, {config.codebook_size})")
    digits = np.empty(config.dims, dtype=int)
    for i in range(config.dims):
        index, digits[i] = divmod(index, config.levels)
    return digits


def encode_to_index(latent, config: FsqConfig = FsqConfig()) -> int:
    return code_to_index(encode(latent, config), config)


def _check_code(code, config: FsqConfig) -> np.ndarray:
    code = np.asarray(code)
    if code.shape != (config.dims,):
        raise ValueError(f"code has shape {code.shape}, expected ({config.dims},)")
    if not np.issubdtype(code.dtype, np.integer):
        raise ValueError(f"code digits must be integers, got dtype {code.dtype}")
    if np.any(code < 0) or np.any(code >= config.levels):
        raise ValueError(f"code digits must lie in [0, {config.levels})")
    return code
