"""Dense binary masks, a row-major run-length codec, and lattice operations.

Masks are kept dense in memory (the scoring loops touch every pixel);
the run-length form is only used at rest, inside manifest files.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BinaryMask",
    "Rle",
    "rle_encode",
    "rle_decode",
    "pixelwise_max",
    "invert_mask",
    "count_ones",
    "paste_into_frame",
]


@dataclass(eq=False)
class BinaryMask:
    """H x W boolean grid, row-major."""

    height: int
    width: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise ValueError("mask dimensions must be positive")
        self.bits = np.ascontiguousarray(np.asarray(self.bits, dtype=bool))
        if self.bits.shape != (self.height, self.width):
            raise ValueError(
                f"bits shape {self.bits.shape} does not match ({self.height}, {self.width})"
            )

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(height, width, np.zeros((height, width), dtype=bool))

    @classmethod
    def ones(cls, height: int, width: int) -> "BinaryMask":
        return cls(height, width, np.ones((height, width), dtype=bool))

    @classmethod
    def from_array(cls, bits: np.ndarray) -> "BinaryMask":
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(bits.shape[0], bits.shape[1], bits)

    def as_uint8(self) -> np.ndarray:
        """Zero-copy uint8 view for the compiled kernels."""
        return self.bits.view(np.uint8)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (self.height, self.width) == (other.height, other.width) and np.array_equal(
            self.bits, other.bits
        )


@dataclass(frozen=True)
class Rle:
    """Run-length encoding of a mask: row-major scan, first count is the
    number of leading zeros, alternating thereafter. Canonical form has no
    interior zero counts (a leading zero is permitted for masks starting
    with a set bit)."""

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.height <= 0 or self.width <= 0:
            raise ValueError("dimensions must be positive")
        if not self.counts:
            raise ValueError("counts must be non-empty")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")
        if any(c == 0 for c in self.counts[1:]):
            raise ValueError("interior zero counts are not canonical")
        total = sum(self.counts)
        expected = self.height * self.width
        if total != expected:
            raise ValueError(f"counts sum to {total}, expected {expected} for the grid")


def rle_encode(mask: BinaryMask) -> Rle:
    """Canonical run-length encoding; exact inverse of :func:`rle_decode`."""
    flat = mask.bits.ravel()
    n = flat.size
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [n]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return Rle(mask.height, mask.width, tuple(runs))


def rle_decode(rle: Rle) -> BinaryMask:
    """Exact inverse of :func:`rle_encode`."""
    counts = np.asarray(rle.counts, dtype=np.int64)
    values = (np.arange(counts.size) % 2).astype(bool)
    flat = np.repeat(values, counts)
    return BinaryMask(rle.height, rle.width, flat.reshape(rle.height, rle.width))


def _check_same_dims(a: BinaryMask, b: BinaryMask) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"mask dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


def pixelwise_max(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixel-wise maximum of two masks (bitwise OR on {0,1} values)."""
    _check_same_dims(a, b)
    return BinaryMask(a.height, a.width, a.bits | b.bits)


def invert_mask(m: BinaryMask) -> BinaryMask:
    return BinaryMask(m.height, m.width, ~m.bits)


def count_ones(m: BinaryMask) -> int:
    return int(np.count_nonzero(m.bits))


def paste_into_frame(
    local: BinaryMask, offset: tuple[int, int], frame_dims: tuple[int, int]
) -> BinaryMask:
    """Place ``local`` at ``offset=(row, col)`` inside a zeroed frame of
    ``frame_dims=(H, W)``. The placement must fit entirely in the frame."""
    row, col = int(offset[0]), int(offset[1])
    frame_h, frame_w = int(frame_dims[0]), int(frame_dims[1])
    if row < 0 or col < 0 or row + local.height > frame_h or col + local.width > frame_w:
        raise ValueError(
            f"local {local.height}x{local.width} at ({row}, {col}) does not fit "
            f"in frame {frame_h}x{frame_w}"
        )
    bits = np.zeros((frame_h, frame_w), dtype=bool)
    bits[row : row + local.height, col : col + local.width] = local.bits
    return BinaryMask(frame_h, frame_w, bits)
