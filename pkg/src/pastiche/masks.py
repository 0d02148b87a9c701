"""Binary mask primitives: rasterization, run-length coding, box/area measures.

Conventions, fixed for byte-stable interop with COCO-style JSON:

* Bitmaps are boolean ``(height, width)`` arrays.
* Run-length encoding scans the bitmap column-major; counts alternate
  background/foreground and always start with a (possibly zero) background run.
* The compressed string packs counts, delta-coded from the third count onward,
  into 6-bit words: 5 data bits plus a continuation bit, low-order word first,
  each word mapped to the character ``value + 48`` (so valid characters are
  codes 48..111).
* A pixel belongs to a polygon iff its center ``(x + 0.5, y + 0.5)`` is inside
  under the even-odd rule.  Anything outside the canvas is discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: bbox sentinel for a mask with no foreground pixels
EMPTY_BBOX: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

_CHAR_BASE = 48
_LOW5 = 0x1F
_CONT_BIT = 0x20
_SIGN_BIT = 0x10


@dataclass(frozen=True, slots=True)
class Rle:
    """Uncompressed run-length encoding of a binary mask.

    ``size`` is ``(height, width)``; ``counts`` alternate background/foreground
    starting with background, in column-major scan order.
    """

    size: tuple[int, int]
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        h, w = self.size
        if h < 0 or w < 0:
            raise ValueError(f"Rle.size must be non-negative, got {self.size}")
        for c in self.counts:
            if c < 0:
                raise ValueError(f"Rle.counts must be non-negative, got {c}")

    @property
    def area(self) -> int:
        """Foreground pixel count (sum of the odd-indexed runs)."""
        return int(sum(self.counts[1::2]))


def polygons_to_bitmap(
    polygons: list[list[float]], height: int, width: int
) -> np.ndarray:
    """Rasterize a union of polygons onto an ``(height, width)`` grid.

    Each polygon is a flat ``[x0, y0, x1, y1, ...]`` list with at least three
    vertices.  A pixel is foreground iff its center lies inside any polygon
    under the even-odd rule; regions outside the canvas contribute nothing.
    """
    out = np.zeros((height, width), dtype=bool)
    # pixel centers, broadcast to (h, w)
    cx = np.arange(width, dtype=np.float64) + 0.5
    cy = (np.arange(height, dtype=np.float64) + 0.5)[:, None]
    for poly in polygons:
        if len(poly) < 6 or len(poly) % 2 != 0:
            raise ValueError(
                f"polygon needs at least 3 (x, y) vertices, got {len(poly)} coordinates"
            )
        xs = np.asarray(poly[0::2], dtype=np.float64)
        ys = np.asarray(poly[1::2], dtype=np.float64)
        inside = np.zeros((height, width), dtype=bool)
        x1, y1 = xs, ys
        x2, y2 = np.roll(xs, -1), np.roll(ys, -1)
        for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
            if ey1 == ey2:
                continue  # horizontal edge: never crosses a scan level
            spans = (ey1 > cy) != (ey2 > cy)
            x_at = (ex2 - ex1) * (cy - ey1) / (ey2 - ey1) + ex1
            inside ^= spans & (cx < x_at)
        out |= inside
    return out


def bitmap_to_rle(bitmap: np.ndarray) -> Rle:
    """Encode a boolean bitmap as column-major alternating run lengths."""
    b = np.asarray(bitmap, dtype=bool)
    if b.ndim != 2:
        raise ValueError(f"bitmap must be 2-D, got shape {b.shape}")
    h, w = b.shape
    flat = b.ravel(order="F")
    if flat.size == 0:
        return Rle(size=(h, w), counts=())
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)  # encoding always opens with a background run
    return Rle(size=(h, w), counts=tuple(int(r) for r in runs))


def rle_to_bitmap(rle: Rle) -> np.ndarray:
    """Decode run lengths back to a boolean bitmap; exact inverse of encoding."""
    h, w = rle.size
    total = sum(rle.counts)
    if total != h * w:
        raise ValueError(
            f"Rle counts sum to {total}, expected {h}*{w}={h * w}"
        )
    values = np.arange(len(rle.counts)) % 2 == 1
    flat = np.repeat(values, np.asarray(rle.counts, dtype=np.int64))
    return flat.reshape((h, w), order="F")


def compress_rle(rle: Rle) -> str:
    """Pack run lengths into the compact 6-bit character string."""
    chars: list[str] = []
    counts = rle.counts
    for i, c in enumerate(counts):
        x = int(c)
        if i >= 2:
            x -= int(counts[i - 2])  # runs of equal parity are usually close
        while True:
            word = x & _LOW5
            x >>= 5
            # sign extension lives in bit 4 of the final word
            more = (x != -1) if (word & _SIGN_BIT) else (x != 0)
            if more:
                word |= _CONT_BIT
            chars.append(chr(word + _CHAR_BASE))
            if not more:
                break
    return "".join(chars)


def decompress_rle(s: str, size: tuple[int, int]) -> Rle:
    """Inverse of :func:`compress_rle` for a mask of the given ``(h, w)``."""
    counts: list[int] = []
    pos, n = 0, len(s)
    while pos < n:
        x = 0
        shift = 0
        while True:
            if pos >= n:
                raise ValueError("truncated RLE string: continuation bit set on last word")
            word = ord(s[pos]) - _CHAR_BASE
            if not 0 <= word <= 63:
                raise ValueError(
                    f"RLE string character {s[pos]!r} outside the valid range (codes 48..111)"
                )
            pos += 1
            x |= (word & _LOW5) << shift
            shift += 5
            if not word & _CONT_BIT:
                if word & _SIGN_BIT:
                    x -= 1 << shift
                break
        if len(counts) >= 2:
            x += counts[-2]
        if x < 0:
            raise ValueError(f"RLE string decodes to negative run length {x}")
        counts.append(x)
    return Rle(size=(int(size[0]), int(size[1])), counts=tuple(counts))


def tight_bbox(bitmap: np.ndarray) -> tuple[float, float, float, float]:
    """Minimal ``(x, y, w, h)`` box containing all foreground; sentinel when empty."""
    rows = np.flatnonzero(bitmap.any(axis=1))
    if rows.size == 0:
        return EMPTY_BBOX
    cols = np.flatnonzero(bitmap.any(axis=0))
    x0, x1 = int(cols[0]), int(cols[-1])
    y0, y1 = int(rows[0]), int(rows[-1])
    return (float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))


def mask_area(bitmap: np.ndarray) -> int:
    """Foreground pixel count."""
    return int(np.count_nonzero(bitmap))
