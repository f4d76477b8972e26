"""Host-side shifted patch tokenization.

An input image is shifted along the four diagonal directions, the shifted
copies (cropped to the original size, vacated borders zero-filled) are
concatenated with the original along the channel axis, and the stack is
cut into non-overlapping P x P patches that are flattened into the token
matrix fed to the engine.

Images are float32 arrays of shape (H, W, C), channel-last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

#: Diagonal unit directions in the fixed order left-up, right-up, left-down, right-down.
DIAGONALS = ((-1, -1), (1, -1), (-1, 1), (1, 1))


@dataclass(frozen=True)
class ShiftSpec:
    """Shift directions (unit (dx, dy) offsets) and their pixel magnitude."""

    directions: tuple = DIAGONALS
    magnitude: int = 2

    @property
    def n_shifts(self) -> int:
        return len(self.directions)

    def offsets(self):
        """Absolute (dx, dy) pixel offsets, direction order preserved."""
        return [(dx * self.magnitude, dy * self.magnitude) for dx, dy in self.directions]


@dataclass(frozen=True)
class TokenMatrix:
    """Flattened patch tokens: data is (n_tokens, raw_dim) float32."""

    n_tokens: int
    raw_dim: int
    data: np.ndarray


def as_image(x) -> np.ndarray:
    img = np.ascontiguousarray(x, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) image, got ndim={img.ndim}")
    if img.shape[0] < 1 or img.shape[1] < 1 or img.shape[2] < 1:
        raise ShapeError(f"degenerate image shape {img.shape}")
    return img


def shift_image(img, dx: int, dy: int) -> np.ndarray:
    """Translate by (dx, dy) pixels, zero-filling the vacated border.

    out[r, c] = img[r - dy, c - dx] where that index is in bounds, else 0.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    if abs(dx) >= min(h, w) or abs(dy) >= min(h, w):
        raise ShapeError(f"shift ({dx}, {dy}) too large for a {h}x{w} image")
    out = np.zeros_like(img)
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[dst_r, dst_c] = img[src_r, src_c]
    return out


def spt_transform(img, spec: ShiftSpec | None = None) -> np.ndarray:
    """Concatenate the image with its shifted copies along the channel axis.

    Channel block 0 is the original; blocks 1..n_shifts follow the
    ShiftSpec's direction order. Output has (n_shifts + 1) * C channels.
    """
    img = as_image(img)
    if spec is None:
        spec = ShiftSpec()
    stack = [img]
    for dx, dy in spec.offsets():
        stack.append(shift_image(img, dx, dy))
    return np.concatenate(stack, axis=2)


def tokenize(stack, patch: int) -> TokenMatrix:
    """Cut an (H, W, C) stack into P x P patches and flatten them to tokens.

    Patches are ordered patch-row-major; within a patch, elements are
    flattened (row, col, channel) ascending. That flattening order is part
    of the weight-file contract and must not change.
    """
    stack = as_image(stack)
    h, w, c = stack.shape
    if patch < 1 or h % patch or w % patch:
        raise ShapeError(f"patch size {patch} does not divide image dims {h}x{w}")
    gh, gw = h // patch, w // patch
    tokens = (
        stack.reshape(gh, patch, gw, patch, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(gh * gw, patch * patch * c)
    )
    return TokenMatrix(gh * gw, patch * patch * c, np.ascontiguousarray(tokens))
