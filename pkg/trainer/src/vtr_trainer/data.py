"""Synthetic 4-class dataset of bright shapes under multiplicative speckle.

Stands in for restricted radar datasets: each 32x32 single-channel image
is a reflectivity map (dim background, bright shape) multiplied by
4-look speckle (unit-mean gamma), the standard multi-look intensity
model. Classes: 0 blob, 1 bar, 2 corner, 3 ring. Deterministic per seed,
balanced classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASS_NAMES = ("blob", "bar", "corner", "ring")
IMAGE_SIZE = 32
_BG = 0.12
_FG = 0.95


def _reflectivity(cls: int, rng: np.random.Generator) -> np.ndarray:
    r = np.full((IMAGE_SIZE, IMAGE_SIZE), _BG, dtype=np.float32)
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE]
    cy, cx = rng.integers(10, 22, size=2)
    if cls == 0:  # blob
        rad = rng.integers(4, 7)
        r[(yy - cy) ** 2 + (xx - cx) ** 2 <= rad**2] = _FG
    elif cls == 1:  # bar
        half_len, half_w = rng.integers(8, 12), rng.integers(1, 3)
        if rng.random() < 0.5:
            r[(abs(yy - cy) <= half_w) & (abs(xx - cx) <= half_len)] = _FG
        else:
            r[(abs(xx - cx) <= half_w) & (abs(yy - cy) <= half_len)] = _FG
    elif cls == 2:  # corner: two arms meeting at (cy, cx)
        arm, half_w = rng.integers(7, 11), rng.integers(1, 3)
        r[(abs(yy - cy) <= half_w) & (xx >= cx) & (xx <= cx + arm)] = _FG
        r[(abs(xx - cx) <= half_w) & (yy >= cy) & (yy <= cy + arm)] = _FG
    else:  # ring
        rad = rng.integers(6, 9)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        r[(d2 <= rad**2) & (d2 >= (rad - 2) ** 2)] = _FG
    return r


_LOOKS = 4


def make_image(cls: int, rng: np.random.Generator) -> np.ndarray:
    """One (32, 32, 1) float32 image in [0, 1]."""
    speckle = rng.gamma(_LOOKS, 1.0 / _LOOKS, size=(IMAGE_SIZE, IMAGE_SIZE)).astype(np.float32)
    img = np.clip(_reflectivity(cls, rng) * speckle / 1.5, 0.0, 1.0)
    return img[:, :, None]


@dataclass(frozen=True)
class SyntheticDataset:
    train_x: np.ndarray  # (n_train, 32, 32, 1)
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


def make_dataset(seed: int, n_train: int = 4096, n_test: int = 512) -> SyntheticDataset:
    """Balanced, deterministic train/test split (counts rounded down to x4)."""
    rng = np.random.default_rng(np.uint64(seed))

    def batch(n):
        per = n // 4
        xs, ys = [], []
        for cls in range(4):
            for _ in range(per):
                xs.append(make_image(cls, rng))
                ys.append(cls)
        order = rng.permutation(len(xs))
        return (
            np.stack(xs)[order],
            np.asarray(ys, dtype=np.int64)[order],
        )

    train_x, train_y = batch(n_train)
    test_x, test_y = batch(n_test)
    return SyntheticDataset(train_x, train_y, test_x, test_y)
