"""Dense matrices, the b x b block-partitioned layout, and reference kernels.

Matrices are plain float32 numpy arrays of shape (rows, cols), row-major.
BlockedMatrix carries the tile layout used by the accelerator: the matrix
is zero-padded to multiples of the block size and stored as contiguous
b x b tiles, ordered block-row-major (left operands / outputs) or
block-column-major (right operands).

naive_matmul and ewise_ref are the independent oracles used by the
property tests; dbmm is the layout-aware product the simulator shares.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import BlockSizeError, ShapeError

_HALF = np.float32(0.5)
_ONE = np.float32(1.0)
_INV_SQRT2 = np.float32(0.7071067811865476)

EWISE_FUNCS = ("identity", "gelu", "exp")


def as_matrix(x) -> np.ndarray:
    """Coerce to a C-contiguous float32 2-D array."""
    m = np.ascontiguousarray(x, dtype=np.float32)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU: x * Phi(x), evaluated in float32."""
    x = np.asarray(x, dtype=np.float32)
    return _HALF * x * (_ONE + erf(x * _INV_SQRT2))


class BlockOrder(str, Enum):
    ROW_MAJOR = "block-row-major"
    COL_MAJOR = "block-column-major"


@dataclass(frozen=True)
class BlockedMatrix:
    """A dense matrix stored as contiguous b x b tiles.

    blocks has shape (num_blocks, b, b); tile (i, j) of the padded grid
    lives at flat index i * col_blocks + j (block-row-major) or
    j * row_blocks + i (block-column-major). Padding beyond the logical
    region is exactly zero.
    """

    logical_rows: int
    logical_cols: int
    block_size: int
    order: BlockOrder
    blocks: np.ndarray

    @property
    def padded_rows(self) -> int:
        return self.row_blocks * self.block_size

    @property
    def padded_cols(self) -> int:
        return self.col_blocks * self.block_size

    @property
    def row_blocks(self) -> int:
        return -(-self.logical_rows // self.block_size)

    @property
    def col_blocks(self) -> int:
        return -(-self.logical_cols // self.block_size)

    def block(self, i: int, j: int) -> np.ndarray:
        """Tile at block coordinates (i, j) of the padded grid."""
        if self.order is BlockOrder.ROW_MAJOR:
            return self.blocks[i * self.col_blocks + j]
        return self.blocks[j * self.row_blocks + i]

    def grid(self) -> np.ndarray:
        """Tiles as a (row_blocks, col_blocks, b, b) view/array.

        Contiguous for block-row-major; a transposed view otherwise.
        """
        b = self.block_size
        if self.order is BlockOrder.ROW_MAJOR:
            return self.blocks.reshape(self.row_blocks, self.col_blocks, b, b)
        return self.blocks.reshape(self.col_blocks, self.row_blocks, b, b).swapaxes(0, 1)


def to_blocked(m, b: int, order: BlockOrder = BlockOrder.ROW_MAJOR) -> BlockedMatrix:
    """Partition a matrix into b x b tiles, zero-padding to block multiples."""
    m = as_matrix(m)
    if b < 1:
        raise BlockSizeError(f"block size must be >= 1, got {b}")
    order = BlockOrder(order)
    rows, cols = m.shape
    rb = -(-rows // b)
    cb = -(-cols // b)
    padded = np.zeros((rb * b, cb * b), dtype=np.float32)
    padded[:rows, :cols] = m
    tiles = padded.reshape(rb, b, cb, b).swapaxes(1, 2)  # (rb, cb, b, b)
    if order is BlockOrder.COL_MAJOR:
        tiles = tiles.swapaxes(0, 1)
    blocks = np.ascontiguousarray(tiles).reshape(-1, b, b)
    return BlockedMatrix(rows, cols, b, order, blocks)


def from_blocked(bm: BlockedMatrix) -> np.ndarray:
    """Reassemble the logical (unpadded) matrix from its tiles."""
    b = bm.block_size
    tiles = bm.grid()
    padded = np.ascontiguousarray(tiles.swapaxes(1, 2)).reshape(bm.padded_rows, bm.padded_cols)
    return np.ascontiguousarray(padded[: bm.logical_rows, : bm.logical_cols])


def dbmm(a: BlockedMatrix, w: BlockedMatrix) -> BlockedMatrix:
    """Dense block-wise matrix multiplication.

    a must be block-row-major and w block-column-major with the same
    block size. The result is block-row-major; its logical region is the
    matrix product accumulated k-blocks ascending (within-block order per
    the selected kernel backend), and its padding stays exactly zero.
    """
    if a.block_size != w.block_size:
        raise BlockSizeError(f"block sizes differ: {a.block_size} vs {w.block_size}")
    if a.logical_cols != w.logical_rows:
        raise ShapeError(f"inner dimensions differ: {a.logical_cols} vs {w.logical_rows}")
    if a.order is not BlockOrder.ROW_MAJOR:
        raise ShapeError("left operand must be block-row-major")
    if w.order is not BlockOrder.COL_MAJOR:
        raise ShapeError("right operand must be block-column-major")
    b = a.block_size
    rb, cb = a.row_blocks, w.col_blocks
    a4 = a.blocks.reshape(a.row_blocks, a.col_blocks, b, b)
    wt4 = w.blocks.reshape(w.col_blocks, w.row_blocks, b, b)
    out4 = np.zeros((rb, cb, b, b), dtype=np.float32)
    kernels.dbmm_blocks(a4, wt4, out4)
    return BlockedMatrix(a.logical_rows, w.logical_cols, b, BlockOrder.ROW_MAJOR, out4.reshape(-1, b, b))


def naive_matmul(a, w) -> np.ndarray:
    """Reference product: out[i, j] = sum_k a[i, k] * w[k, j], k ascending.

    Float32 accumulation in exactly that order; kept independent of the
    blocked kernels so it can serve as their oracle.
    """
    a = as_matrix(a)
    w = as_matrix(w)
    if a.shape[1] != w.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape[1]} vs {w.shape[0]}")
    out = np.zeros((a.shape[0], w.shape[1]), dtype=np.float32)
    for i in range(a.shape[0]):
        row = np.zeros(w.shape[1], dtype=np.float32)
        for k in range(a.shape[1]):
            row += a[i, k] * w[k]
        out[i] = row
    return out


def _apply_func(f: str, x: np.ndarray) -> np.ndarray:
    if f == "identity":
        return x
    if f == "gelu":
        return gelu(x)
    if f == "exp":
        return np.exp(x)
    raise ValueError(f"unknown element-wise function {f!r}; expected one of {EWISE_FUNCS}")


def rel_error(got, want) -> float:
    """Max-norm relative error: max|got - want| / max|want| (safe near zero)."""
    got = np.asarray(got, dtype=np.float32)
    want = np.asarray(want, dtype=np.float32)
    if got.shape != want.shape:
        raise ShapeError(f"shape mismatch: {got.shape} vs {want.shape}")
    denom = max(float(np.abs(want).max(initial=0.0)), float(np.finfo(np.float32).tiny))
    return float(np.abs(got - want).max(initial=0.0)) / denom


def ewise_ref(f: str, a, mul_in=None, add_in=None) -> np.ndarray:
    """Element-wise f(a * mul_in + add_in) with absent operands as identities."""
    a = as_matrix(a)
    out = a
    if mul_in is not None:
        mul_in = as_matrix(mul_in)
        if mul_in.shape != a.shape:
            raise ShapeError(f"mul operand shape {mul_in.shape} != {a.shape}")
        out = out * mul_in
    if add_in is not None:
        add_in = as_matrix(add_in)
        if add_in.shape != a.shape:
            raise ShapeError(f"add operand shape {add_in.shape} != {a.shape}")
        out = out + add_in
    out = _apply_func(f, out)
    if out is a:
        out = a.copy()
    return out
