# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernel for block-wise matrix multiplication.

Tile buffers come in pre-blocked:
  a   -- (row_blocks, k_blocks, b, b) left tiles, block-row-major
  wt  -- (col_blocks, k_blocks, b, b) right tiles, block-column-major buffer
  out -- (row_blocks, col_blocks, b, b) accumulator

Accumulation order per output element is k-blocks ascending, then
within-block k ascending, in float32 -- the fixed order the direct
engine and the simulator rely on for bit-identical results, stable
across platforms and BLAS builds. The output row is accumulated in a
local buffer (same per-element order) so it can stay in vector
registers across the k loops.
"""

DEF MAX_BLOCK = 128


def dbmm_blocks(const float[:, :, :, ::1] a,
                const float[:, :, :, ::1] wt,
                float[:, :, :, ::1] out):
    cdef Py_ssize_t rb = a.shape[0]
    cdef Py_ssize_t kb_n = a.shape[1]
    cdef Py_ssize_t cb = wt.shape[0]
    cdef Py_ssize_t b = a.shape[2]
    cdef Py_ssize_t ib, jb, kb, i, k, j
    cdef float aik
    cdef float acc[MAX_BLOCK]
    if b <= MAX_BLOCK:
        with nogil:
            for ib in range(rb):
                for jb in range(cb):
                    for i in range(b):
                        for j in range(b):
                            acc[j] = 0.0
                        for kb in range(kb_n):
                            for k in range(b):
                                aik = a[ib, kb, i, k]
                                for j in range(b):
                                    acc[j] = acc[j] + aik * wt[jb, kb, k, j]
                        for j in range(b):
                            out[ib, jb, i, j] = out[ib, jb, i, j] + acc[j]
    else:
        with nogil:
            for ib in range(rb):
                for jb in range(cb):
                    for kb in range(kb_n):
                        for i in range(b):
                            for k in range(b):
                                aik = a[ib, kb, i, k]
                                for j in range(b):
                                    out[ib, jb, i, j] = out[ib, jb, i, j] + aik * wt[jb, kb, k, j]
