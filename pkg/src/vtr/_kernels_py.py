"""Numpy fallback for the block-wise matmul kernel.

Same tile-buffer contract as the compiled extension. The k-block outer
order is preserved; within a b x b tile the accumulation order is
delegated to np.matmul.
"""

import numpy as np


def dbmm_blocks(a: np.ndarray, wt: np.ndarray, out: np.ndarray) -> None:
    k_blocks = a.shape[1]
    for kb in range(k_blocks):
        out += np.matmul(a[:, kb][:, None, :, :], wt[None, :, kb, :, :])
