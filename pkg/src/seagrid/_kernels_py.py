"""Pure-numpy fallback implementations of the hot accumulation kernels.

The barrier solver spends most of its time scattering small per-constraint
gradient/Hessian contributions into the dense Newton system.  The compiled
extension (_kernels.pyx) does the same work with typed loops; this module is
the reference implementation and the fallback when the extension is missing.
Both must stay numerically identical (same operation order per block).
"""

import numpy as np

BACKEND = "python"


def accum_outer(H, g, idx, w):
    """H[np.ix_(idx, idx)] += w * outer(g, g) for a small local gradient g."""
    H[np.ix_(idx, idx)] += w * np.outer(g, g)


def accum_block(H, B, idx, w):
    """H[np.ix_(idx, idx)] += w * B for a small dense block B."""
    H[np.ix_(idx, idx)] += w * B


def accum_vec(out, g, idx, w):
    """out[idx] += w * g."""
    out[idx] += w * g


def scatter_rows(M, rows, idx_flat, idx_ptr, contrib_flat):
    """For term t: M[rows[t], idx_flat[ptr[t]:ptr[t+1]]] += contrib chunk.

    Used to build the dense per-atom gradient matrix from quadratic-term
    contributions (ragged layout: idx_ptr delimits each term's columns).
    """
    for t in range(rows.shape[0]):
        lo, hi = idx_ptr[t], idx_ptr[t + 1]
        M[rows[t], idx_flat[lo:hi]] += contrib_flat[lo:hi]


def accum_blocks(H, blocks_flat, idx_flat, idx_ptr, weights):
    """For term t with k_t = ptr[t+1]-ptr[t] columns: H[ix(idx_t)] += w_t * B_t.

    blocks_flat concatenates the row-major k_t x k_t blocks in term order.
    """
    boff = 0
    for t in range(weights.shape[0]):
        lo, hi = idx_ptr[t], idx_ptr[t + 1]
        k = hi - lo
        idx = idx_flat[lo:hi]
        B = blocks_flat[boff:boff + k * k].reshape(k, k)
        H[np.ix_(idx, idx)] += weights[t] * B
        boff += k * k
