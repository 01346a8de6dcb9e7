"""Pure numpy implementations of the hot kernels.

These are the reference fallbacks used when the compiled ``_ckernels``
extension is unavailable (or disabled with ``ACGNET_PURE_PYTHON=1``).
Signatures and results match the extension exactly.
"""

import numpy as np


def sparsify_rows(combined, lam, k):
    """Keep, per row, the top-``k`` entries that are strictly above ``lam``.

    Ranking is by descending weight with ties broken by ascending column
    index, so the result is fully deterministic.
    """
    combined = np.ascontiguousarray(combined, dtype=np.float64)
    n_rows, n_cols = combined.shape
    out = np.zeros_like(combined)
    if n_cols == 0 or k <= 0:
        return out
    k = min(int(k), n_cols)
    # stable sort of the negated row keeps ascending index among ties
    order = np.argsort(-combined, axis=1, kind="stable")[:, :k]
    rows = np.arange(n_rows)[:, None]
    top = combined[rows, order]
    keep = top > lam
    out[np.broadcast_to(rows, order.shape)[keep], order[keep]] = top[keep]
    return out


def epm_term(enhanced, original, sparse_adj, weights):
    """Loss and gradient of one video's easy-positive-mining sum.

    Returns ``(sum_{i,j: A'_ij > 0} w_j ||f'_i - f_j||^2, d/df')``; the
    caller applies the 1/N corpus normalisation.
    """
    mask = (sparse_adj > 0).astype(np.float64)
    mw = mask * weights[None, :]
    row_w = mw.sum(axis=1)
    pulled = mw @ original
    sq_orig = np.einsum("ij,ij->i", original, original)
    sq_enh = np.einsum("ij,ij->i", enhanced, enhanced)
    loss = (
        float(row_w @ sq_enh)
        - 2.0 * float(np.einsum("ij,ij->", enhanced, pulled))
        + float(mw.sum(axis=0) @ sq_orig)
    )
    grad = 2.0 * (row_w[:, None] * enhanced - pulled)
    # the expansion above can dip a hair below zero through cancellation
    return max(loss, 0.0), grad


def greedy_match(ious, threshold):
    """Greedy proposal-to-ground-truth assignment.

    ``ious`` is a (proposals x gts) matrix with proposals already in rank
    order; entries for pairs from different videos must be set negative.
    Each proposal takes the unmatched GT with the highest IoU that reaches
    ``threshold`` (lowest GT index on ties). Returns ``(tp, match)`` where
    ``match[i]`` is the GT index or -1.
    """
    ious = np.asarray(ious, dtype=np.float64)
    n_props, n_gts = ious.shape
    tp = np.zeros(n_props, dtype=np.int8)
    match = np.full(n_props, -1, dtype=np.int64)
    taken = np.zeros(n_gts, dtype=bool)
    for i in range(n_props):
        row = np.where(taken, -np.inf, ious[i])
        if n_gts == 0:
            continue
        j = int(np.argmax(row))
        if row[j] >= threshold:
            taken[j] = True
            tp[i] = 1
            match[i] = j
    return tp, match
