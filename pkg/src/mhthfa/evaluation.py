"""Partition agreement: adjusted Rand index and cross-tabulations."""

import numpy as np
from scipy.special import comb

__all__ = ["adjusted_rand_index", "confusion_matrix", "ari_from_table"]


def _pair(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length ({a.size} vs {b.size})")
    return a, b


def confusion_matrix(true_labels, predicted_labels, return_labels=False):
    """Counts of (true, predicted) label pairs.

    Rows follow the sorted distinct true labels and columns the sorted
    distinct predicted labels.  With ``return_labels`` the two label lists
    are returned as well.
    """
    a, b = _pair(true_labels, predicted_labels)
    rows, ia = np.unique(a, return_inverse=True)
    cols, ib = np.unique(b, return_inverse=True)
    table = np.zeros((rows.size, cols.size), dtype=int)
    np.add.at(table, (ia, ib), 1)
    if return_labels:
        return table, rows, cols
    return table


def ari_from_table(table):
    """Hubert-Arabie adjusted Rand index of a contingency table.

    Returns 1.0 when both partitions are trivial (a single cluster or all
    singletons on both sides), where the index is undefined.
    """
    table = np.asarray(table, dtype=np.int64)
    n = int(table.sum())
    index = comb(table, 2).sum()
    rows = comb(table.sum(axis=1), 2).sum()
    cols = comb(table.sum(axis=0), 2).sum()
    expected = rows * cols / comb(n, 2) if n > 1 else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def adjusted_rand_index(a, b):
    """Adjusted Rand index of two labelings of the same items.

    Symmetric, invariant to relabelling, equal to 1 for identical partitions
    and 0 in expectation under random labelling.
    """
    return ari_from_table(confusion_matrix(a, b))
