"""Agreement between a hard classification and known labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


def crosstab(assigned, truth):
    """Contingency table with rows = assigned labels, columns = true labels.

    Returns ``(table, row_labels, col_labels)``.
    """
    a = np.asarray(assigned)
    t = np.asarray(truth)
    if a.shape != t.shape or a.ndim != 1:
        raise ValueError("assigned and truth must be 1-d arrays of equal length")
    rows, ai = np.unique(a, return_inverse=True)
    cols, ti = np.unique(t, return_inverse=True)
    table = np.zeros((len(rows), len(cols)), dtype=int)
    np.add.at(table, (ai, ti), 1)
    return table, rows, cols


@dataclass
class Misclassification:
    overall: float
    per_group: dict
    crosstab: np.ndarray
    row_labels: np.ndarray
    col_labels: np.ndarray
    mapping: dict

    def __iter__(self):
        return iter((self.overall, self.per_group, self.crosstab))

    def misclassified_by_truth(self):
        """Number of misclassified points in each true group."""
        out = {}
        for j, lab in enumerate(self.col_labels):
            total = int(self.crosstab[:, j].sum())
            hit = 0
            for i, row in enumerate(self.row_labels):
                if self.mapping.get(row) == lab:
                    hit += int(self.crosstab[i, j])
            out[lab.item() if hasattr(lab, "item") else lab] = total - hit
        return out


def misclassification_rate(assigned, truth):
    """Misclassification after matching fitted groups to true groups.

    Groups are matched one-to-one by the assignment maximising the matched
    counts; assigned groups left unmatched count as errors.
    """
    table, rows, cols = crosstab(assigned, truth)
    r, c = linear_sum_assignment(-table)
    mapping = {rows[i].item(): cols[j].item() for i, j in zip(r, c)}
    correct = int(table[r, c].sum())
    n = int(table.sum())
    per_group = {}
    for j, lab in enumerate(cols):
        total = int(table[:, j].sum())
        matched = [i for i, jj in zip(r, c) if jj == j]
        hit = int(table[matched[0], j]) if matched else 0
        per_group[lab.item()] = 1.0 - hit / total
    return Misclassification(1.0 - correct / n, per_group, table, rows, cols, mapping)


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def adjusted_rand(assigned, truth):
    """Hubert-Arabie adjusted Rand index from the contingency table."""
    table, _, _ = crosstab(assigned, truth)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (one block each, or all singletons)
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))
