"""Closed-form cost-model calculators for coarsened subgraph inference.

For n nodes with feature dimension d, the classical per-prediction cost is
n^2 d + n d^2 multiply-adds. Splitting into k = n*r clusters of sizes n_i,
each padded by at most phi augmentation nodes, costs
sum_i [(n_i + phi)^2 d + (n_i + phi) d^2], which stays below the classical
cost whenever r <= (d - 2) / (d + phi) and phi <= (n^2 - sum n_i^2) / (n d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def phi_max_bound(d, r):
    """Largest augmentation budget phi for which the ratio condition permits
    ratio r; negative values signal infeasibility at that ratio."""
    if d < 1:
        raise ValueError(f"feature dimension must be >= 1, got {d}")
    if not 0.0 < r <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {r}")
    return (d - 2.0 - r * d) / r


def ratio_bound(d, phi_max):
    """Largest admissible coarsening ratio for an augmentation budget."""
    if d < 1:
        raise ValueError(f"feature dimension must be >= 1, got {d}")
    if phi_max < 0:
        raise ValueError(f"phi_max must be nonnegative, got {phi_max}")
    return (d - 2.0) / (d + phi_max)


def phi_second_bound(n, d, cluster_sizes):
    """Size-based augmentation bound (n^2 - sum n_i^2) / (n d)."""
    sizes = np.asarray(cluster_sizes, dtype=np.float64)
    if sizes.sum() != n:
        raise ValueError(f"cluster sizes sum to {sizes.sum()}, expected {n}")
    return float((n * n - (sizes * sizes).sum()) / (n * d))


@dataclass(frozen=True)
class Lemma2Result:
    lhs: float
    rhs: float
    holds: bool
    ratio_condition: bool
    size_condition: bool


def lemma2_check(n, d, cluster_sizes, phi_max):
    """Evaluate both sides of the inference-cost inequality.

    Also checks the two sufficient conditions; when both are met the
    inequality is guaranteed, so a violation in that regime raises.
    """
    sizes = np.asarray(cluster_sizes, dtype=np.float64)
    if sizes.sum() != n:
        raise ValueError(f"cluster sizes sum to {sizes.sum()}, expected {n}")
    padded = sizes + phi_max
    lhs = float((padded * padded * d + padded * d * d).sum())
    rhs = float(n * n * d + n * d * d)
    r = len(sizes) / n
    ratio_ok = r <= (d - 2.0) / (d + phi_max) if d + phi_max > 0 else False
    size_ok = phi_max <= phi_second_bound(n, d, cluster_sizes)
    holds = lhs <= rhs
    if ratio_ok and size_ok and not holds:
        raise AssertionError(
            f"cost bound violated with both conditions met: {lhs} > {rhs}")
    return Lemma2Result(lhs=lhs, rhs=rhs, holds=holds,
                        ratio_condition=ratio_ok, size_condition=size_ok)


def time_diff_T(n, d, alpha, phi_max):
    """Per-prediction saving of subgraph inference over the classical pass,
    with the largest cluster modeled as n / alpha."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    biggest = n / alpha + phi_max
    return float(n * n * d + n * d * d - (biggest * biggest * d + biggest * d * d))


def _balanced_sizes(n, k):
    q, rem = divmod(n, k)
    return [q + 1] * rem + [q] * (k - rem)


def feasibility_region(d, n_values, r_values, phi):
    """Rows (n, r, feasible) for a grid, assuming balanced cluster sizes.

    A point is feasible when an augmentation budget of ``phi`` satisfies both
    cost-model conditions.
    """
    rows = []
    for n in n_values:
        for r in r_values:
            k = min(n, max(1, int(np.floor(n * r + 0.5))))
            ratio_ok = r <= ratio_bound(d, phi)
            size_ok = phi <= phi_second_bound(n, d, _balanced_sizes(n, k))
            rows.append((int(n), float(r), bool(ratio_ok and size_ok)))
    return rows


def save_feasibility_csv(rows, path):
    lines = ["n,r,feasible"]
    lines.extend(f"{n},{r},{str(f).lower()}" for n, r, f in rows)
    from pathlib import Path
    Path(path).write_text("\n".join(lines) + "\n")
