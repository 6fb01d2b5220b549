"""Small argument-validation helpers shared across the package."""

from __future__ import annotations


def check_probability(p, name):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def check_positive_int(v, name):
    if int(v) != v or v < 1:
        raise ValueError(f"{name} must be a positive integer, got {v}")


def check_ratio(r):
    if not 0.0 < r <= 1.0:
        raise ValueError(f"coarsening ratio must lie in (0, 1], got {r}")


def check_in(value, options, name):
    if value not in options:
        raise ValueError(f"{name} must be one of {sorted(options)}, got {value!r}")
