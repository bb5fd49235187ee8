"""Least-squares scaling fits of gate duration versus qudit dimension."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODELS = ("linear", "quadratic")


@dataclass(frozen=True)
class FitResult:
    """Polynomial fit T(d) with coefficient standard errors and R^2.

    ``a`` is the quadratic coefficient (None for linear fits); ``b`` and
    ``c`` are the linear and constant terms, in ns.  ``degenerate`` marks a
    zero-variance response, where R^2 is reported as 1 by convention.
    """

    model: str
    a: float | None
    b: float
    c: float
    std_errors: tuple[float, ...]
    r_squared: float
    degenerate: bool = False


def fit(points, model: str) -> FitResult:
    """Ordinary least squares of duration against dimension.

    ``points`` is a sequence of (d, T_ns) pairs with at least
    degree + 2 distinct d values.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (d, T) pairs")
    d, t = pts[:, 0], pts[:, 1]
    degree = 1 if model == "linear" else 2
    n_params = degree + 1
    if len(np.unique(d)) < n_params + 1:
        raise ValueError(
            f"{model} fit needs at least {n_params + 1} distinct d values"
        )

    design = np.vander(d, n_params)  # columns: d^degree, ..., d, 1
    coeffs, _, rank, _ = np.linalg.lstsq(design, t, rcond=None)
    if rank < n_params:
        raise ValueError("rank-deficient design matrix")

    residuals = t - design @ coeffs
    ss_res = float(residuals @ residuals)
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    dof = len(t) - n_params
    sigma2 = ss_res / dof if dof > 0 else 0.0
    covariance = sigma2 * np.linalg.inv(design.T @ design)
    std_errors = tuple(np.sqrt(np.diag(covariance)))

    degenerate = ss_tot == 0.0
    r_squared = 1.0 if degenerate else 1.0 - ss_res / ss_tot

    if model == "linear":
        return FitResult("linear", None, coeffs[0], coeffs[1], std_errors,
                         r_squared, degenerate)
    return FitResult("quadratic", coeffs[0], coeffs[1], coeffs[2], std_errors,
                     r_squared, degenerate)


def evaluate_fit(result: FitResult, d: float) -> float:
    """Predicted duration at dimension d."""
    quad = result.a if result.a is not None else 0.0
    return quad * d * d + result.b * d + result.c
