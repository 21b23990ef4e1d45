from typing import Tuple

import numpy as np


def mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    """Pooled mean of a sample and its Monte-Carlo standard error."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def variance_and_se(values: np.ndarray) -> Tuple[float, float]:
    """Unbiased sample variance and its standard error.

    The standard error uses the fourth central moment, so it stays honest for
    non-Gaussian samples such as Gamma estimates."""
    values = np.asarray(values, dtype=float).ravel()
    m = values.size
    if m < 2:
        return 0.0, 0.0
    centred = values - values.mean()
    var = float(centred @ centred / (m - 1))
    m4 = float(np.mean(centred**4))
    se = np.sqrt(max(m4 - var**2 * (m - 3) / (m - 1), 0.0) / m)
    return var, float(se)


def symmetric_lag_sum(rho: np.ndarray, power: float, absolute: bool = False) -> float:
    """Sum over k in Z, |k| <= K, of rho(|k|)**power, given rho(0..K)."""
    rho = np.asarray(rho, dtype=float)
    values = np.abs(rho) if absolute else rho
    terms = values**power
    return float(terms[0] + 2.0 * terms[1:].sum())


def z_score(difference: float, se: float, floor: float = 1e-12) -> float:
    """|difference| in standard errors; exact agreement scores 0 even when se is 0"""
    if abs(difference) <= floor:
        return 0.0
    if se <= 0.0:
        return float("inf")
    return abs(difference) / se
