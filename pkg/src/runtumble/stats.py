"""Small error-bar helpers shared by the Monte Carlo routines."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

__all__ = ["jackknife", "jackknife_mean", "batch_means", "log_mean_exp_loo"]


def jackknife(loo_estimates) -> tuple[float, float]:
    """(mean of leave-one-out estimates, jackknife standard error)."""
    loo = np.asarray(loo_estimates, dtype=float)
    n = loo.size
    if n < 2:
        return float(loo.mean()) if n else float("nan"), float("nan")
    centre = loo.mean()
    return float(centre), float(np.sqrt((n - 1) / n * np.sum((loo - centre) ** 2)))


def jackknife_mean(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return float(values.mean()), float("nan")
    loo = (values.sum() - values) / (n - 1)
    return float(values.mean()), jackknife(loo)[1]


def batch_means(batch_values) -> tuple[float, float]:
    """Mean of per-batch estimates and its standard error."""
    b = np.asarray(batch_values, dtype=float)
    if b.size < 2:
        return float(b.mean()), float("nan")
    return float(b.mean()), float(b.std(ddof=1) / np.sqrt(b.size))


def log_mean_exp_loo(log_terms) -> np.ndarray:
    """Leave-one-out log(mean(exp(a_j), j != i)) for every i, without overflow."""
    a = np.asarray(log_terms, dtype=float)
    n = a.size
    k = int(np.argmax(a))
    top = a[k]
    w = np.exp(a - top)
    # removing any term but the largest leaves at least w[k] = 1, so the
    # subtraction is well conditioned; the largest one is dropped explicitly
    with np.errstate(divide="ignore"):  # entry k may round to log(0); it is replaced below
        out = top + np.log(w.sum() - w) - np.log(n - 1)
    out[k] = logsumexp(np.delete(a, k)) - np.log(n - 1)
    return out
