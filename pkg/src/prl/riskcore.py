"""Empirical rho-esssup and CVaR estimators over weighted loss samples.

Tail-mass convention: ``rho`` is the probability mass of the upper tail that
the risk is allowed to ignore (rho-esssup) or that it averages over (CVaR).
The classical ``CVaR_{1-rho}`` with confidence level ``1 - rho`` corresponds
to ``cvar_sorted(sample, rho)`` here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WEIGHT_TOL = 1e-12
# Slack on "tail weight <= rho" so that uniform weights summed in floating
# point reproduce the integer order-statistic rule.
_TAIL_TOL = 1e-12


class LossSample:
    """Finite weighted sample of scalar losses.

    Parameters
    ----------
    values : array_like of shape (M,)
        Finite loss values.
    weights : array_like of shape (M,), optional
        Positive probabilities summing to one. Uniform when omitted.
    """

    __slots__ = ("values", "weights")

    def __init__(self, values, weights=None):
        values = np.array(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("a loss sample needs at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("loss values must be finite")
        if weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.array(weights, dtype=float).ravel()
            if weights.shape != values.shape:
                raise ValueError("weights and values must have the same length")
            if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
                raise ValueError("weights must be positive and finite")
            if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
                raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        values.setflags(write=False)
        weights.setflags(write=False)
        self.values = values
        self.weights = weights

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"LossSample(M={self.values.size}, mean={self.mean():.6g})"

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))


@dataclass(frozen=True)
class CvarResult:
    alpha_star: float
    value: float
    tail_mass: float


def _check_rho(rho, *, allow_zero: bool):
    if not (0.0 <= rho <= 1.0) or (rho == 0.0 and not allow_zero):
        lo = "[0, 1]" if allow_zero else "(0, 1]"
        raise ValueError(f"tail mass rho must lie in {lo}, got {rho}")


def rho_esssup(sample: LossSample, rho: float) -> float:
    """Smallest ``u`` whose strict exceedance set carries weight at most ``rho``.

    ``rho = 0`` gives the maximum and ``rho = 1`` the minimum of the sample.
    For uniform weights this is the ascending order statistic with index
    ``M - floor(rho * M)`` (1-based).
    """
    _check_rho(rho, allow_zero=True)
    if rho == 1.0:
        return float(sample.values.min())
    uniq, inverse = np.unique(sample.values, return_inverse=True)
    mass = np.bincount(inverse, weights=sample.weights, minlength=uniq.size)
    # weight strictly above each distinct value
    above = np.concatenate([np.cumsum(mass[::-1])[::-1][1:], [0.0]])
    idx = int(np.argmax(above <= rho + _TAIL_TOL))
    return float(uniq[idx])


def _tail_take(sorted_desc_weights: np.ndarray, rho: float) -> np.ndarray:
    before = np.concatenate([[0.0], np.cumsum(sorted_desc_weights)[:-1]])
    return np.clip(rho - before, 0.0, sorted_desc_weights)


def cvar_sorted(sample: LossSample, rho: float) -> float:
    """Average of the worst ``rho`` probability mass of the sample.

    The atom straddling the tail boundary contributes fractionally, which makes
    the estimator exact for discrete laws.
    """
    _check_rho(rho, allow_zero=False)
    order = np.argsort(-sample.values, kind="stable")
    take = _tail_take(sample.weights[order], rho)
    return float(np.dot(take, sample.values[order]) / rho)


def cvar_uniform(values, rho: float, axis: int = -1) -> np.ndarray:
    """Row-wise :func:`cvar_sorted` for uniformly weighted samples along ``axis``."""
    _check_rho(rho, allow_zero=False)
    values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    m = values.shape[-1]
    desc = -np.sort(-values, axis=-1)
    take = _tail_take(np.full(m, 1.0 / m), rho)
    return desc @ take / rho


def cvar_objective(sample: LossSample, alpha: float, rho: float) -> float:
    """Rockafellar-Uryasev objective ``alpha + E[(loss - alpha)_+] / rho``."""
    excess = np.maximum(sample.values - alpha, 0.0)
    return float(alpha + np.dot(sample.weights, excess) / rho)


def cvar_alpha_gradient(sample: LossSample, alpha: float, rho: float) -> float:
    """Subgradient in ``alpha`` of :func:`cvar_objective`.

    Uses the non-strict indicator ``loss >= alpha``, so at a kink this returns
    the left subgradient.
    """
    _check_rho(rho, allow_zero=False)
    fired = np.dot(sample.weights, sample.values >= alpha)
    return float(1.0 - fired / rho)


def cvar_variational(
    sample: LossSample,
    rho: float,
    steps: int = 100,
    step_size: float = 0.1,
    alpha0: float = 0.0,
    exact: bool = False,
) -> CvarResult:
    """Minimize the variational CVaR objective over the threshold ``alpha``.

    With ``exact=False`` runs ``steps`` subgradient iterations
    ``alpha <- alpha - step_size * g`` from ``alpha0`` and reports the objective
    at the final iterate. With ``exact=True`` the piecewise-linear objective is
    minimized over its breakpoints (the sample values and the rho-esssup); the
    left-most minimizer is reported as ``alpha_star``.
    """
    _check_rho(rho, allow_zero=False)
    if exact:
        return _cvar_exact(sample, rho)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    alpha = float(alpha0)
    for _ in range(steps):
        alpha -= step_size * cvar_alpha_gradient(sample, alpha, rho)
        if not np.isfinite(alpha):
            raise FloatingPointError("alpha diverged during subgradient iteration")
    return CvarResult(alpha, cvar_objective(sample, alpha, rho), rho)


def _cvar_exact(sample: LossSample, rho: float) -> CvarResult:
    cand = np.union1d(sample.values, [rho_esssup(sample, rho) if rho < 1 else sample.values.min()])
    # suffix sums over ascending values give E[(loss - a)_+] for every candidate a
    order = np.argsort(sample.values, kind="stable")
    v, w = sample.values[order], sample.weights[order]
    wv_suffix = np.concatenate([np.cumsum((w * v)[::-1])[::-1], [0.0]])
    w_suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    first_above = np.searchsorted(v, cand, side="right")
    excess = wv_suffix[first_above] - cand * w_suffix[first_above]
    objective = cand + excess / rho
    best = objective.min()
    scale = max(1.0, float(np.abs(cand).max()))
    idx = int(np.flatnonzero(objective <= best + 1e-12 * scale)[0])
    return CvarResult(float(cand[idx]), float(best), rho)
