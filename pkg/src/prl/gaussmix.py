"""Two-class Gaussian mixture: optimal linear classifiers and their risks.

Data model: ``y = +1`` with probability ``pi_plus`` else ``-1``, and
``x | y ~ N(y * mu, I_d)``. Perturbations are uniform on the L2 ball of
radius ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .perturb import NormKind, PerturbationSpec, sample_perturbation

_BISECT_MAX_ITER = 200


def normal_cdf(z):
    return special.ndtr(z)


def normal_ppf(p):
    return special.ndtri(p)


@dataclass(frozen=True)
class GaussianMixtureSpec:
    mu: np.ndarray
    pi_plus: float = 0.5

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).ravel()
        if mu.size == 0 or not np.linalg.norm(mu) > 0:
            raise ValueError("mu must be a non-zero vector")
        if not 0.0 <= self.pi_plus <= 1.0:
            raise ValueError("pi_plus must lie in [0, 1]")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def mu_norm(self) -> float:
        return float(np.linalg.norm(self.mu))

    @property
    def log_odds(self) -> float:
        """``q = ln((1 - pi) / pi)`` with ``ln(0) = -inf``."""
        with np.errstate(divide="ignore"):
            return float(np.log(1.0 - self.pi_plus) - np.log(self.pi_plus))

    @classmethod
    def isotropic(cls, dim: int, mu_norm: float, pi_plus: float = 0.5) -> "GaussianMixtureSpec":
        """Mean along the all-ones direction with a dimension-free norm."""
        return cls(np.full(dim, mu_norm / math.sqrt(dim)), pi_plus)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        y = np.where(rng.random(n) < self.pi_plus, 1.0, -1.0)
        x = y[:, None] * self.mu + rng.standard_normal((n, self.dim))
        return x, y


@dataclass(frozen=True)
class LinearHypothesis:
    """Classifier ``sign(w.x - c)`` with ``sign(0) = +1``."""

    w: np.ndarray
    c: float

    def __post_init__(self):
        object.__setattr__(self, "w", np.array(self.w, dtype=float).ravel())
        object.__setattr__(self, "c", float(self.c))

    @property
    def w_norm(self) -> float:
        return float(np.linalg.norm(self.w))

    def decision(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.w - self.c

    def predict(self, x) -> np.ndarray:
        return np.where(self.decision(x) >= 0, 1.0, -1.0)


def cap_measure(d: int, h_over_eps: float) -> float:
    """Uniform-ball measure of the cap ``{delta : delta_1 >= h}``, ``h = h_over_eps * eps``.

    Exact for every dimension: ``0.5 * I_{1-t^2}((d+1)/2, 1/2)`` for ``t >= 0``
    and the complement by symmetry for ``t < 0``.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    t = float(h_over_eps)
    if abs(t) > 1.0:
        raise ValueError(f"h_over_eps must lie in [-1, 1], got {t}")
    if t < 0:
        return 1.0 - cap_measure(d, -t)
    return 0.5 * float(special.betainc((d + 1) / 2.0, 0.5, 1.0 - t * t))


def cap_distance_v_rho(d: int, eps: float, rho: float) -> float:
    """Signed distance from the ball centre to the cap of measure ``rho``.

    Solved by bisection on the exact cap measure. ``rho = 0`` gives ``eps``,
    ``rho = 1/2`` gives 0, and ``rho > 1/2`` is answered through
    ``v_rho = -v_{1-rho}``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rho == 0.0:
        return float(eps)
    if rho == 1.0:
        return -float(eps)
    if rho == 0.5:
        return 0.0
    if rho > 0.5:
        return -cap_distance_v_rho(d, eps, 1.0 - rho)

    lo, hi = 0.0, 1.0  # cap_measure(lo) = 1/2 > rho >= cap_measure(hi) = 0
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            return eps * mid
        if cap_measure(d, mid) > rho:
            lo = mid
        else:
            hi = mid
    raise ArithmeticError(f"bisection did not converge for d={d}, rho={rho}")


def cap_distance_asymptotic(d: int, eps: float, rho: float) -> float:
    """High-dimensional approximation ``eps * Phi^{-1}(1 - rho) / sqrt(d)``."""
    return float(eps * normal_ppf(1.0 - rho) / math.sqrt(d))


def bayes_hypothesis(spec: GaussianMixtureSpec) -> LinearHypothesis:
    return LinearHypothesis(spec.mu.copy(), spec.log_odds / 2.0)


def prob_robust_hypothesis(spec: GaussianMixtureSpec, eps: float, rho: float) -> LinearHypothesis:
    """Optimal linear classifier for the probabilistically robust 0-1 risk.

    The Bayes rule with the mean shrunk to ``mu * (1 - v_rho / ||mu||)_+``.
    ``rho = 0`` is the adversarially robust classifier and ``rho = 1/2`` the
    Bayes classifier.
    """
    if not eps < spec.mu_norm:
        raise ValueError(f"requires eps < ||mu|| ({eps} >= {spec.mu_norm})")
    if not 0.0 <= rho <= 0.5:
        raise ValueError(f"rho must lie in [0, 1/2], got {rho}")
    v = cap_distance_v_rho(spec.dim, eps, rho)
    shrink = max(0.0, 1.0 - v / spec.mu_norm)
    return LinearHypothesis(spec.mu * shrink, spec.log_odds / 2.0)


def _constant_risk(hyp: LinearHypothesis, spec: GaussianMixtureSpec) -> float:
    predicts_plus = -hyp.c >= 0
    return (1.0 - spec.pi_plus) if predicts_plus else spec.pi_plus


def _margin_risk(hyp, spec, shift):
    # Misclassification mass once each class must clear a margin of `shift`
    # (in units of the projected coordinate).
    wn = hyp.w_norm
    wmu = float(hyp.w @ spec.mu)
    plus = normal_cdf((hyp.c + wn * shift - wmu) / wn)
    minus = normal_cdf(-(hyp.c - wn * shift + wmu) / wn)
    return _mix(spec.pi_plus, plus, minus)


def _mix(pi, plus, minus):
    # avoids 0 * nan when a class has zero prior and an infinite threshold
    total = 0.0
    if pi > 0:
        total += pi * plus
    if pi < 1:
        total += (1.0 - pi) * minus
    return float(total)


def standard_risk(hyp: LinearHypothesis, spec: GaussianMixtureSpec) -> float:
    """Closed-form 0-1 risk of a linear classifier on the mixture."""
    if hyp.w_norm == 0:
        return _constant_risk(hyp, spec)
    return _margin_risk(hyp, spec, 0.0)


def prob_risk(hyp: LinearHypothesis, spec: GaussianMixtureSpec, eps: float, rho: float) -> float:
    """Closed-form probabilistically robust 0-1 risk at tolerance ``rho``.

    A point is rho-robustly correct exactly when its signed margin along
    ``w / ||w||`` is at least ``v_rho``.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    if hyp.w_norm == 0:
        return _constant_risk(hyp, spec)
    return _margin_risk(hyp, spec, cap_distance_v_rho(spec.dim, eps, rho))


def mc_prob_risk(
    hyp: LinearHypothesis,
    spec: GaussianMixtureSpec,
    perturbation: PerturbationSpec,
    rho: float,
    n_points: int,
    M: int,
    rng: np.random.Generator,
    chunk: int = 2_000_000,
) -> float:
    """Monte-Carlo estimate of the probabilistically robust risk.

    Each of ``n_points`` fresh samples gets ``M`` perturbations; a point counts
    as an error when the fraction of misclassified perturbations exceeds
    ``rho``.
    """
    if n_points < 1 or M < 1:
        raise ValueError("n_points and M must be >= 1")
    x, y = spec.sample(n_points, rng)
    per_chunk = max(1, chunk // (M * perturbation.dim))
    errors = 0
    for start in range(0, n_points, per_chunk):
        xs, ys = x[start:start + per_chunk], y[start:start + per_chunk]
        delta = sample_perturbation(perturbation, rng, (xs.shape[0], M))
        wrong = hyp.predict(xs[:, None, :] + delta) != ys[:, None]
        frac = wrong.mean(axis=1)
        errors += int(np.count_nonzero(frac > rho))
    return errors / n_points


@dataclass(frozen=True)
class GapPoint:
    d: int
    rho: float
    gap_closed_form: float
    gap_mc: float = float("nan")
    mc_stderr: float = float("nan")


def gap_curve(
    dims,
    mu_norm: float,
    eps: float,
    rho: float,
    pi_plus: float = 0.5,
    mc_points: int = 0,
    mc_draws: int = 0,
    rng: np.random.Generator | None = None,
) -> list[GapPoint]:
    """Gap ``PR(h_p; rho) - SR(h_Bayes)`` across dimensions at fixed ``||mu||``.

    The mean is ``mu_norm * 1_d / sqrt(d)`` so that only the dimension changes.
    When ``mc_points`` and ``mc_draws`` are positive the probabilistic risk is
    also estimated by :func:`mc_prob_risk`; the Bayes risk term always uses
    its closed form.
    """
    out = []
    for d in dims:
        spec = GaussianMixtureSpec.isotropic(int(d), mu_norm, pi_plus)
        hp = prob_robust_hypothesis(spec, eps, rho)
        sr = standard_risk(bayes_hypothesis(spec), spec)
        closed = prob_risk(hp, spec, eps, rho) - sr
        if mc_points > 0 and mc_draws > 0:
            if rng is None:
                raise ValueError("an rng is required for the Monte-Carlo column")
            pert = PerturbationSpec(NormKind.L2, eps, int(d))
            p = mc_prob_risk(hp, spec, pert, rho, mc_points, mc_draws, rng)
            out.append(GapPoint(int(d), rho, closed, p - sr, math.sqrt(p * (1 - p) / mc_points)))
        else:
            out.append(GapPoint(int(d), rho, closed))
    return out
