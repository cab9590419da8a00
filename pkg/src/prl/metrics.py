"""Evaluation metrics: clean, augmented and adversarial accuracy, ProbAcc and test-time CVaR."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import Model
from .perturb import PerturbationSpec, sample_perturbation
from .riskcore import cvar_uniform

# points processed per chunk is chosen so that n * M * d stays below this
_CHUNK = 4_000_000


def _chunks(n, per_point):
    step = max(1, _CHUNK // max(1, per_point))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _perturbed(model, x, perturbation, M, rng, fn):
    # fn(outputs_or_inputs...) over (n, M) blocks, concatenated along points
    parts = []
    for sl in _chunks(len(x), M * x.shape[1]):
        xs = x[sl]
        delta = sample_perturbation(perturbation, rng, (xs.shape[0], M))
        parts.append(fn(sl, (xs[:, None, :] + delta).reshape(-1, x.shape[1])))
    return np.concatenate(parts)


def correct_counts(model: Model, x, y, perturbation: PerturbationSpec, M: int, rng) -> np.ndarray:
    """Number of correctly classified perturbed copies per point (out of ``M``)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)

    def count(sl, xp):
        pred = model.predict(xp).reshape(-1, M)
        return (pred == y[sl, None]).sum(axis=1)

    return _perturbed(model, x, perturbation, M, rng, count)


def prob_acc(model: Model, x, y, perturbation: PerturbationSpec, rho: float, N_mc: int = 100,
             rng: np.random.Generator | None = None) -> float:
    """Fraction of points whose perturbed accuracy estimate is at least ``1 - rho``."""
    if N_mc < 1:
        raise ValueError("N_mc must be >= 1")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rng is None:
        raise ValueError("prob_acc needs an rng")
    k = correct_counts(model, x, y, perturbation, N_mc, rng)
    # integer comparison k >= (1 - rho) N with slack for the float product
    return float(np.mean(k >= (1.0 - rho) * N_mc - 1e-9))


def min_draws(tail: float) -> int:
    return math.ceil(1.0 / tail - 1e-9)


def cvar_test(model: Model, x, y, perturbation: PerturbationSpec, tail: float, M: int,
              rng: np.random.Generator) -> float:
    """Per-point CVaR of the perturbed loss over its worst ``tail`` mass, averaged over points.

    ``tail = 0.05`` is the usual ``CVaR_0.95``.
    """
    if not 0.0 < tail <= 1.0:
        raise ValueError(f"tail must lie in (0, 1], got {tail}")
    if M < min_draws(tail):
        raise ValueError(f"M={M} draws cannot resolve a tail of {tail}; need >= {min_draws(tail)}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)

    def per_point(sl, xp):
        losses = model.losses(xp, np.repeat(y[sl], M)).reshape(-1, M)
        return cvar_uniform(losses, tail)

    return float(np.mean(_perturbed(model, x, perturbation, M, rng, per_point)))


@dataclass
class MetricsReport:
    clean_acc: float
    aug_acc: float
    adv_acc: float
    prob_acc: dict[float, float] = field(default_factory=dict)
    cvar_test: dict[float, float] = field(default_factory=dict)
    n_points: int = 0
    aug_M: int = 0
    prob_M: int = 0
    cvar_M: int = 0
    pgd_steps: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["prob_acc"] = {repr(k): v for k, v in self.prob_acc.items()}
        out["cvar_test"] = {repr(k): v for k, v in self.cvar_test.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def flat(self) -> dict:
        row = {"clean_acc": self.clean_acc, "aug_acc": self.aug_acc, "adv_acc": self.adv_acc}
        row.update({f"prob_acc@{k!r}": v for k, v in self.prob_acc.items()})
        row.update({f"cvar_test@{k!r}": v for k, v in self.cvar_test.items()})
        row.update(n_points=self.n_points, aug_M=self.aug_M, prob_M=self.prob_M,
                   cvar_M=self.cvar_M, pgd_steps=self.pgd_steps)
        return row

    def csv_row(self, header: bool = False, **extra) -> str:
        row = {**extra, **self.flat()}
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()


def accuracies(model: Model, x, y, perturbation: PerturbationSpec, aug_M: int, pgd_steps: int,
               pgd_step_size: float, rng: np.random.Generator, rhos=(), tails=(),
               prob_M: int = 100, cvar_M: int = 100) -> MetricsReport:
    """Clean, augmented and PGD accuracy plus optional ProbAcc / CVaR columns."""
    from .trainer import pgd_attack

    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    clean = float(np.mean(model.predict(x) == y))
    aug = float(correct_counts(model, x, y, perturbation, aug_M, rng).mean() / aug_M)
    delta = pgd_attack(model, x, y, perturbation, pgd_steps, pgd_step_size)
    adv = float(np.mean(model.predict(x + delta) == y))
    report = MetricsReport(clean, aug, adv, n_points=len(x), aug_M=aug_M, prob_M=prob_M,
                           cvar_M=cvar_M, pgd_steps=pgd_steps)
    for rho in rhos:
        report.prob_acc[float(rho)] = prob_acc(model, x, y, perturbation, rho, prob_M, rng)
    for tail in tails:
        report.cvar_test[float(tail)] = cvar_test(model, x, y, perturbation, tail, cvar_M, rng)
    return report
