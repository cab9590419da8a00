"""Probabilistically robust training (CVaR-SGD) and the baseline trainers."""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import Model
from .perturb import NormKind, PerturbationSpec, sample_perturbation

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    ERM = "erm"
    ERM_DA = "erm_da"
    PGD_AT = "pgd_at"
    PRL = "prl"


class TrainingDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrainConfig:
    """Hyperparameters shared by every trainer.

    ``rho``, ``M``, ``T`` and ``eta_alpha`` only matter for PRL; ``pgd_steps``
    and ``pgd_step_size`` only for PGD adversarial training. ``trace_mc`` is
    the number of perturbations per point used for the per-epoch ProbAcc and
    CVaR columns (0 leaves them as NaN).

    ``alpha_init="quantile"`` starts every threshold at the empirical
    rho-esssup of ``M`` perturbed losses under the initial model instead of
    at 0. For small ``rho`` the first threshold step from 0 is of size about
    ``eta_alpha / rho`` and the way back down takes ``O(1/rho)`` steps.
    """

    method: Method
    perturbation: PerturbationSpec
    rho: float = 0.1
    M: int = 20
    T: int = 10
    eta: float = 0.1
    eta_alpha: float = 1.0
    batch_size: int = 64
    epochs: int = 10
    pgd_steps: int = 10
    pgd_step_size: float = 0.1
    seed: int = 0
    trace_mc: int = 0
    trace_tail: float = 0.05
    alpha_init: str = "zero"

    def __post_init__(self):
        self.method = Method(self.method)
        if isinstance(self.perturbation, dict):
            self.perturbation = PerturbationSpec.from_dict(self.perturbation)
        for name in ("M", "T", "batch_size", "epochs", "pgd_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.alpha_init not in ("zero", "quantile"):
            raise ValueError("alpha_init must be 'zero' or 'quantile'")
        if self.eta <= 0 or self.eta_alpha <= 0:
            raise ValueError("step sizes must be positive")
        if self.method is Method.PRL:
            if not self.rho > 0:
                raise ValueError(f"rho must be positive, got {self.rho}")
            if self.rho > 1:
                warnings.warn(f"rho={self.rho} > 1 only rescales the hinge term", stacklevel=2)
            if self.rho * self.M < 1:
                warnings.warn(f"rho*M = {self.rho * self.M:.3g} < 1: fewer than one draw in the tail",
                              stacklevel=2)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        out["perturbation"] = self.perturbation.to_dict()
        return out


@dataclass
class EpochRecord:
    epoch: int
    train_objective: float
    clean_acc: float
    prob_acc: float = float("nan")
    cvar_test: float = float("nan")


@dataclass
class TrainResult:
    model: Model
    trace: list[EpochRecord] = field(default_factory=list)
    alpha: np.ndarray | None = None


def _streams(seed: int):
    shuffle, pert, evaluation = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(shuffle), np.random.default_rng(pert),
            np.random.default_rng(evaluation))


def _flat_losses(model, xb, yb, deltas):
    """Losses at ``x_j + delta_jk`` as a ``(B, M)`` array plus the flattened inputs."""
    B, M = deltas.shape[:2]
    xp = (xb[:, None, :] + deltas).reshape(B * M, -1)
    yp = np.repeat(yb, M)
    return model.losses(xp, yp).reshape(B, M), xp, yp


# --- CVaR-SGD building blocks -------------------------------------------------

def prl_alpha_steps(model, xb, yb, alpha, rho, M, T, eta_alpha, perturbation, rng):
    """Inner threshold loop: ``T`` subgradient steps with fresh draws each step.

    Returns the updated thresholds together with the draws and losses of the
    final step, which the outer parameter gradient reuses.
    """
    alpha = np.array(alpha, dtype=float, copy=True)
    for _ in range(T):
        deltas = sample_perturbation(perturbation, rng, (xb.shape[0], M))
        losses, _, _ = _flat_losses(model, xb, yb, deltas)
        g_alpha = 1.0 - (losses >= alpha[:, None]).sum(axis=1) / (rho * M)
        alpha -= eta_alpha * g_alpha
    return alpha, deltas, losses


def prl_objective(model, xb, yb, deltas, alpha, rho) -> float:
    """Minibatch hinge term ``(1 / (rho M B)) sum_jk [loss_jk - alpha_j]_+``."""
    B, M = deltas.shape[:2]
    losses, _, _ = _flat_losses(model, xb, yb, deltas)
    return float(np.maximum(losses - alpha[:, None], 0.0).sum() / (rho * M * B))


def prl_gradient(model, xb, yb, deltas, alpha, rho) -> np.ndarray:
    """Parameter gradient of :func:`prl_objective` (hinge derivative 0 at the kink)."""
    B, M = deltas.shape[:2]
    losses, xp, yp = _flat_losses(model, xb, yb, deltas)
    active = (losses > alpha[:, None]).ravel().astype(float)
    return model.grad_weighted(xp, yp, active) / (rho * M * B)


def initial_alpha(model, x, y, rho, M, perturbation, rng, chunk=1000):
    """Per-example empirical rho-esssup (order statistic) of ``M`` perturbed losses."""
    k = int(np.floor(min(rho, 1.0) * M + 1e-9))  # draws allowed strictly above
    out = np.empty(len(x))
    for s in range(0, len(x), chunk):
        xb, yb = x[s:s + chunk], y[s:s + chunk]
        losses, _, _ = _flat_losses(model, xb, yb,
                                    sample_perturbation(perturbation, rng, (len(xb), M)))
        out[s:s + chunk] = np.sort(losses, axis=1)[:, M - 1 - min(k, M - 1)]
    return out


def _cvar_batch_estimate(losses, alpha, rho):
    return float(np.mean(alpha + np.maximum(losses - alpha[:, None], 0.0).mean(axis=1) / rho))


# --- adversary ------------------------------------------------------------------

def pgd_attack(model: Model, x, y, perturbation: PerturbationSpec, steps: int,
               step_size: float) -> np.ndarray:
    """Projected gradient ascent on the loss, started at ``delta = 0``.

    Linf balls step along the gradient sign, L2 balls along the normalized
    gradient; every iterate is projected back onto the ball.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    delta = np.zeros_like(x)
    for _ in range(steps):
        g = model.input_grads(x + delta, y)
        if perturbation.norm_kind is NormKind.LINF:
            direction = np.sign(g)
        else:
            norms = np.linalg.norm(g, axis=1, keepdims=True)
            direction = np.divide(g, norms, out=np.zeros_like(g), where=norms > 0)
        delta = perturbation.project(delta + step_size * direction)
    return delta


# --- training loops -------------------------------------------------------------

def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _record(epoch, objective, model, x, y, cfg, eval_rng):
    from .metrics import cvar_test, prob_acc

    rec = EpochRecord(epoch, objective, float(np.mean(model.predict(x) == y)))
    if cfg.trace_mc > 0 and model.kind.value != "linear_squared":
        rho = min(cfg.rho, 1.0)
        rec.prob_acc = prob_acc(model, x, y, cfg.perturbation, rho, cfg.trace_mc, eval_rng)
        m = max(cfg.trace_mc, math.ceil(1.0 / cfg.trace_tail))
        rec.cvar_test = cvar_test(model, x, y, cfg.perturbation, cfg.trace_tail, m, eval_rng)
    return rec


def _check_finite(model, objective, trace, epoch):
    if not (np.all(np.isfinite(model.params)) and np.isfinite(objective)):
        raise TrainingDiverged(f"non-finite loss or parameters in epoch {epoch}", trace)


def prl_train(x, y, model0: Model, cfg: TrainConfig, alpha0=None) -> TrainResult:
    """CVaR-SGD for probabilistically robust learning.

    Every training example keeps its own threshold ``alpha_j``, starting at 0
    (or ``alpha0``) and carried across epochs. Per minibatch: ``T`` threshold
    steps, each with ``M`` fresh perturbations per example, then one
    parameter step on the hinge objective using the last draws.
    """
    if cfg.method is not Method.PRL:
        raise ValueError("prl_train needs cfg.method == PRL")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shuffle_rng, pert_rng, eval_rng = _streams(cfg.seed)
    model = model0.copy()
    if alpha0 is not None:
        alpha = np.array(alpha0, dtype=float)
    elif cfg.alpha_init == "quantile":
        alpha = initial_alpha(model, x, y, cfg.rho, cfg.M, cfg.perturbation, pert_rng)
    else:
        alpha = np.zeros(len(x))
    trace: list[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        objectives = []
        for idx in _batches(len(x), cfg.batch_size, shuffle_rng):
            xb, yb = x[idx], y[idx]
            a, deltas, losses = prl_alpha_steps(model, xb, yb, alpha[idx], cfg.rho, cfg.M, cfg.T,
                                                cfg.eta_alpha, cfg.perturbation, pert_rng)
            alpha[idx] = a
            objectives.append(_cvar_batch_estimate(losses, a, cfg.rho))
            model.params = model.params - cfg.eta * prl_gradient(model, xb, yb, deltas, a, cfg.rho)
        objective = float(np.mean(objectives))
        _check_finite(model, objective, trace, epoch)
        trace.append(_record(epoch, objective, model, x, y, cfg, eval_rng))
        log.debug("epoch %d objective %.6g", epoch, objective)
    return TrainResult(model, trace, alpha)


def baseline_train(x, y, model0: Model, cfg: TrainConfig) -> TrainResult:
    """Minibatch SGD for ERM, ERM with random-perturbation augmentation, or PGD training."""
    if cfg.method is Method.PRL:
        raise ValueError("use prl_train for PRL")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shuffle_rng, pert_rng, eval_rng = _streams(cfg.seed)
    model = model0.copy()
    trace: list[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        objectives = []
        for idx in _batches(len(x), cfg.batch_size, shuffle_rng):
            xb, yb = x[idx], y[idx]
            if cfg.method is Method.ERM_DA:
                xb = xb + sample_perturbation(cfg.perturbation, pert_rng, len(idx))
            elif cfg.method is Method.PGD_AT:
                xb = xb + pgd_attack(model, xb, yb, cfg.perturbation, cfg.pgd_steps,
                                     cfg.pgd_step_size)
            objectives.append(float(model.losses(xb, yb).mean()))
            grad = model.grad_weighted(xb, yb, np.full(len(idx), 1.0 / len(idx)))
            model.params = model.params - cfg.eta * grad
        objective = float(np.mean(objectives))
        _check_finite(model, objective, trace, epoch)
        trace.append(_record(epoch, objective, model, x, y, cfg, eval_rng))
    return TrainResult(model, trace)


def train(x, y, model0: Model, cfg: TrainConfig) -> TrainResult:
    if cfg.method is Method.PRL:
        return prl_train(x, y, model0, cfg)
    return baseline_train(x, y, model0, cfg)
