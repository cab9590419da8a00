"""CVaR as a density-capped reweighting on a finite perturbation support.

Here ``beta`` plays the role of the tail mass: the dual optimum at ``beta``
reproduces ``cvar_sorted(sample, beta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .riskcore import LossSample, cvar_sorted

_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteAtoms:
    losses: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        losses = np.array(self.losses, dtype=float).ravel()
        probs = np.array(self.probs, dtype=float).ravel()
        if losses.shape != probs.shape or losses.size == 0:
            raise ValueError("losses and probs must be non-empty and of equal length")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > _TOL:
            raise ValueError("probs must be positive and sum to 1")
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "probs", probs)

    def as_sample(self) -> LossSample:
        return LossSample(self.losses, self.probs)


@dataclass(frozen=True)
class DualDensity:
    """Density ``nu`` with respect to the base probabilities, capped at ``1 / beta``."""

    nu: np.ndarray
    beta: float

    @property
    def cap(self) -> float:
        return 1.0 / self.beta

    def value(self, atoms: DiscreteAtoms) -> float:
        return float(np.sum(self.nu * atoms.probs * atoms.losses))

    def is_feasible(self, atoms: DiscreteAtoms, tol: float = 1e-12) -> bool:
        in_box = np.all(self.nu >= -tol) and np.all(self.nu <= self.cap * (1 + tol))
        return bool(in_box and abs(np.dot(self.nu, atoms.probs) - 1.0) <= tol)


def _check_beta(beta):
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")


def dual_optimum(atoms: DiscreteAtoms, beta: float) -> DualDensity:
    """Water-filling maximizer of ``sum nu p loss`` over the capped densities.

    Atoms are filled at density ``1 / beta`` in decreasing loss order until
    their base mass reaches ``beta``; the boundary atom is filled fractionally.
    """
    _check_beta(beta)
    if beta == 1.0 or np.ptp(atoms.losses) == 0:
        return DualDensity(np.ones_like(atoms.probs), beta)
    order = np.argsort(-atoms.losses, kind="stable")
    p = atoms.probs[order]
    before = np.concatenate([[0.0], np.cumsum(p)[:-1]])
    q = np.clip(beta - before, 0.0, p)
    nu = np.empty_like(p)
    nu[order] = q / (beta * p)
    return DualDensity(nu, beta)


def duality_gap(atoms: DiscreteAtoms, beta: float) -> float:
    _check_beta(beta)
    primal = cvar_sorted(atoms.as_sample(), beta)
    return abs(primal - dual_optimum(atoms, beta).value(atoms))


def zero_one_dual_density(m_err: float, beta: float) -> tuple[float, float, float]:
    """Optimal density for the 0-1 loss with error mass ``m_err``.

    Returns ``(error_density, correct_density, value)``. With ``m_err = 0`` the
    error density is reported as ``1 / beta`` (it carries no mass); with
    ``m_err = 1`` there are no correct atoms and their density is 0.
    """
    _check_beta(beta)
    if not 0.0 <= m_err <= 1.0:
        raise ValueError(f"m_err must lie in [0, 1], got {m_err}")
    err_density = 1.0 / beta if m_err == 0 else min(1.0 / m_err, 1.0 / beta)
    value = min(1.0, m_err / beta)
    correct_density = 0.0 if m_err == 1.0 else (1.0 - value) / (1.0 - m_err)
    return err_density, correct_density, value
