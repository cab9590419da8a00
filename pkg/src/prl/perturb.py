"""Perturbation sets and uniform sampling over them."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Rounding slack for boundary membership; samples and projections land on the
# sphere up to a few ulps.
_BOUNDARY_RTOL = 1e-12


class NormKind(str, enum.Enum):
    L2 = "l2"
    LINF = "linf"


@dataclass(frozen=True)
class PerturbationSpec:
    """Closed norm ball ``{delta : ||delta|| <= radius}`` in ``dim`` dimensions.

    The sampling distribution is always uniform over the ball. A radius of
    zero is accepted and denotes the degenerate set ``{0}``.
    """

    norm_kind: NormKind
    radius: float
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "norm_kind", NormKind(self.norm_kind))
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValueError(f"radius must be finite and non-negative, got {self.radius}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "radius", float(self.radius))

    def norm(self, delta: np.ndarray) -> np.ndarray:
        """Norm of ``delta`` along its last axis."""
        delta = np.asarray(delta, dtype=float)
        if self.norm_kind is NormKind.L2:
            return np.linalg.norm(delta, axis=-1)
        return np.max(np.abs(delta), axis=-1)

    def project(self, delta: np.ndarray) -> np.ndarray:
        """Euclidean projection (L2) or coordinate clipping (Linf) onto the ball."""
        delta = np.asarray(delta, dtype=float)
        if self.norm_kind is NormKind.LINF:
            return np.clip(delta, -self.radius, self.radius)
        norms = np.linalg.norm(delta, axis=-1, keepdims=True)
        scale = np.ones_like(norms)
        outside = norms > self.radius
        scale[outside] = self.radius / norms[outside]
        return delta * scale

    def to_dict(self) -> dict:
        return {"norm_kind": self.norm_kind.value, "radius": self.radius, "dim": self.dim}

    @classmethod
    def from_dict(cls, data: dict) -> "PerturbationSpec":
        return cls(NormKind(data["norm_kind"]), float(data["radius"]), int(data["dim"]))


def sample_perturbation(spec: PerturbationSpec, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw i.i.d. perturbations uniformly from the ball described by ``spec``.

    Parameters
    ----------
    spec : PerturbationSpec
    rng : numpy.random.Generator
    size : int or tuple of int, optional
        Leading batch shape. The result has shape ``(*size, spec.dim)``; with
        ``size=None`` a single vector of length ``spec.dim`` is returned.

    Notes
    -----
    L2 balls use an isotropic Gaussian direction scaled by ``radius * u**(1/d)``
    (radial inverse CDF), which stays exact in high dimension where rejection
    from the bounding box would essentially never accept. Linf balls draw each
    coordinate independently from ``U[-radius, radius]``.
    """
    if size is None:
        shape: tuple = ()
    elif np.isscalar(size):
        shape = (int(size),)
    else:
        shape = tuple(int(s) for s in size)
    d = spec.dim
    if spec.norm_kind is NormKind.LINF:
        return rng.uniform(-spec.radius, spec.radius, size=shape + (d,))

    g = rng.standard_normal(size=shape + (d,))
    u = rng.random(size=shape)
    norms = np.linalg.norm(g, axis=-1)
    radial = spec.radius * u ** (1.0 / d)
    return g * (radial / norms)[..., None]


def contains(spec: PerturbationSpec, delta) -> bool | np.ndarray:
    """Membership test, inclusive at the boundary.

    Accepts a single vector or a batch with the dimension on the last axis;
    returns a bool or a boolean array accordingly.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1:] != (spec.dim,):
        raise ValueError(f"expected last dimension {spec.dim}, got shape {delta.shape}")
    inside = spec.norm(delta) <= spec.radius * (1.0 + _BOUNDARY_RTOL)
    if np.ndim(inside) == 0:
        return bool(inside)
    return inside
