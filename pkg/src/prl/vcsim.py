"""Exact simulator for a hypothesis class whose robust VC dimension collapses with rho.

The instance space is the real line. There are ``m`` centres ``c_i``, each with a
neighbourhood ``Delta_i = c_i + [-eps, eps]``. Inside ``Delta_i`` every signature
``b`` in ``{0,1}^m`` with ``b_i = 1`` owns a small interval ``A_i^b``. Hypothesis ``h_b``
predicts 0 on the union of its own intervals and 1 elsewhere. Perturbations
are uniform on ``[-eps, eps]``, so every rho-esssup 0-1 loss is an exact
interval-length computation.

Signatures are encoded as integers with bit ``i`` holding ``b_i``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

_BUDGET = 2 * 10**8


@dataclass(frozen=True)
class HypothesisClassHo:
    rho_o: float
    eps: float
    m: int
    centers: np.ndarray
    # lows/highs[i, b]: interval A_i^b, empty (lo == hi == nan) when bit i of b is 0
    lows: np.ndarray
    highs: np.ndarray

    @property
    def n_hypotheses(self) -> int:
        return 1 << self.m

    @property
    def set_length(self) -> float:
        return (self.rho_o / self.m) * 2.0 * self.eps

    def signature(self, b) -> int:
        """Integer code of ``b`` given as an int or a 0/1 sequence (``b[0]`` is ``b_1``)."""
        if isinstance(b, (int, np.integer)):
            code = int(b)
        else:
            code = sum(int(bit) << i for i, bit in enumerate(b))
            if len(b) != self.m:
                raise ValueError(f"signature needs {self.m} bits")
        if not 0 <= code < self.n_hypotheses:
            raise ValueError("signature out of range")
        return code

    def endpoints(self) -> np.ndarray:
        ok = ~np.isnan(self.lows)
        return np.unique(np.concatenate([self.lows[ok], self.highs[ok]]))


def build_class(rho_o: float, eps: float = 1.0) -> HypothesisClassHo:
    """Build the class for ``0 < rho_o < 1/2``.

    ``m = ceil(log2(1/rho_o)) + 1`` centres at ``4 eps`` spacing. Inside each
    ``Delta_i`` the eligible signatures, in increasing integer order, receive
    consecutive intervals of length ``(rho_o / m) * 2 eps`` starting at the left
    end of ``Delta_i``.
    """
    if not 0.0 < rho_o < 0.5:
        raise ValueError(f"rho_o must lie in (0, 1/2), got {rho_o}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    m = math.ceil(math.log2(1.0 / rho_o)) + 1
    length = (rho_o / m) * 2.0 * eps
    if (1 << (m - 1)) * length > 2.0 * eps:
        raise ArithmeticError("intervals do not fit inside the neighbourhood")
    centers = 4.0 * eps * np.arange(m, dtype=float)
    n_hyp = 1 << m
    lows = np.full((m, n_hyp), np.nan)
    highs = np.full((m, n_hyp), np.nan)
    for i in range(m):
        eligible = [b for b in range(n_hyp) if b >> i & 1]
        start = centers[i] - eps
        for k, b in enumerate(eligible):
            lows[i, b] = start + k * length
            highs[i, b] = start + (k + 1) * length
    for arr in (centers, lows, highs):
        arr.setflags(write=False)
    return HypothesisClassHo(rho_o, eps, m, centers, lows, highs)


def h_b_predict(cls: HypothesisClassHo, b, x: float) -> int:
    """0 if ``x`` lies in one of the half-open intervals ``[lo, hi)`` of ``b``, else 1."""
    code = cls.signature(b)
    lo, hi = cls.lows[:, code], cls.highs[:, code]
    inside = (lo <= x) & (x < hi)  # nan compares False
    return 0 if bool(np.any(inside)) else 1


def error_measures(cls: HypothesisClassHo, xs, ys) -> np.ndarray:
    """Perturbation measure of the misclassified region, shape ``(n, 2^m)``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys))
    lo = np.nan_to_num(cls.lows, nan=0.0)
    hi = np.nan_to_num(cls.highs, nan=0.0)  # empty intervals have zero length
    width = 2.0 * cls.eps
    out = np.empty((xs.size, cls.n_hypotheses))
    step = max(1, 4_000_000 // lo.size)
    for s in range(0, xs.size, step):
        x = xs[s:s + step, None, None]
        overlap = np.clip(np.minimum(hi, x + cls.eps) - np.maximum(lo, x - cls.eps), 0.0, None)
        zero_len = overlap.sum(axis=1) / width  # measure where h_b predicts 0
        y = ys[s:s + step, None]
        out[s:s + step] = np.where(y == 1, zero_len, 1.0 - zero_len)
    return out


def loss_matrix(cls: HypothesisClassHo, xs, ys, rho: float | None) -> np.ndarray:
    """0-1 losses of every hypothesis on every point, shape ``(n, 2^m)``, dtype uint8.

    ``rho=None`` gives the nominal loss ``1[h_b(x) != y]``; otherwise the
    rho-esssup loss, which is 1 exactly when the error measure exceeds ``rho``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys))
    if not np.all(np.isin(ys, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    if rho is None:
        x = xs[:, None, None]
        zero = np.any((cls.lows <= x) & (x < cls.highs), axis=1)
        pred = np.where(zero, 0, 1)
        return (pred != ys[:, None]).astype(np.uint8)
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    return (error_measures(cls, xs, ys) > rho).astype(np.uint8)


def rhosup_01_loss(cls: HypothesisClassHo, b, x: float, y: int, rho: float) -> int:
    code = cls.signature(b)
    return int(loss_matrix(cls, [x], [y], rho)[0, code])


def behavior_set(cls: HypothesisClassHo, points, rho: float | None) -> set[tuple[int, ...]]:
    """Distinct loss patterns realized by the class on ``points`` (list of ``(x, y)``)."""
    if len(points) > 20:
        raise ValueError("behavior_set enumerates at most 20 points")
    if not points:
        return {()}
    xs, ys = zip(*points)
    L = loss_matrix(cls, xs, ys, rho)
    return {tuple(int(v) for v in col) for col in L.T}


def candidate_grid(cls: HypothesisClassHo, rho: float | None) -> np.ndarray:
    """Points covering every region on which the loss pattern is constant.

    Losses change only where a window edge crosses an interval endpoint or
    where an overlap crosses the ``2 eps rho`` threshold, so breakpoints are
    ``e``, ``e +- eps`` and ``e +- eps +- 2 eps rho`` for every endpoint ``e``.
    The grid holds the breakpoints, their midpoints, a nudge of
    ``eta = set_length / 10`` on either side, and a point far from every
    neighbourhood.
    """
    e = np.concatenate([cls.endpoints(), cls.centers])
    shifts = [0.0, cls.eps, -cls.eps]
    if rho is not None:
        t = 2.0 * cls.eps * rho
        shifts += [cls.eps + t, cls.eps - t, -cls.eps + t, -cls.eps - t]
    brk = np.unique(np.concatenate([e + s for s in shifts]))
    eta = cls.set_length / 10.0
    far = cls.centers[-1] + 10.0 * cls.eps
    mids = 0.5 * (brk[1:] + brk[:-1])
    return np.unique(np.concatenate([brk, mids, brk - eta, brk + eta, [far]]))


def growth_estimate(cls: HypothesisClassHo, rho: float | None, k: int, grid=None,
                    budget: int = _BUDGET) -> int:
    """Maximum number of loss patterns on ``k`` points drawn from ``grid x {0, 1}``.

    Candidates with identical loss vectors are merged first. ``k = 2`` is
    counted with matrix products; larger ``k`` enumerates subsets and raises
    ``RuntimeError`` when that exceeds ``budget`` elementary operations.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    xs = candidate_grid(cls, rho) if grid is None else np.asarray(grid, dtype=float)
    L = np.concatenate([loss_matrix(cls, xs, np.zeros(xs.size, int), rho),
                        loss_matrix(cls, xs, np.ones(xs.size, int), rho)])
    U, mult = np.unique(L, axis=0, return_counts=True)
    n = U.shape[0]
    if k == 1:
        return int(max(1 + (0 < r.sum() < r.size) for r in U))
    if k == 2:
        A = U.astype(np.int64)
        B = 1 - A
        combos = [A @ A.T, A @ B.T, B @ A.T, B @ B.T]
        counts = sum((c > 0).astype(np.int64) for c in combos)
        # a row pairs with itself only if two candidates share it
        diag = np.where(mult > 1, np.diagonal(counts), 0)
        np.fill_diagonal(counts, diag)
        return int(counts.max())
    # keep duplicates of a row (up to k) so that equal-loss candidates can co-occur
    U = np.repeat(U, np.minimum(mult, k), axis=0)
    n = U.shape[0]
    n_sets = math.comb(n, k)
    if n_sets * cls.n_hypotheses * k > budget:
        raise RuntimeError(f"{n_sets} candidate {k}-sets exceed the enumeration budget")
    weights = (1 << np.arange(k)).astype(np.int64)
    best = 0
    for idx in itertools.combinations(range(n), k):
        codes = weights @ U[list(idx)]
        best = max(best, np.unique(codes).size)
        if best == 1 << k:
            break
    return int(best)


def canonical_points(cls: HypothesisClassHo) -> list[tuple[float, int]]:
    return [(float(c), 1) for c in cls.centers]


def shatter_report(cls: HypothesisClassHo, rhos, k: int = 2) -> dict:
    """JSON-ready summary: canonical shatter counts and pair growth per rho."""
    counts, growth = {}, {}
    for rho in rhos:
        counts[repr(float(rho))] = len(behavior_set(cls, canonical_points(cls), rho))
        growth[repr(float(rho))] = growth_estimate(cls, rho, k)
    nominal_k = growth_estimate(cls, None, k)
    return {
        "rho_o": cls.rho_o,
        "m": cls.m,
        "shatter_counts": counts,
        "vc_estimates": {
            "growth_k": k,
            "growth": growth,
            "nominal_growth": nominal_k,
            "nominal_vc_at_most_1": nominal_k < (1 << k),
        },
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)
