"""Sine test functions and the over-determined adjoint systems they induce.

Projecting the wave equation on ``φ_m(t) = sqrt(2/T) sin(mπt/T)`` and
integrating by parts gives, for every ``m``,

    -(Δ + μ_m I) X̄_m = λ_m S + P_m,   P_m = φ̇_m(T) X(T) - φ̇_m(0) X(0).

With the two observed components moved to the right-hand side this becomes
an ``N × (N-2)`` system in the unobserved projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import LaplacianSpectrum, adjoint_matrix


@dataclass(frozen=True)
class SturmBasis:
    T: float

    def phi(self, m: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return math.sqrt(2.0 / self.T) * np.sin(m * math.pi * t / self.T)

    def dphi(self, m: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        w = m * math.pi / self.T
        return math.sqrt(2.0 / self.T) * w * np.cos(w * t)

    def mu(self, m: int) -> float:
        return (m * math.pi / self.T) ** 2


def _check_grid(times: np.ndarray, T: float) -> None:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("projection needs a 1-D grid with at least two samples")
    dt = times[1] - times[0]
    tol = 1e-9 * max(1.0, abs(T))
    if abs(times[0]) > tol or abs(times[-1] - T) > tol:
        raise ValueError(f"grid spans [{times[0]:g}, {times[-1]:g}], basis horizon is [0, {T:g}]")
    if np.abs(np.diff(times) - dt).max() > 1e-9 * max(1.0, abs(dt)):
        raise ValueError("projection grid must be uniform")


def project(times, samples, basis: SturmBasis, m: int) -> np.ndarray | float:
    """Composite-trapezoid ``∫_0^T f(t) φ_m(t) dt``.

    ``samples`` may be 1-D or have one column per node.
    """
    times = np.asarray(times, dtype=float)
    _check_grid(times, basis.T)
    f = np.asarray(samples, dtype=float)
    if f.shape[0] != times.size:
        raise ValueError(f"got {f.shape[0]} samples for a grid of {times.size} points")
    w = basis.phi(m, times)
    if f.ndim == 2:
        w = w[:, None]
    out = np.trapezoid(f * w, times, axis=0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AdjointSystem:
    """Adjoint system for index ``m`` and observation nodes ``i``, ``j`` (1-based).

    ``A_reduced`` keeps the columns listed in ``unknown_nodes`` (in order);
    ``rhs`` is ``P_m^{i,j}``.  Every row ``l`` satisfies
    ``-(A_reduced @ x)[l] = rhs[l] + λ_m S[l]`` for the true projections.
    """

    m: int
    T: float
    i: int
    j: int
    A: np.ndarray
    A_reduced: np.ndarray
    rhs: np.ndarray
    xbar_i: float
    xbar_j: float
    unknown_nodes: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def residual(self, xbar: np.ndarray) -> np.ndarray:
        """``-A_reduced x - rhs``; nonzero only in the source row for exact data."""
        return -self.A_reduced @ np.asarray(xbar) - self.rhs

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "T": self.T,
            "i": self.i,
            "j": self.j,
            "A": self.A.tolist(),
            "A_reduced": self.A_reduced.tolist(),
            "rhs": self.rhs.tolist(),
            "xbar_i": self.xbar_i,
            "xbar_j": self.xbar_j,
            "unknown_nodes": list(self.unknown_nodes),
        }


def assemble(
    laplacian,
    basis: SturmBasis,
    m: int,
    i: int,
    j: int,
    X0,
    XT_estimate,
    records: dict[int, np.ndarray],
    times,
) -> AdjointSystem:
    """Build ``A_m``, its column-reduced form and ``P_m^{i,j}``.

    ``records`` maps node labels to their time series on ``times``; only the
    entries for ``i`` and ``j`` are used.
    """
    lap = laplacian.laplacian if isinstance(laplacian, LaplacianSpectrum) else np.asarray(laplacian, dtype=float)
    n = lap.shape[0]
    if i == j:
        raise ValueError("observation nodes must be distinct")
    for k in (i, j):
        if not 1 <= k <= n:
            raise ValueError(f"observation node {k} outside [1, {n}]")
        if k not in records:
            raise KeyError(f"no record for observation node {k}")
    XT = np.asarray(XT_estimate, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    if XT.shape != (n,) or X0.shape != (n,):
        raise ValueError(f"X(0) and X(T) must have length {n}")

    a = adjoint_matrix(lap, m, basis.T)
    xi = project(times, records[i], basis, m)
    xj = project(times, records[j], basis, m)
    rhs = (
        float(basis.dphi(m, basis.T)) * XT
        - float(basis.dphi(m, 0.0)) * X0
        + a[:, i - 1] * xi
        + a[:, j - 1] * xj
    )
    keep = [c for c in range(n) if c not in (i - 1, j - 1)]
    return AdjointSystem(
        m=m,
        T=basis.T,
        i=i,
        j=j,
        A=a,
        A_reduced=a[:, keep],
        rhs=rhs,
        xbar_i=xi,
        xbar_j=xj,
        unknown_nodes=tuple(c + 1 for c in keep),
    )
