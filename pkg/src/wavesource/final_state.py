"""Least-squares recovery of ``X(T)`` and ``Ẋ(T)`` from the source-free tail.

After the source switches off, each node follows the free-evolution formula
anchored at ``T``, which is linear in the modal positions ``y_n(T)`` and
velocities ``ẏ_n(T)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import RankDeficiencyError, WindowError
from .forward import _zero_mask
from .graph import LaplacianSpectrum, unobserved_modes


@dataclass(frozen=True)
class FitWindow:
    """Samples ``t_m`` with ``T_star <= t_m <= T`` of the uniform grid."""

    T_star: float
    T: float
    dt: float
    active_end: float | None = None

    def __post_init__(self):
        if self.active_end is not None and self.T_star < self.active_end - 1e-9 * self.T:
            raise WindowError(
                f"window start T* = {self.T_star:g} precedes the source switch-off T0 = {self.active_end:g}"
            )
        if not self.T_star < self.T:
            raise WindowError(f"window start T* = {self.T_star:g} must be before T = {self.T:g}")

    @property
    def first_index(self) -> int:
        return int(np.ceil(self.T_star / self.dt - 1e-9))

    @property
    def last_index(self) -> int:
        return int(round(self.T / self.dt))

    def indices(self) -> np.ndarray:
        return np.arange(self.first_index, self.last_index + 1)

    def times(self) -> np.ndarray:
        return self.indices() * self.dt


def build_design_matrix(spectrum: LaplacianSpectrum, k: int, window: FitWindow) -> np.ndarray:
    """Rows ``t_m`` in the window, columns ``(y_1, ẏ_1, y_2, ẏ_2, ...)``."""
    t = window.times()
    n = spectrum.n
    if t.size < 2 * n:
        raise WindowError(f"window has {t.size} samples, need at least {2 * n}")
    s = (t - window.T)[:, None]
    vk = spectrum.vectors[k - 1]
    zero = _zero_mask(spectrum)
    w = np.where(zero, 1.0, spectrum.omegas)
    pos = np.where(zero, 1.0, np.cos(w * s)) * vk
    vel = np.where(zero, s, np.sin(w * s) / w) * vk
    out = np.empty((t.size, 2 * n))
    out[:, 0::2] = pos
    out[:, 1::2] = vel
    return out


@dataclass(frozen=True)
class FinalStateEstimate:
    y: np.ndarray
    ydot: np.ndarray
    XT: np.ndarray
    XdotT: np.ndarray
    residual: float
    rank: int
    T: float
    T_star: float

    def to_dict(self) -> dict:
        return {
            "XT": self.XT.tolist(),
            "XdotT": self.XdotT.tolist(),
            "residual": self.residual,
            "rank": self.rank,
        }


def estimate_final_state(
    records: dict[int, np.ndarray],
    nodes,
    spectrum: LaplacianSpectrum,
    window: FitWindow,
    rank_tol: float = 1e-10,
) -> FinalStateEstimate:
    """Joint least-squares fit of the tail records at ``nodes``.

    ``records[k]`` is the full series of node ``k`` on the uniform grid
    (index 0 at ``t = 0``).  Uses pivoted QR; a rank-deficient design raises
    :class:`RankDeficiencyError` naming the modes no observed node can see.
    """
    nodes = [int(k) for k in nodes]
    if not nodes:
        raise ValueError("need at least one observation node")
    idx = window.indices()
    blocks, data = [], []
    for k in nodes:
        series = np.asarray(records[k], dtype=float)
        if series.size <= idx[-1]:
            raise WindowError(f"record for node {k} has {series.size} samples, window needs {idx[-1] + 1}")
        blocks.append(build_design_matrix(spectrum, k, window))
        data.append(series[idx])
    a = np.vstack(blocks)
    d = np.concatenate(data)

    q, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > rank_tol * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < a.shape[1]:
        modes = unobserved_modes(spectrum, nodes)
        raise RankDeficiencyError(
            f"final state not identifiable from nodes {nodes}: design rank {rank} < {a.shape[1]}"
            + (f"; modes {modes} vanish on every observed node" if modes else ""),
            rank=rank,
            n_columns=a.shape[1],
            modes=modes,
        )
    coef = np.empty(a.shape[1])
    coef[piv] = scipy.linalg.solve_triangular(r, q.T @ d)
    resid = d - a @ coef
    y, ydot = coef[0::2].copy(), coef[1::2].copy()
    V = spectrum.vectors
    return FinalStateEstimate(
        y=y,
        ydot=ydot,
        XT=V @ y,
        XdotT=V @ ydot,
        residual=float(np.sqrt(np.mean(resid**2))),
        rank=rank,
        T=window.T,
        T_star=window.T_star,
    )


def reconstruct_tail(estimate: FinalStateEstimate, spectrum: LaplacianSpectrum, t: float) -> np.ndarray:
    """Free-evolution state at ``t`` in ``[T_star, T]`` from the fitted modes."""
    if not estimate.T_star - 1e-12 <= t <= estimate.T + 1e-12:
        raise WindowError(f"t = {t:g} outside fit window [{estimate.T_star:g}, {estimate.T:g}]")
    if t == estimate.T:
        return estimate.XT.copy()
    s = t - estimate.T
    zero = _zero_mask(spectrum)
    w = np.where(zero, 1.0, spectrum.omegas)
    y = np.where(zero, estimate.y + s * estimate.ydot, estimate.y * np.cos(w * s) + estimate.ydot * np.sin(w * s) / w)
    return spectrum.vectors @ y
