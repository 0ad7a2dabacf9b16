"""Recovery of the emitted signal once the source node is known.

Two routes are offered.  Deconvolution inverts the lower-triangular Toeplitz
discretization of ``x_k - x_k^0 = ∫ λ(s) Φ_k(t - s) ds``.  The Fourier route
reads ``λ_m = ⟨λ, φ_m⟩`` off the source row of each adjoint system.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator, lsqr

from .adjoint import AdjointSystem, SturmBasis
from .errors import ReconstructionError, SingularSystemError
from .forward import eval_phi, homogeneous_solution, write_columns
from .graph import LaplacianSpectrum, is_strategic_set
from .localize import solve_reduced

MODES = ("diagonal_shift", "tikhonov")
DENSE_LIMIT = 3000


@dataclass(frozen=True)
class ReconstructedSignal:
    """Identified samples ``values[ℓ] ≈ λ(times[ℓ])``.

    ``error`` is ``‖Λ - Λ_ident‖ / ‖Λ‖`` when the truth was supplied.
    """

    times: np.ndarray
    values: np.ndarray
    method: str
    r: float | None = None
    error: float | None = None
    truth: np.ndarray | None = field(default=None, repr=False)
    coefficients: np.ndarray | None = None
    observation_node: int | None = None
    bandwidth_ratio: float | None = None

    def with_truth(self, truth) -> "ReconstructedSignal":
        truth = np.asarray(truth, dtype=float)
        return ReconstructedSignal(
            self.times,
            self.values,
            self.method,
            self.r,
            relative_error(truth, self.values),
            truth,
            self.coefficients,
            self.observation_node,
            self.bandwidth_ratio,
        )

    def to_csv(self, path: str | Path) -> None:
        if self.truth is None:
            write_columns(path, "t,lambda_identified", [self.times, self.values])
        else:
            write_columns(path, "t,lambda_true,lambda_identified", [self.times, self.truth, self.values])

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "r": self.r,
            "error": self.error,
            "observation_node": self.observation_node,
            "bandwidth_ratio": self.bandwidth_ratio,
        }
        if self.coefficients is not None:
            d["coefficients"] = self.coefficients.tolist()
        return d


def relative_error(truth, identified) -> float:
    truth = np.asarray(truth, dtype=float)
    identified = np.asarray(identified, dtype=float)
    if truth.shape != identified.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {identified.shape}")
    norm = float(np.linalg.norm(truth))
    diff = float(np.linalg.norm(truth - identified))
    if norm == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / norm


def bandwidth_ratio(values, dt: float, omega2: float, energy: float = 0.99) -> float:
    """Angular frequency holding ``energy`` of the spectrum, over ``ω_2``."""
    power = np.abs(np.fft.rfft(np.asarray(values, dtype=float))) ** 2
    total = power.sum()
    if total == 0.0 or omega2 <= 0.0:
        return 0.0
    cut = int(np.searchsorted(np.cumsum(power), energy * total))
    freqs = 2 * np.pi * np.fft.rfftfreq(len(values), dt)
    return float(freqs[min(cut, freqs.size - 1)] / omega2)


def _forward_substitution(kernel: np.ndarray, rhs: np.ndarray, diag: float) -> np.ndarray:
    n = rhs.size
    lam = np.zeros(n)
    rev = kernel[::-1]
    for m in range(n):
        # Σ_{ℓ<m} Φ(t_{m+1-ℓ}) λ^ℓ, with the kernel reversed so this is a dot product
        acc = rev[n - 1 - m : n - 1] @ lam[:m] if m else 0.0
        lam[m] = (rhs[m] - acc) / diag
    return lam


def _tikhonov(kernel: np.ndarray, rhs: np.ndarray, r: float) -> np.ndarray:
    n = rhs.size
    if n <= DENSE_LIMIT:
        b = scipy.linalg.toeplitz(kernel, np.zeros(n))
        return scipy.linalg.solve(b.T @ b + r * np.eye(n), b.T @ rhs, assume_a="pos")

    def matvec(x):
        return fftconvolve(kernel, np.ravel(x))[:n]

    def rmatvec(y):
        return fftconvolve(kernel[::-1], np.ravel(y))[n - 1 : 2 * n - 1]

    op = LinearOperator((n, n), matvec=matvec, rmatvec=rmatvec, dtype=float)
    return lsqr(op, rhs, damp=np.sqrt(r), atol=1e-12, btol=1e-12, iter_lim=20 * n)[0]


def deconvolve(
    record,
    homogeneous,
    kernel,
    dt: float,
    r: float = 1.0,
    mode: str = "diagonal_shift",
) -> ReconstructedSignal:
    """Solve ``B Λ = Q / Δt`` with ``B_{mℓ} = Φ_k(t_{m+1-ℓ})``.

    Parameters
    ----------
    record, homogeneous
        ``x_k`` and the free response ``x_k^0`` on ``t_0 = 0, ..., t_M``.
    kernel
        ``Φ_k(t_1), ..., Φ_k(t_M)``.
    dt
        Grid spacing.
    r
        Regularization: added to the diagonal ``Φ_k(t_1)`` in
        ``diagonal_shift`` mode, or the weight of ``‖Λ‖²`` in ``tikhonov``.
    mode
        ``"diagonal_shift"`` or ``"tikhonov"``.

    Returns
    -------
    ReconstructedSignal
        Samples ``λ(t_1), ..., λ(t_M)``.  Row ``m`` uses the data at
        ``t_{m+1}``; the last row reuses ``t_M``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if r < 0:
        raise ValueError(f"regularization must be non-negative, got {r}")
    x = np.asarray(record, dtype=float)
    x0 = np.asarray(homogeneous, dtype=float)
    phi = np.asarray(kernel, dtype=float)
    if x.shape != x0.shape or x.ndim != 1:
        raise ValueError("record and homogeneous response must be 1-D arrays of equal length")
    n = x.size - 1
    if phi.shape != (n,):
        raise ValueError(f"kernel has {phi.size} samples, grid needs {n}")
    q = x - x0
    rhs = np.append(q[2:], q[-1]) / dt
    if mode == "diagonal_shift":
        diag = phi[0] + r
        if abs(diag) < 1e-14:
            raise ReconstructionError(f"diagonal Φ_k(t_1) + r = {diag:.3g} is numerically zero")
        # a too-small shift blows up geometrically; report it rather than warn per step
        with np.errstate(over="ignore", invalid="ignore"):
            lam = _forward_substitution(phi, rhs, diag)
    else:
        lam = _tikhonov(phi, rhs, r)
    if not np.all(np.isfinite(lam)):
        raise ReconstructionError(f"{mode} deconvolution with r = {r:g} diverged; increase r")
    times = np.arange(1, n + 1) * dt
    return ReconstructedSignal(times, lam, mode, float(r))


def kernel_norms(spectrum: LaplacianSpectrum, source_node: int, nodes, times) -> dict[int, float]:
    s = np.zeros(spectrum.n)
    s[source_node - 1] = 1.0
    return {k: float(np.linalg.norm(eval_phi(spectrum, s, k, times))) for k in nodes}


def choose_observation_node(spectrum: LaplacianSpectrum, source_node: int, candidates, times) -> int:
    """Strategic candidate with the largest kernel norm over ``times``."""
    ok = [k for k in candidates if is_strategic_set(spectrum, [k]).is_strategic]
    if not ok:
        raise ReconstructionError(f"none of the nodes {list(candidates)} is strategic; deconvolution needs one")
    norms = kernel_norms(spectrum, source_node, ok, times)
    return max(ok, key=lambda k: (norms[k], -k))


def reconstruct_by_deconvolution(
    spectrum: LaplacianSpectrum,
    source_node: int,
    record,
    times,
    k: int,
    a=None,
    b=None,
    r: float = 1.0,
    mode: str = "diagonal_shift",
    truth: Callable | None = None,
) -> ReconstructedSignal:
    """Deconvolve the record of node ``k`` for a source at ``source_node``.

    ``k`` must be a strategic node on its own: a node on which some mode
    vanishes gives a kernel blind to part of the signal.
    """
    report = is_strategic_set(spectrum, [k])
    if not report.is_strategic:
        raise ReconstructionError(
            f"observation node {k} is not strategic (modes {report.failing_modes} vanish there)"
        )
    times = np.asarray(times, dtype=float)
    n = spectrum.n
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float)
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    s = np.zeros(n)
    s[source_node - 1] = 1.0
    kernel = eval_phi(spectrum, s, k, times[1:])
    if np.abs(kernel).max() < 1e-14:
        raise ReconstructionError(f"kernel at node {k} vanishes on the grid")
    x0 = homogeneous_solution(spectrum, a, b, times)[:, k - 1]
    dt = float(times[1] - times[0])
    out = deconvolve(record, x0, kernel, dt, r, mode)
    omega2 = float(spectrum.omegas[1]) if n > 1 else 0.0
    out = ReconstructedSignal(
        out.times, out.values, out.method, out.r,
        observation_node=k,
        bandwidth_ratio=bandwidth_ratio(out.values, dt, omega2),
    )
    if truth is not None:
        out = out.with_truth(truth(out.times))
    return out


def fourier_coefficient(system: AdjointSystem, source_node: int) -> float:
    """``λ_m`` from the source row after solving the system without it.

    The second removed row is the smallest index giving an invertible
    reduced matrix.
    """
    for other in range(1, system.n + 1):
        if other == source_node:
            continue
        try:
            sol = solve_reduced(system, min(source_node, other), max(source_node, other))
        except SingularSystemError:
            continue
        return float(system.residual(sol.xbar)[source_node - 1])
    raise ReconstructionError(f"m={system.m}: every reduced system without row {source_node} is singular")


def fourier_reconstruct(
    assemble_fn: Callable[[int], AdjointSystem],
    source_node: int,
    n_terms: int,
    times: Sequence[float],
    truth: Callable | None = None,
) -> ReconstructedSignal:
    """Sine-series partial sum ``Σ_{m ≤ n_terms} λ_m φ_m`` on ``times``."""
    if n_terms < 1:
        raise ValueError("need at least one Fourier term")
    times = np.asarray(times, dtype=float)
    coeffs = np.empty(n_terms)
    basis = None
    for m in range(1, n_terms + 1):
        system = assemble_fn(m)
        basis = basis or SturmBasis(system.T)
        coeffs[m - 1] = fourier_coefficient(system, source_node)
    values = sum(c * basis.phi(m, times) for m, c in enumerate(coeffs, start=1))
    out = ReconstructedSignal(times, np.asarray(values, dtype=float), "fourier", coefficients=coeffs)
    if truth is not None:
        out = out.with_truth(truth(times))
    return out
