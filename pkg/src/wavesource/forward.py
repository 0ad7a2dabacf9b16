"""Forward graph wave equation ``Ẍ = ΔX + λ(t) S``.

Two independent solvers are provided: adaptive Dormand-Prince integration
of the first-order system, and an analytic modal expansion with Duhamel
integrals.  They serve as oracles for each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp

from .errors import IntegrationError
from .graph import LaplacianSpectrum, NetworkGraph, build_laplacian
from .signals import SignalSpec, ZeroSignal


@dataclass(frozen=True)
class SourceSpec:
    """Single forcing node (1-based) emitting ``signal``."""

    node: int
    signal: SignalSpec

    @property
    def active_end(self) -> float:
        return self.signal.active_end

    def vector(self, n_nodes: int) -> np.ndarray:
        if not 1 <= self.node <= n_nodes:
            raise ValueError(f"source node {self.node} outside [1, {n_nodes}]")
        s = np.zeros(n_nodes)
        s[self.node - 1] = 1.0
        return s


@dataclass(frozen=True)
class SimulationConfig:
    """Uniform output grid ``t_m = m T / n_steps`` plus initial data.

    ``a`` and ``b`` default to zero state and velocity.
    """

    T: float
    n_steps: int
    a: tuple[float, ...] | None = None
    b: tuple[float, ...] | None = None
    rtol: float = 1e-9
    atol: float = 1e-9

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.n_steps) < 2:
            raise ValueError(f"n_steps must be at least 2, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def initial(self, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
        a = np.zeros(n_nodes) if self.a is None else np.asarray(self.a, dtype=float)
        b = np.zeros(n_nodes) if self.b is None else np.asarray(self.b, dtype=float)
        if a.shape != (n_nodes,) or b.shape != (n_nodes,):
            raise ValueError(f"initial state and velocity must have length {n_nodes}")
        return a, b


@dataclass(frozen=True)
class Trajectory:
    """States ``x_k(t_m)`` on a uniform grid; row ``m`` is time ``t_m``."""

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.states.shape[0] != self.times.size:
            raise ValueError("states must have one row per time sample")
        if self.times.size < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_nodes(self) -> int:
        return self.states.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def node(self, k: int) -> np.ndarray:
        return self.states[:, k - 1]

    def to_csv(self, path: str | Path, nodes: list[int] | None = None) -> None:
        nodes = list(range(1, self.n_nodes + 1)) if nodes is None else nodes
        cols = [self.times] + [self.node(k) for k in nodes]
        header = "t," + ",".join(f"x{k}" for k in nodes)
        write_columns(path, header, cols)

    @classmethod
    def from_csv(cls, path: str | Path) -> tuple["Trajectory", list[int]]:
        """Load a trajectory CSV.  Returns the trajectory and its node labels.

        Files may hold only a subset of nodes (e.g. the two observed ones);
        the returned ``states`` columns follow the listed labels.
        """
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().strip().split(",")
        if not header or header[0] != "t" or any(not h.startswith("x") for h in header[1:]):
            raise ValueError(f"{path}: expected header 't,x<k>,...', got {','.join(header)}")
        labels = [int(h[1:]) for h in header[1:]]
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].copy(), data[:, 1:].copy()), labels


def write_columns(path: str | Path, header: str, columns: list[np.ndarray]) -> None:
    arr = np.column_stack(columns)
    lines = [header]
    lines += [",".join(repr(float(v)) for v in row) for row in arr]
    Path(path).write_text("\n".join(lines) + "\n")


def _laplacian(graph_or_laplacian) -> np.ndarray:
    if isinstance(graph_or_laplacian, NetworkGraph):
        return build_laplacian(graph_or_laplacian)
    if isinstance(graph_or_laplacian, LaplacianSpectrum):
        return np.asarray(graph_or_laplacian.laplacian)
    return np.asarray(graph_or_laplacian, dtype=float)


def simulate_rk(graph_or_laplacian, source: SourceSpec, config: SimulationConfig) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) integration sampled on the output grid.

    The step is capped at the grid spacing so that no forcing feature visible
    on the grid is stepped over, and integration restarts at the switch-off
    time where the signal may be discontinuous.
    """
    lap = _laplacian(graph_or_laplacian)
    n = lap.shape[0]
    s_vec = source.vector(n)
    a, b = config.initial(n)
    sig = source.signal
    times = config.times

    def rhs(t, z):
        return np.concatenate([z[n:], lap @ z[:n] + sig(t) * s_vec])

    breaks = [0.0]
    if 0.0 < source.active_end < config.T:
        breaks.append(float(source.active_end))
    breaks.append(config.T)

    z0 = np.concatenate([a, b])
    out = np.empty((times.size, 2 * n))
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        last = hi == config.T
        mask = (times >= lo) & ((times <= hi) if last else (times < hi))
        sol = solve_ivp(
            rhs,
            (lo, hi),
            z0,
            method="RK45",
            rtol=config.rtol,
            atol=config.atol,
            max_step=config.dt,
            dense_output=True,
        )
        if sol.status != 0:
            raise IntegrationError(f"integration failed: {sol.message}", float(sol.t[-1]))
        if mask.any():
            out[mask] = sol.sol(times[mask]).T
        z0 = sol.y[:, -1]
    return Trajectory(times, out[:, :n], out[:, n:])


def _zero_mask(spectrum: LaplacianSpectrum) -> np.ndarray:
    scale = max(1.0, float(np.abs(spectrum.eigenvalues).max()))
    return np.abs(spectrum.eigenvalues) <= 1e-10 * scale


def homogeneous_solution(spectrum: LaplacianSpectrum, a, b, times) -> np.ndarray:
    """Free evolution from ``X(0) = a``, ``Ẋ(0) = b``; shape ``(len(times), N)``."""
    t = np.asarray(times, dtype=float)[:, None]
    ya = spectrum.vectors.T @ np.asarray(a, dtype=float)
    yb = spectrum.vectors.T @ np.asarray(b, dtype=float)
    zero = _zero_mask(spectrum)
    w = np.where(zero, 1.0, spectrum.omegas)
    y = np.where(zero, ya + yb * t, ya * np.cos(w * t) + yb * np.sin(w * t) / w)
    return y @ spectrum.vectors.T


def _duhamel_modal(spectrum: LaplacianSpectrum, coeffs, signal, times, refine: int) -> np.ndarray:
    """Modal amplitudes of the zero-data forced response, trapezoid on a refined grid."""
    n_out = times.size
    h = (times[1] - times[0]) / refine
    ts = np.arange((n_out - 1) * refine + 1) * h
    lam = np.asarray(signal(ts), dtype=float)
    zero = _zero_mask(spectrum)
    y = np.zeros((n_out, spectrum.n))
    for n in range(spectrum.n):
        if coeffs[n] == 0.0:
            continue
        if zero[n]:
            first = cumulative_trapezoid(lam, ts, initial=0.0)
            second = cumulative_trapezoid(lam * ts, ts, initial=0.0)
            yn = ts * first - second
        else:
            w = spectrum.omegas[n]
            acc = cumulative_trapezoid(lam * np.exp(-1j * w * ts), ts, initial=0.0)
            yn = (np.exp(1j * w * ts) * acc).imag / w
        y[:, n] = coeffs[n] * yn[::refine]
    return y


def simulate_modal(
    spectrum: LaplacianSpectrum,
    source: SourceSpec,
    config: SimulationConfig,
    refine: int = 4,
) -> Trajectory:
    """Modal-expansion solution ``X = X^0 + X^S`` sampled on the output grid.

    The forced part uses Duhamel integrals against the fundamental solutions
    ``t`` (zero mode) and ``sin(ω t)/ω``.  The integrals are composite
    trapezoid sums on grids refined ``refine`` and ``2 * refine`` times,
    combined by one Richardson step.
    """
    n = spectrum.n
    a, b = config.initial(n)
    times = config.times
    x0 = homogeneous_solution(spectrum, a, b, times)
    coeffs = spectrum.vectors.T @ source.vector(n)
    coarse = _duhamel_modal(spectrum, coeffs, source.signal, times, refine)
    fine = _duhamel_modal(spectrum, coeffs, source.signal, times, 2 * refine)
    y = (4.0 * fine - coarse) / 3.0
    return Trajectory(times, x0 + y @ spectrum.vectors.T)


def eval_phi(spectrum: LaplacianSpectrum, source_vector, k: int, t) -> np.ndarray:
    """Impulse response ``Φ_k(t)`` at node ``k`` to forcing along ``source_vector``."""
    t = np.asarray(t, dtype=float)
    coeffs = spectrum.vectors.T @ np.asarray(source_vector, dtype=float)
    vk = spectrum.vectors[k - 1]
    zero = _zero_mask(spectrum)
    out = np.zeros_like(t)
    for n in range(spectrum.n):
        c = coeffs[n] * vk[n]
        if zero[n]:
            out = out + c * t
        else:
            w = spectrum.omegas[n]
            out = out + c / w * np.sin(w * t)
    return out


def add_noise(traj: Trajectory, level: float, seed: int) -> Trajectory:
    """Additive Gaussian noise scaled per node by ``level * max_m |x_k(t_m)|``."""
    if level < 0:
        raise ValueError(f"noise level must be non-negative, got {level}")
    if level == 0:
        return replace(traj, states=traj.states.copy())
    rng = np.random.default_rng(seed)
    sigma = np.abs(traj.states).max(axis=0)
    noise = rng.standard_normal(traj.states.shape)
    return Trajectory(traj.times.copy(), traj.states + level * sigma * noise)


def zero_source(node: int = 1, active_end: float = 0.0) -> SourceSpec:
    return SourceSpec(node, ZeroSignal(active_end))
