"""Graph topology, Laplacian spectrum and observation-node placement checks.

Node labels are 1-based everywhere in the public API (``1..n_nodes``);
arrays are indexed with ``label - 1``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphValidationError, SpectrumError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected simple graph on nodes ``1..n_nodes``.

    ``edges`` holds sorted pairs ``(u, v)`` with ``u < v``.  Construct with
    :meth:`from_edges` to get validation of raw edge lists.
    """

    n_nodes: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not isinstance(self.n_nodes, (int, np.integer)) or self.n_nodes < 1:
            raise GraphValidationError(f"n_nodes must be a positive integer, got {self.n_nodes!r}")
        for e in self.edges:
            u, v = e
            if u == v:
                raise GraphValidationError(f"self-loop at node {u}: edge {e}")
            if not (1 <= u <= self.n_nodes and 1 <= v <= self.n_nodes):
                raise GraphValidationError(f"edge {e} has an endpoint outside [1, {self.n_nodes}]")
            if u > v:
                raise GraphValidationError(f"edge {e} is not stored as (min, max)")

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence[int]]) -> "NetworkGraph":
        seen: set[tuple[int, int]] = set()
        for raw in edges:
            if len(raw) != 2:
                raise GraphValidationError(f"edge {tuple(raw)} does not have two endpoints")
            u, v = int(raw[0]), int(raw[1])
            if u == v:
                raise GraphValidationError(f"self-loop at node {u}: edge ({u}, {v})")
            if not (1 <= u <= n_nodes and 1 <= v <= n_nodes):
                raise GraphValidationError(
                    f"edge ({u}, {v}) has an endpoint outside [1, {n_nodes}]"
                )
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphValidationError(f"duplicate edge ({u}, {v})")
            seen.add(key)
        return cls(int(n_nodes), frozenset(seen))

    @property
    def nodes(self) -> range:
        return range(1, self.n_nodes + 1)

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {k: [] for k in self.nodes}
        for u, v in sorted(self.edges):
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def degree(self, k: int) -> int:
        return sum(1 for e in self.edges if k in e)

    def connected_components(self, removed: Iterable[int] = ()) -> list[set[int]]:
        """Components of the graph with the ``removed`` nodes deleted."""
        gone = set(removed)
        adj = self.adjacency()
        comps = []
        seen = set(gone)
        for start in self.nodes:
            if start in seen:
                continue
            comp = {start}
            stack = [start]
            seen.add(start)
            while stack:
                u = stack.pop()
                for w in adj[u]:
                    if w not in seen:
                        seen.add(w)
                        comp.add(w)
                        stack.append(w)
            comps.append(comp)
        return comps

    @property
    def is_connected(self) -> bool:
        return len(self.connected_components()) == 1

    def relabel(self, perm: Sequence[int]) -> "NetworkGraph":
        """Graph with node ``k`` renamed to ``perm[k - 1]``."""
        if sorted(perm) != list(self.nodes):
            raise GraphValidationError("relabelling must be a permutation of the node labels")
        return NetworkGraph.from_edges(
            self.n_nodes, [(perm[u - 1], perm[v - 1]) for u, v in self.edges]
        )

    def to_dict(self) -> dict:
        return {"n": self.n_nodes, "edges": [list(e) for e in sorted(self.edges)]}


def load_topology(path: str | Path) -> NetworkGraph:
    """Read a topology file.

    JSON files hold ``{"n": N, "edges": [[u, v], ...]}``.  Anything else is
    read as an edge list with one ``u v`` pair per line; ``#`` starts a
    comment and an optional ``nodes N`` line declares isolated trailing nodes.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
            return NetworkGraph.from_edges(int(data["n"]), data["edges"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise GraphValidationError(f"{path}: malformed topology JSON ({exc})") from exc

    edges = []
    declared = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0].lower() == "nodes" and len(parts) == 2:
            declared = int(parts[1])
            continue
        if len(parts) != 2:
            raise GraphValidationError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise GraphValidationError(f"{path}:{lineno}: non-integer node label") from exc
    n = declared if declared is not None else max((max(e) for e in edges), default=0)
    return NetworkGraph.from_edges(n, edges)


def build_laplacian(graph: NetworkGraph) -> np.ndarray:
    """Graph Laplacian with adjacency off the diagonal and ``-degree`` on it."""
    n = graph.n_nodes
    lap = np.zeros((n, n))
    for u, v in graph.edges:
        lap[u - 1, v - 1] = 1.0
        lap[v - 1, u - 1] = 1.0
    lap[np.diag_indices(n)] = -lap.sum(axis=1)
    return lap


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Eigen-decomposition of a graph Laplacian.

    ``vectors[:, n - 1]`` is the eigenvector ``v^n`` with eigenvalue
    ``-omegas[n - 1]**2``; modes are sorted by increasing frequency.
    """

    laplacian: np.ndarray
    eigenvalues: np.ndarray
    omegas: np.ndarray
    vectors: np.ndarray
    distinctness_ok: bool
    min_gap: float

    @property
    def n(self) -> int:
        return self.omegas.size

    def mode(self, n: int) -> np.ndarray:
        return self.vectors[:, n - 1]

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.eigenvalues) @ self.vectors.T


def spectral_decompose(
    laplacian: np.ndarray,
    symmetry_tol: float = 1e-12,
    distinct_tol: float = 1e-8,
) -> LaplacianSpectrum:
    """Sorted orthonormal eigenpairs of a symmetric Laplacian.

    Each eigenvector is signed so that its largest-magnitude entry (first one
    on ties) is positive.  Repeated eigenvalues only trigger a warning.
    """
    lap = np.asarray(laplacian, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise SpectrumError(f"Laplacian must be square, got shape {lap.shape}")
    scale = max(1.0, float(np.abs(lap).max(initial=0.0)))
    if np.abs(lap - lap.T).max(initial=0.0) > symmetry_tol * scale:
        raise SpectrumError("Laplacian is not symmetric")
    try:
        vals, vecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"eigensolver failed: {exc}") from exc

    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    # Round-off can push the zero eigenvalue slightly positive.
    vals = np.minimum(vals, 0.0)
    omegas = np.sqrt(-vals) + 0.0  # avoid a signed zero for the constant mode

    for n in range(vecs.shape[1]):
        mags = np.abs(vecs[:, n])
        pivot = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
        if vecs[pivot, n] < 0:
            vecs[:, n] = -vecs[:, n]

    gaps = np.abs(np.diff(vals))
    min_gap = float(gaps.min()) if gaps.size else math.inf
    ok = bool(min_gap > distinct_tol)
    if not ok:
        warnings.warn(
            f"Laplacian has (near-)repeated eigenvalues: min gap {min_gap:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return LaplacianSpectrum(
        laplacian=_frozen(lap),
        eigenvalues=_frozen(vals),
        omegas=_frozen(omegas),
        vectors=_frozen(vecs),
        distinctness_ok=ok,
        min_gap=min_gap,
    )


@dataclass(frozen=True)
class StrategicReport:
    node_set: list[int]
    is_strategic: bool
    failing_modes: list[int]

    def to_dict(self) -> dict:
        return {
            "node_set": self.node_set,
            "is_strategic": self.is_strategic,
            "failing_modes": self.failing_modes,
        }


def _check_nodes(nodes: Iterable[int], n: int) -> list[int]:
    out = [int(k) for k in nodes]
    for k in out:
        if not 1 <= k <= n:
            raise GraphValidationError(f"node {k} outside [1, {n}]")
    return out


def unobserved_modes(spectrum: LaplacianSpectrum, nodes: Iterable[int], tol: float = 1e-9) -> list[int]:
    """Modes whose eigenvector vanishes (relative to its max-norm) on every node."""
    idx = [k - 1 for k in _check_nodes(nodes, spectrum.n)]
    failing = []
    for n in range(spectrum.n):
        v = spectrum.vectors[:, n]
        if np.abs(v[idx]).max() <= tol * np.abs(v).max():
            failing.append(n + 1)
    return failing


def is_strategic_set(spectrum: LaplacianSpectrum, nodes: Iterable[int], tol: float = 1e-9) -> StrategicReport:
    """Check that every eigenvector is nonzero on at least one of ``nodes``."""
    nodes = _check_nodes(nodes, spectrum.n)
    if not nodes:
        raise GraphValidationError("strategic test needs at least one node")
    failing = unobserved_modes(spectrum, nodes, tol)
    return StrategicReport(sorted(set(nodes)), not failing, failing)


@dataclass(frozen=True)
class JointReport:
    """Articulation points and blocks of a graph.

    ``sensor_recommendation`` maps the index of each biconnected component
    to its smallest non-joint node; components made only of joints (e.g. a
    bridge between two joints) need no sensor and are absent.
    """

    joints: frozenset[int]
    biconnected_components: list[frozenset[tuple[int, int]]]
    sensor_recommendation: dict[int, int] = field(default_factory=dict)

    def component_nodes(self, c: int) -> set[int]:
        return {k for e in self.biconnected_components[c] for k in e}

    @property
    def recommended_nodes(self) -> list[int]:
        return sorted(set(self.sensor_recommendation.values()))

    def to_dict(self) -> dict:
        return {
            "joints": sorted(self.joints),
            "biconnected_components": [sorted(list(e) for e in c) for c in self.biconnected_components],
            "sensor_recommendation": self.recommended_nodes,
        }


def find_joints(graph: NetworkGraph) -> JointReport:
    """Tarjan's depth-first search for articulation points and blocks.

    Iterative, one pass over the edges.  Disconnected graphs are handled one
    component at a time.
    """
    adj = graph.adjacency()
    disc: dict[int, int] = {}
    low: dict[int, int] = {}
    joints: set[int] = set()
    blocks: list[frozenset[tuple[int, int]]] = []
    clock = 0

    for root in graph.nodes:
        if root in disc:
            continue
        disc[root] = low[root] = clock
        clock += 1
        root_children = 0
        edge_stack: list[tuple[int, int]] = []
        # frame: (node, parent, iterator over neighbours)
        stack = [(root, 0, iter(adj[root]))]
        while stack:
            u, parent, it = stack[-1]
            advanced = False
            for w in it:
                if w not in disc:
                    disc[w] = low[w] = clock
                    clock += 1
                    edge_stack.append((u, w))
                    stack.append((w, u, iter(adj[w])))
                    if u == root:
                        root_children += 1
                    advanced = True
                    break
                if w != parent and disc[w] < disc[u]:
                    low[u] = min(low[u], disc[w])
                    edge_stack.append((u, w))
            if advanced:
                continue
            stack.pop()
            if not stack:
                break
            p = stack[-1][0]
            low[p] = min(low[p], low[u])
            if low[u] >= disc[p]:
                if p != root:
                    joints.add(p)
                block = set()
                while True:
                    e = edge_stack.pop()
                    block.add((min(e), max(e)))
                    if e == (p, u):
                        break
                blocks.append(frozenset(block))
        if root_children > 1:
            joints.add(root)

    recommendation = {}
    for c, block in enumerate(blocks):
        free = sorted({k for e in block for k in e} - joints)
        if free:
            recommendation[c] = free[0]
    return JointReport(frozenset(joints), blocks, recommendation)


def joint_violations(graph: NetworkGraph, joints: JointReport, i: int, j: int) -> list[dict]:
    """Joints that leave a whole side of the graph without an observer.

    For a joint ``k`` and a component ``C`` of the graph minus ``k``, the
    reduced adjoint matrices are singular whenever neither ``i`` nor ``j``
    lies in ``C``.
    """
    out = []
    for k in sorted(joints.joints):
        for comp in graph.connected_components(removed=[k]):
            if i not in comp and j not in comp:
                out.append({"joint": k, "unobserved_side": sorted(comp)})
    return out


def adjoint_matrix(laplacian: np.ndarray, m: int, T: float) -> np.ndarray:
    """``Δ + μ_m I`` with ``μ_m = (mπ/T)²``."""
    mu = (m * math.pi / T) ** 2
    return np.asarray(laplacian, dtype=float) + mu * np.eye(len(laplacian))


@dataclass(frozen=True)
class Condition3Report:
    m: int
    T: float
    i: int
    j: int
    cond_threshold: float
    conditions: dict[tuple[int, int], float]

    @property
    def singular_pairs(self) -> list[tuple[int, int]]:
        return [pq for pq, c in self.conditions.items() if not c < self.cond_threshold]

    @property
    def passed(self) -> bool:
        return not self.singular_pairs

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "T": self.T,
            "i": self.i,
            "j": self.j,
            "cond_threshold": self.cond_threshold,
            "passed": self.passed,
            "singular_pairs": [list(pq) for pq in self.singular_pairs],
            "max_condition": max(self.conditions.values(), default=0.0),
        }


def check_identifiability_condition3(
    spectrum: LaplacianSpectrum | np.ndarray,
    m: int,
    T: float,
    i: int,
    j: int,
    cond_threshold: float = 1e12,
) -> Condition3Report:
    """Condition numbers of every ``(N-2)×(N-2)`` row-pair submatrix.

    Columns ``i`` and ``j`` are removed from ``Δ + μ_m I`` together with
    each unordered row pair ``(p, q)``.
    """
    lap = spectrum.laplacian if isinstance(spectrum, LaplacianSpectrum) else np.asarray(spectrum)
    n = lap.shape[0]
    if n < 3:
        raise GraphValidationError("condition 3 needs at least 3 nodes")
    i, j = _check_nodes((i, j), n)
    if i == j:
        raise GraphValidationError("observation nodes must be distinct")
    a = adjoint_matrix(lap, m, T)
    cols = [c for c in range(n) if c not in (i - 1, j - 1)]
    conds = {}
    for p, q in combinations(range(1, n + 1), 2):
        rows = [r for r in range(n) if r not in (p - 1, q - 1)]
        sub = a[np.ix_(rows, cols)]
        with np.errstate(divide="ignore"):
            c = float(np.linalg.cond(sub)) if sub.size else 1.0
        conds[(p, q)] = c if np.isfinite(c) else math.inf
    return Condition3Report(m, float(T), i, j, float(cond_threshold), conds)
