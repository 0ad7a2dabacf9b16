"""Source-row detection in the over-determined adjoint system.

Dropping two rows of the ``N × (N-2)`` adjoint system leaves a square system.
Only the row of the source node carries the unknown ``λ_m``; any square
system that omits it is exact, so two such solves agree with each other.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjoint import AdjointSystem
from .errors import LocalizationError, SingularSystemError
from .forward import write_columns


@dataclass(frozen=True)
class ReducedSolve:
    """Solution of the adjoint system with rows ``l1`` and ``l2`` removed."""

    l1: int
    l2: int
    xbar: np.ndarray
    condition: float


def solve_reduced(system: AdjointSystem, l1: int, l2: int, cond_threshold: float = 1e12) -> ReducedSolve:
    """Solve the ``N-2`` retained rows of ``-A_reduced x = rhs`` (source term omitted)."""
    n = system.n
    if l1 == l2:
        raise ValueError("removed rows must be distinct")
    for l in (l1, l2):
        if not 1 <= l <= n:
            raise ValueError(f"row {l} outside [1, {n}]")
    keep = [r for r in range(n) if r not in (l1 - 1, l2 - 1)]
    a = -system.A_reduced[keep]
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > cond_threshold:
        raise SingularSystemError(
            f"reduced matrix without rows ({l1}, {l2}) is singular (condition {cond:.3g})", cond
        )
    x = np.linalg.solve(a, system.rhs[keep])
    return ReducedSolve(l1, l2, x, cond)


def _rel_diff(x: np.ndarray, ref: np.ndarray) -> float:
    scale = float(np.linalg.norm(ref))
    diff = float(np.linalg.norm(x - ref))
    if scale == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / scale


@dataclass(frozen=True)
class CandidateScore:
    row: int
    l2: int
    l3: int
    score: float


@dataclass(frozen=True)
class LocalizationResult:
    """Outcome of :func:`localize`.

    ``margin`` is the runner-up score over the winning score, so large values
    mean the source row stands out clearly.  ``consistency_table`` holds all
    ``C(N, 2)`` reduced solves with their deviation from the mean of the
    solves that omit the winning row.
    """

    source_node: int
    m: int
    scores: dict[int, float]
    threshold_used: float
    margin: float
    candidates: tuple[CandidateScore, ...]
    consistency_table: tuple[dict, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {
            "source_node": self.source_node,
            "m": self.m,
            "threshold": self.threshold_used,
            "margin": self.margin,
            "scores": {str(k): v for k, v in self.scores.items()},
        }


def consistency_table(system: AdjointSystem, reference: np.ndarray | None = None, source_row: int | None = None):
    """All row pairs ``(l1, l2)`` with their solutions and relative deviation.

    The deviation is measured against ``reference`` when given (e.g. projected
    ground truth); otherwise against the mean solution of the pairs that
    contain ``source_row``.  Singular pairs are listed with ``xbar = None``.
    """
    rows = []
    for l1, l2 in itertools.combinations(range(1, system.n + 1), 2):
        try:
            sol = solve_reduced(system, l1, l2)
            rows.append({"l1": l1, "l2": l2, "xbar": sol.xbar, "condition": sol.condition})
        except SingularSystemError as exc:
            rows.append({"l1": l1, "l2": l2, "xbar": None, "condition": exc.condition})
    if reference is None and source_row is not None:
        members = [r["xbar"] for r in rows if r["xbar"] is not None and source_row in (r["l1"], r["l2"])]
        if members:
            reference = np.mean(members, axis=0)
    for r in rows:
        if r["xbar"] is None or reference is None:
            r["diff_norm"] = float("nan")
        else:
            r["diff_norm"] = _rel_diff(r["xbar"], np.asarray(reference))
    return tuple(rows)


def write_consistency_csv(path: str | Path, table, unknown_nodes) -> None:
    """CSV with columns ``l1,l2,xbar<k>...,diff_norm``; singular pairs hold ``nan``."""
    width = len(unknown_nodes)
    cols = [[], []] + [[] for _ in range(width)] + [[]]
    for r in table:
        x = r["xbar"] if r["xbar"] is not None else np.full(width, np.nan)
        vals = [r["l1"], r["l2"], *x, r["diff_norm"]]
        for c, v in zip(cols, vals):
            c.append(v)
    header = "l1,l2," + ",".join(f"xbar{k}" for k in unknown_nodes) + ",diff_norm"
    write_columns(path, header, [np.asarray(c, dtype=float) for c in cols])


def _candidate(system: AdjointSystem, l1: int, cond_threshold: float) -> CandidateScore | None:
    sols = []
    for l in range(1, system.n + 1):
        if l == l1:
            continue
        try:
            sols.append(solve_reduced(system, l1, l, cond_threshold))
        except SingularSystemError:
            continue
        if len(sols) == 2:
            break
    if len(sols) < 2:
        return None
    return CandidateScore(l1, sols[0].l2, sols[1].l2, _rel_diff(sols[1].xbar, sols[0].xbar))


def localize(
    system: AdjointSystem,
    rel_threshold: float = 1e-3,
    min_margin: float = 2.0,
    cond_threshold: float = 1e12,
    with_table: bool = True,
) -> LocalizationResult:
    """Find the source row of ``system``.

    Each row ``l1`` is scored by the relative disagreement of the solves with
    rows ``(l1, l2)`` and ``(l1, l3)`` removed, ``l2 < l3`` being the smallest
    other rows giving invertible reduced matrices.  Rows scoring at most
    ``rel_threshold`` pass.

    Raises
    ------
    LocalizationError
        If no row passes, or several pass and the runner-up is within a
        factor ``min_margin`` of the best.
    """
    if system.n < 4:
        raise ValueError(f"localization needs at least 4 nodes, got {system.n}")
    cands = [c for l1 in range(1, system.n + 1) if (c := _candidate(system, l1, cond_threshold)) is not None]
    if not cands:
        raise LocalizationError("every reduced system is singular", [], {})
    scores = {c.row: c.score for c in cands}
    order = sorted(cands, key=lambda c: (c.score, c.row))
    best = order[0]
    runner = order[1].score if len(order) > 1 else float("inf")
    if best.score == 0.0:
        margin = float("inf") if runner > 0.0 else 1.0
    else:
        margin = runner / best.score
    passing = [c.row for c in order if c.score <= rel_threshold]
    if not passing:
        raise LocalizationError(
            f"m={system.m}: no row is consistent within {rel_threshold:g} (best row {best.row}, score {best.score:.3g})",
            [],
            scores,
        )
    if len(passing) > 1 and margin < min_margin:
        raise LocalizationError(
            f"m={system.m}: rows {passing} are all consistent, margin {margin:.3g} < {min_margin:g}",
            passing,
            scores,
        )
    table = consistency_table(system, source_row=best.row) if with_table else ()
    return LocalizationResult(
        source_node=best.row,
        m=system.m,
        scores=scores,
        threshold_used=rel_threshold,
        margin=margin,
        candidates=tuple(cands),
        consistency_table=table,
    )


@dataclass(frozen=True)
class MultiLocalization:
    source_node: int
    result: LocalizationResult
    per_m: dict[int, int | None]
    margins: dict[int, float]
    agreed: bool
    notes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "source_node": self.source_node,
            "m_used": self.result.m,
            "margin": self.result.margin,
            "per_m": {str(k): v for k, v in self.per_m.items()},
            "margins": {str(k): v for k, v in self.margins.items()},
            "agreed": self.agreed,
            "notes": list(self.notes),
        }


def localize_multi(
    systems,
    rel_threshold: float = 1e-3,
    min_margin: float = 2.0,
    confident_margin: float = 10.0,
) -> MultiLocalization:
    """Localize for several adjoint indices and combine by majority vote.

    A small margin can mean ``λ_m ≈ 0`` for that ``m``; such runs are noted
    and only counted when no ``m`` reaches ``confident_margin``.
    """
    results: dict[int, LocalizationResult] = {}
    per_m: dict[int, int | None] = {}
    margins: dict[int, float] = {}
    notes = []
    failed_scores: dict[int, float] = {}
    for system in systems:
        try:
            res = localize(system, rel_threshold, min_margin)
        except LocalizationError as exc:
            per_m[system.m] = None
            notes.append(str(exc))
            failed_scores = failed_scores or exc.scores
            continue
        results[system.m] = res
        per_m[system.m] = res.source_node
        margins[system.m] = res.margin
        if res.margin < confident_margin:
            notes.append(f"m={system.m}: margin {res.margin:.3g} below {confident_margin:g}, trying next m")
    if not results:
        raise LocalizationError("localization failed for every m: " + "; ".join(notes), [], failed_scores)
    confident = {m: r for m, r in results.items() if r.margin >= confident_margin}
    pool = confident or results
    votes = Counter(r.source_node for r in pool.values())
    top = max(votes.values())
    tied = sorted(node for node, v in votes.items() if v == top)
    if len(tied) > 1:
        raise LocalizationError(f"majority vote tied between rows {tied}", tied, {})
    winner = tied[0]
    best_m = max((m for m, r in pool.items() if r.source_node == winner), key=lambda m: (pool[m].margin, -m))
    agreed = len(set(per_m.values())) == 1
    if not agreed:
        notes.append(f"per-m verdicts disagree: {per_m}")
    return MultiLocalization(winner, results[best_m], per_m, margins, agreed, tuple(notes))
