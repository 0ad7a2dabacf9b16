"""One test per acceptance criterion; the verdicts are summarized at the end of the run."""

import math
import warnings

import numpy as np
import pytest

from conftest import FIVE_NODE_EDGES, LONG_M, LONG_T, SHORT_M, SHORT_T, SHORT_T0, short_signal
from oracles import brute_force_joints, energy, random_connected_graph
from wavesource import (
    FitWindow,
    LocalizationError,
    NetworkGraph,
    RankDeficiencyError,
    ReconstructionError,
    SimulationConfig,
    SourceSpec,
    SturmBasis,
    ZeroSignal,
    add_noise,
    assemble,
    build_laplacian,
    check_identifiability_condition3,
    estimate_final_state,
    find_joints,
    fourier_reconstruct,
    is_strategic_set,
    localize,
    project,
    reconstruct_by_deconvolution,
    simulate_modal,
    simulate_rk,
    spectral_decompose,
)
from wavesource.localize import consistency_table
from wavesource.signals import SignalSpec

R2 = math.sqrt(2.0)
WINDOW = FitWindow(SHORT_T0, SHORT_T, SHORT_T / SHORT_M, SHORT_T0)


def _records(traj):
    return {k: traj.node(k) for k in range(1, traj.n_nodes + 1)}


def _pipeline_system(spectrum, traj, m):
    """Adjoint system built from the (1, 2) records and the estimated X(T)."""
    recs = _records(traj)
    est = estimate_final_state(recs, [1, 2], spectrum, WINDOW)
    return assemble(spectrum, SturmBasis(traj.T), m, 1, 2, traj.states[0], est.XT, recs, traj.times)


def _block_errors(system, traj, source):
    """Worst source-pair deviation from projected truth, worst mutual deviation, best other-pair deviation."""
    truth = project(traj.times, traj.states, SturmBasis(traj.T), system.m)[list(np.array(system.unknown_nodes) - 1)]
    vs_truth = consistency_table(system, reference=truth)
    mutual = consistency_table(system, source_row=source)
    with_s = [r for r in vs_truth if source in (r["l1"], r["l2"])]
    without = [r for r in vs_truth if source not in (r["l1"], r["l2"])]
    return (
        max(r["diff_norm"] for r in with_s),
        max(r["diff_norm"] for r in mutual if source in (r["l1"], r["l2"])),
        min(r["diff_norm"] for r in without),
    )


def test_criterion_1_spectrum(five_spectrum, record_property):
    expected_vals = [0.0, -3 + R2, -3.0, -3 - R2, -5.0]
    a, b = 2 * math.sqrt(2 - R2), 2 * math.sqrt(2 + R2)
    # third vector with the last entry's sign corrected so that it is an eigenvector
    expected_vecs = [
        np.ones(5) / math.sqrt(5),
        np.array([1, 1 - R2, -1, 0, -1 + R2]) / a,
        np.array([1, -1, 1, 0, -1]) / 2,
        np.array([1, 1 + R2, -1, 0, -1 - R2]) / b,
        np.array([1, 1, 1, -4, 1]) / (2 * math.sqrt(5)),
    ]
    val_err = np.abs(five_spectrum.eigenvalues - expected_vals).max()
    vec_err = max(
        min(np.abs(five_spectrum.mode(n + 1) - v).max(), np.abs(five_spectrum.mode(n + 1) + v).max())
        for n, v in enumerate(expected_vecs)
    )
    record_property("detail", f"eigenvalue err {val_err:.1e}, eigenvector err {vec_err:.1e}")
    assert val_err <= 1e-12
    assert vec_err <= 1e-10


def test_criterion_2_placement(five_spectrum, nine_graph, record_property):
    pair = is_strategic_set(five_spectrum, [1, 2])
    soft = is_strategic_set(five_spectrum, [4])
    nine = spectral_decompose(build_laplacian(nine_graph))
    same_side = check_identifiability_condition3(nine, 1, 100.0, 1, 2)
    across = check_identifiability_condition3(nine, 1, 100.0, 1, 7)
    bad = [p for p in same_side.singular_pairs if set(p) <= {6, 7, 8, 9}]
    record_property(
        "detail",
        f"(1,2) strategic={pair.is_strategic}, node 4 fails {soft.failing_modes}, "
        f"(1,2) on nine-node graph singular pairs in 6..9: {len(bad)}, (1,7) passes={across.passed}",
    )
    assert pair.is_strategic
    assert not soft.is_strategic and soft.failing_modes == [2, 3, 4]
    assert not same_side.passed and bad
    assert across.passed


def test_criterion_3_final_state(five_spectrum, short_traj, record_property):
    recs = _records(short_traj)
    errs = {}
    for k in (1, 2, 3, 5):
        est = estimate_final_state(recs, [k], five_spectrum, FitWindow(70.0, SHORT_T, 1.0, SHORT_T0))
        errs[k] = np.linalg.norm(est.XT - short_traj.states[-1]) / np.linalg.norm(short_traj.states[-1])
    with pytest.raises(RankDeficiencyError):
        estimate_final_state(recs, [4], five_spectrum, WINDOW)
    record_property("detail", "r_k " + ", ".join(f"k={k}: {e:.1e}" for k, e in errs.items()) + "; k=4 rank-deficient")
    assert max(errs.values()) <= 1e-4


def test_criterion_4_localization(five_spectrum, short_trajs_by_source, record_property):
    rows = []
    for s, traj in short_trajs_by_source.items():
        system = _pipeline_system(five_spectrum, traj, 1)
        vs_truth, mutual, others = _block_errors(system, traj, s)
        res = localize(system)
        rows.append((s, res.source_node, res.margin, vs_truth, mutual, others))
    record_property(
        "detail",
        "; ".join(f"s={s}: found {f}, margin {mg:.0f}, block {t:.1e}/{mu:.1e}, others >= {o:.1e}" for s, f, mg, t, mu, o in rows),
    )
    for s, found, margin, vs_truth, mutual, others in rows:
        assert found == s
        assert margin >= 100
        assert vs_truth <= 1e-6 and mutual <= 1e-6
        assert others >= 1e-4


def test_criterion_5_m_degradation(five_spectrum, short_traj, record_property):
    sys5 = _pipeline_system(five_spectrum, short_traj, 5)
    block5, _, _ = _block_errors(sys5, short_traj, 3)
    res5 = localize(sys5)
    try:
        res10 = localize(_pipeline_system(five_spectrum, short_traj, 10))
        verdict10 = f"margin {res10.margin:.2f}"
        ok10 = res10.margin < 10
    except LocalizationError as exc:
        verdict10, ok10 = f"ambiguous ({exc})", True
    record_property("detail", f"m=5 block {block5:.1e}, found {res5.source_node}; m=10 {verdict10}")
    assert block5 <= 1e-3
    assert res5.source_node == 3
    assert ok10


def test_criterion_6_deconvolution(five_spectrum, long_trajs, record_property):
    # fixed regularization per noise level, median over five seeds
    levels = {0.0: 1e6, 0.03: 2e9, 0.05: 4e9}
    bounds = {0.0: 0.08, 0.03: 0.20, 0.05: 0.25}
    table = {}
    for name, (traj, sig, s, k) in long_trajs.items():
        for level, r in levels.items():
            seeds = [0] if level == 0 else range(5)
            errs = [
                reconstruct_by_deconvolution(
                    five_spectrum, s, add_noise(traj, level, seed).node(k), traj.times, k,
                    r=r, mode="tikhonov", truth=sig,
                ).error
                for seed in seeds
            ]
            table[name, level] = float(np.median(errs))
    traj, sig, s, _ = long_trajs["lambda1"]
    with pytest.raises(ReconstructionError, match="not strategic"):
        reconstruct_by_deconvolution(five_spectrum, s, traj.node(4), traj.times, 4, r=1e6, mode="tikhonov")
    record_property("detail", "; ".join(f"{n} @{lv:.0%}: {e:.3f}" for (n, lv), e in table.items()) + "; k=4 rejected")
    failures = [(n, lv, e) for (n, lv), e in table.items() if e > bounds[lv]]
    assert not failures, f"above bound: {failures}"


class _Phi3(SignalSpec):
    def shape(self, t):
        return SturmBasis(self.active_end).phi(3, t)


def test_criterion_7_fourier(five_spectrum, short_traj, record_property):
    basis = SturmBasis(SHORT_T)
    # the probe needs a finer grid than the fixture for the ±1e-3 tolerance
    probe = simulate_modal(five_spectrum, SourceSpec(3, _Phi3(SHORT_T)), SimulationConfig(SHORT_T, 1000))

    def assembler(traj):
        recs = _records(traj)
        return lambda m: assemble(five_spectrum, basis, m, 1, 2, traj.states[0], traj.states[-1], recs, traj.times)

    coeffs = fourier_reconstruct(assembler(probe), 3, 7, probe.times).coefficients
    sig = short_signal()
    out = fourier_reconstruct(assembler(short_traj), 3, 7, short_traj.times, truth=sig)
    truth = sig(short_traj.times)
    corr = float(out.values @ truth / (np.linalg.norm(out.values) * np.linalg.norm(truth)))
    others = float(np.abs(np.delete(coeffs, 2)).max())
    record_property("detail", f"probe lambda_3 = {coeffs[2]:.6f}, others <= {others:.1e}; fixture correlation {corr:.3f}")
    assert abs(coeffs[2] - 1.0) <= 1e-3
    assert others <= 1e-3
    assert corr >= 0.9


def test_criterion_8_oracles(record_property):
    rng = np.random.default_rng(2024)
    sig = short_signal()
    cfg = SimulationConfig(SHORT_T, SHORT_M)
    solver_diff = 0.0
    for _ in range(20):
        g = random_connected_graph(rng, int(rng.integers(2, 13)), float(rng.uniform(0, 0.6)))
        source = SourceSpec(int(rng.integers(1, g.n_nodes + 1)), sig)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sp = spectral_decompose(build_laplacian(g))
        rk = simulate_rk(g, source, cfg)
        modal = simulate_modal(sp, source, cfg)
        solver_diff = max(solver_diff, np.abs(rk.states - modal.states).max() / np.abs(modal.states).max())
    mismatched = 0
    for _ in range(200):
        g = random_connected_graph(rng, int(rng.integers(2, 13)), float(rng.uniform(0, 0.8)))
        mismatched += find_joints(g).joints != brute_force_joints(g)
    basis = SturmBasis(SHORT_T)
    coarse = np.linspace(0, SHORT_T, SHORT_M + 1)
    fine = np.linspace(0, SHORT_T, 100 * SHORT_M + 1)
    lam_c, lam_f = project(coarse, sig(coarse), basis, 1), project(fine, sig(fine), basis, 1)
    proj_err = abs(lam_c - lam_f) / abs(lam_f)
    record_property(
        "detail",
        f"rk vs modal {solver_diff:.1e} (relative max-norm), joint mismatches {mismatched}/200, projection {proj_err:.1e}",
    )
    assert solver_diff <= 1e-6
    assert mismatched == 0
    assert proj_err <= 1e-6


def test_criterion_9_properties(five_graph, five_spectrum, short_traj, record_property):
    rng = np.random.default_rng(99)
    lap = five_spectrum.laplacian
    # energy of free evolution
    cfg = SimulationConfig(200.0, 2000, tuple(rng.normal(size=5)), tuple(rng.normal(size=5)))
    free = simulate_rk(five_graph, SourceSpec(1, ZeroSignal(0.0)), cfg)
    e = energy(free.states, free.velocities, lap)
    drift = float(np.abs(e - e[0]).max() / e[0])
    # linearity in the signal and the initial data
    cfg0 = SimulationConfig(SHORT_T, SHORT_M)
    sig = short_signal()
    c = 2.5
    one = simulate_modal(five_spectrum, SourceSpec(3, sig), cfg0)
    init = SimulationConfig(SHORT_T, SHORT_M, tuple(rng.normal(size=5)), tuple(rng.normal(size=5)))
    free0 = simulate_modal(five_spectrum, SourceSpec(3, ZeroSignal(SHORT_T0)), init)
    scaled = short_signal(beta=3.0 * c)
    both = simulate_modal(five_spectrum, SourceSpec(3, scaled), init)
    lin_err = float(np.abs(both.states - (c * one.states + free0.states)).max() / np.abs(both.states).max())
    # permutation equivariance of localization
    equivariant = True
    for _ in range(5):
        perm = [int(p) for p in rng.permutation(5) + 1]
        s = int(rng.integers(1, 6))
        g = five_graph.relabel(perm)
        sp = spectral_decompose(build_laplacian(g))
        traj = simulate_modal(sp, SourceSpec(perm[s - 1], sig), cfg0)
        recs = _records(traj)
        system = assemble(sp, SturmBasis(SHORT_T), 1, perm[0], perm[1], traj.states[0], traj.states[-1], recs, traj.times)
        equivariant &= localize(system).source_node == perm[s - 1]
    # seeded noise
    deterministic = np.array_equal(add_noise(short_traj, 0.03, 17).states, add_noise(short_traj, 0.03, 17).states)
    record_property(
        "detail",
        f"energy drift {drift:.1e}, linearity err {lin_err:.1e}, equivariant {equivariant}, noise deterministic {deterministic}",
    )
    assert drift <= 1e-6
    assert lin_err <= 1e-9
    assert equivariant
    assert deterministic
