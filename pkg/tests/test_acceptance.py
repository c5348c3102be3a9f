"""Acceptance gate: one test per release criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion.  Tolerances are fixed here and are not to be loosened.
"""

import math
import time

import numpy as np

from geochaos.classical import (
    GaussianWignerState,
    classical_lyapunov,
    evolve_flow,
    free_particle,
    harmonic_oscillator,
    iho_response_analytic,
    inverted_oscillator,
    jacobian_matrix,
    quartic_oscillator,
    symplectic_form,
)
from geochaos.generators import heisenberg_generators, pauli_generators
from geochaos.geometry import (
    CostWeights,
    SolverConfig,
    direct_path_complexity,
    state_complexity,
    unitary_complexity,
)
from geochaos.otoc import averaged_otoc_identity, check_correspondence, otoc_matrix, transfer_matrix
from geochaos.response import (
    lyapunov_spectrum,
    response_spectrum,
    state_response_matrix,
    unitary_response_matrix,
)
from geochaos.cli import ExperimentConfig, run_experiment

HEIS = heisenberg_generators()
PAULIS = pauli_generators()
ISO = CostWeights.isotropic(PAULIS)
WEIGHTED = CostWeights({"sigma_x": 1.0, "sigma_y": 1.0, "sigma_z": 1.5})
SX, SY, SZ = (g.matrix for g in PAULIS)
J2 = symplectic_form(1)


def report(name, detail):
    print(f"[acceptance] {name}: PASS ({detail})")


def rotation(theta, axis):
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    h = axis[0] * SX + axis[1] * SY + axis[2] * SZ
    return np.cos(theta) * np.eye(2) - 1j * np.sin(theta) * h


def test_criterion_1_iho_response_parity():
    """Numeric displacement-pipeline response equals the closed form."""
    t_start = time.perf_counter()
    worst = 0.0
    for omega in (0.5, 1.0, 2.0):
        ham = inverted_oscillator(omega)
        for t in (0.0, 0.5, 1.0, 2.0, 5.0):
            numeric = unitary_response_matrix(ham, HEIS, t)
            analytic = iho_response_analytic(omega, t)
            rel = np.abs(numeric.entries - analytic.entries) / np.maximum(
                1.0, np.abs(analytic.entries))
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - t_start
    assert worst <= 1e-6
    assert elapsed < 1.0
    report("criterion 1 (response parity)",
           f"max rel err {worst:.2e}, runtime {elapsed:.2f}s")


def test_criterion_2_lyapunov_recovery():
    """Exponents from the response spectrum and the tangent-vector oracle."""
    ham = inverted_oscillator(1.0)
    spectra = [response_spectrum(unitary_response_matrix(ham, HEIS, float(t)))
               for t in np.linspace(5.0, 10.0, 11)]
    est = lyapunov_spectrum(spectra, (5.0, 10.0))
    err_fit = float(np.abs(est.lambdas - [1.0, -1.0]).max())
    assert err_fit <= 0.01

    bench = classical_lyapunov(ham, np.array([1.0, 0.5]), 100.0)
    err_cls = float(np.abs(est.lambdas - bench.lambdas).max())
    assert err_cls <= 0.01

    harm = harmonic_oscillator(1.0)
    spectra_h = [response_spectrum(unitary_response_matrix(harm, HEIS, float(t)))
                 for t in np.linspace(20.0, 50.0, 31)]
    est_h = lyapunov_spectrum(spectra_h, (20.0, 50.0))
    err_h = float(np.abs(est_h.lambdas).max())
    assert err_h <= 0.05
    report("criterion 2 (Lyapunov recovery)",
           f"fit err {err_fit:.2e}, oracle gap {err_cls:.2e}, "
           f"harmonic |lambda| {err_h:.2e}")


def test_criterion_3_otoc_correspondence():
    """Compact-form residual and the state-averaged identity on the grid."""
    grid = np.arange(0.0, 10.5, 0.5)
    systems = [inverted_oscillator(1.0), harmonic_oscillator(1.0), free_particle()]
    tm = transfer_matrix(HEIS)
    worst = 0.0
    worst_avg = 0.0
    for ham in systems:
        for t in grid:
            ru = unitary_response_matrix(ham, HEIS, float(t))
            o = otoc_matrix(ham, HEIS, float(t))
            worst = max(worst, check_correspondence(ru, tm, o))
            lhs, rhs = averaged_otoc_identity(
                GaussianWignerState.vacuum(), ham, HEIS, float(t))
            # the identity is exact; the comparison is scaled because both
            # sides are independent float products of entries ~ exp(4 w t)
            worst_avg = max(worst_avg, float(
                np.abs(lhs - rhs).max() / max(1.0, np.abs(lhs).max())))
    assert worst <= 1e-10
    assert worst_avg <= 1e-10

    # state independence of the averaged identity
    states = [GaussianWignerState.vacuum(),
              GaussianWignerState(np.array([3.0, -2.0]), 0.5 * np.eye(2)),
              GaussianWignerState(np.array([0.0, 0.0]),
                                  np.array([[2.0, 0.5], [0.5, 1.0]]))]
    base = averaged_otoc_identity(states[0], inverted_oscillator(1.0), HEIS, 2.0)
    gap = 0.0
    for s in states[1:]:
        lhs, rhs = averaged_otoc_identity(s, inverted_oscillator(1.0), HEIS, 2.0)
        gap = max(gap, float(np.abs(lhs - base[0]).max()),
                  float(np.abs(rhs - base[1]).max()))
    assert gap <= 1e-12
    report("criterion 3 (commutator correspondence)",
           f"max residual {worst:.2e}, averaged gap {worst_avg:.2e}, "
           f"state dependence {gap:.2e}")


def test_criterion_4_classical_limit_bridge():
    """Gaussian response equals the tangent map; tangent map survives FD."""
    state = GaussianWignerState.vacuum()
    grid = np.linspace(0.0, 5.0, 11)
    systems = [inverted_oscillator(1.0), inverted_oscillator(2.0),
               harmonic_oscillator(1.0), free_particle()]
    worst = 0.0
    for ham in systems:
        for t in grid:
            rs = state_response_matrix(state, ham, HEIS, float(t))
            jac = jacobian_matrix(ham, state.mean, float(t))
            scale = max(1.0, float(np.abs(jac).max()))
            worst = max(worst, float(np.abs(rs.entries - jac).max() / scale))
    assert worst <= 1e-6

    # independent route: the splitting integrator's exact tangent map
    worst_int = 0.0
    for ham in (inverted_oscillator(1.0), harmonic_oscillator(1.0), free_particle()):
        sep = ham.as_separable()
        for t in (1.0, 3.0, 5.0):
            rs = state_response_matrix(state, ham, HEIS, float(t))
            jac = evolve_flow(sep, state.mean, float(t)).final_jacobian
            worst_int = max(worst_int, float(np.abs(rs.entries - jac).max()))
    assert worst_int <= 1e-6

    # quartic: variational tangent map vs central differences
    quartic = quartic_oscillator()
    x0 = np.array([1.0, 0.0])
    t = 2.0
    jac = jacobian_matrix(quartic, x0, t)
    eps = 1e-6
    fd = np.empty((2, 2))
    for k in range(2):
        xp, xm = x0.copy(), x0.copy()
        xp[k] += eps
        xm[k] -= eps
        fd[:, k] = (evolve_flow(quartic, xp, t).endpoint
                    - evolve_flow(quartic, xm, t).endpoint) / (2 * eps)
    fd_gap = float(np.abs(jac - fd).max())
    assert fd_gap <= 1e-6
    report("criterion 4 (classical-limit bridge)",
           f"bridge {worst:.2e}, integrator route {worst_int:.2e}, "
           f"quartic FD {fd_gap:.2e}")


def test_criterion_5_geodesic_oracle_equivalence():
    """Solver vs analytic lengths, direct-path oracle, state symmetry."""
    rng = np.random.default_rng(2024)
    light = SolverConfig(n_starts=80, n_refine=5, ode_steps=160, seed=11,
                         direct_fallback="auto")
    worst_iso = 0.0
    for _ in range(20):
        theta = rng.uniform(0.1, math.pi - 0.1)
        u = rotation(theta, rng.normal(size=3))
        expected = min(theta, math.pi - theta)
        got = unitary_complexity(u, PAULIS, ISO, light).length
        worst_iso = max(worst_iso, abs(got - expected))
    assert worst_iso <= 1e-4

    ea_cfg = SolverConfig(n_starts=80, n_refine=5, ode_steps=200, seed=12,
                          direct_fallback="never")
    oracle_cfg = SolverConfig(seed=13)  # 64 intervals, 10 restarts
    worst_w = 0.0
    for _ in range(5):
        u = rotation(rng.uniform(0.3, 1.3), rng.normal(size=3))
        ea = unitary_complexity(u, PAULIS, WEIGHTED, ea_cfg)
        oracle = direct_path_complexity(u, PAULIS, WEIGHTED, oracle_cfg)
        assert ea.converged and oracle.converged
        worst_w = max(worst_w, abs(ea.length - oracle.length))
    assert worst_w <= 1e-3

    zero = np.array([1.0, 0.0])
    one = np.array([0.0, 1.0])
    fwd = state_complexity(zero, one, PAULIS, ISO, light)
    bwd = state_complexity(one, zero, PAULIS, ISO, light)
    err_pi2 = abs(fwd.length - math.pi / 2)
    sym = abs(fwd.length - bwd.length)
    assert err_pi2 <= 1e-4
    assert sym <= 1e-6
    report("criterion 5 (solver oracle equivalence)",
           f"isotropic {worst_iso:.2e}, weighted-vs-direct {worst_w:.2e}, "
           f"pi/2 err {err_pi2:.2e}, symmetry {sym:.2e}")


def test_criterion_6_invariant_suites():
    """Symplecticity, t=0 identities, exact O(0)=T, spectra, algebra."""
    # symplecticity and unit determinant of Jacobians and responses
    worst_sympl = 0.0
    for ham in (inverted_oscillator(1.0), inverted_oscillator(2.0),
                harmonic_oscillator(1.0), free_particle()):
        for t in np.linspace(0.5, 5.0, 6):
            jac = jacobian_matrix(ham, [0.1, -0.2], float(t))
            ru = unitary_response_matrix(ham, HEIS, float(t)).entries
            for m in (jac, ru):
                scale = max(1.0, float(np.abs(m).max()) ** 2)
                worst_sympl = max(
                    worst_sympl,
                    float(np.abs(m.T @ J2 @ m - J2).max()) / scale,
                    abs(np.linalg.det(m) - 1.0) / scale)
    assert worst_sympl <= 1e-8

    # t = 0 identity of the response matrices, at 10x the stencil width
    eps_fd = 1e-5
    r_disp = unitary_response_matrix(inverted_oscillator(1.0), HEIS, 0.0)
    r_mat = unitary_response_matrix(SZ, PAULIS, 0.0)
    r_gauss = state_response_matrix(GaussianWignerState.vacuum(),
                                    inverted_oscillator(1.0), HEIS, 0.0)
    worst_id = max(
        float(np.abs(r_disp.entries - np.eye(2)).max()),
        float(np.abs(r_mat.entries - np.eye(3)).max()),
        float(np.abs(r_gauss.entries - np.eye(2)).max()))
    assert worst_id <= 10 * eps_fd

    # O(0) = T exactly
    for ham in (inverted_oscillator(1.0), harmonic_oscillator(1.0), free_particle()):
        assert np.array_equal(otoc_matrix(ham, HEIS, 0.0).entries,
                              transfer_matrix(HEIS).entries)

    # eigenvalue product equals det(R)^2
    worst_det = 0.0
    for t in (0.5, 1.0, 2.0, 4.0):
        r = unitary_response_matrix(inverted_oscillator(1.0), HEIS, float(t))
        sp = response_spectrum(r)
        det2 = np.linalg.det(r.entries) ** 2
        worst_det = max(worst_det, abs(float(np.prod(sp.eigenvalues)) - det2)
                        / max(1.0, det2))
    assert worst_det <= 1e-8

    # commutator antisymmetry and the Jacobi identity, per dimension group
    rng = np.random.default_rng(6)
    random4 = []
    for _ in range(3):
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        random4.append(m + m.conj().T)

    def brk(x, y):
        return x @ y - y @ x

    worst_alg = 0.0
    for mats in ([SX, SY, SZ], random4):
        for a in mats:
            for b in mats:
                scale = max(1.0, np.abs(a).max() * np.abs(b).max())
                worst_alg = max(
                    worst_alg,
                    float(np.abs(brk(a, b) + brk(b, a)).max()) / scale)
                for c in mats:
                    s3 = max(1.0, np.abs(a).max() * np.abs(b).max()
                             * np.abs(c).max())
                    jac_id = (brk(a, brk(b, c)) + brk(b, brk(c, a))
                              + brk(c, brk(a, b)))
                    worst_alg = max(worst_alg,
                                    float(np.abs(jac_id).max()) / s3)
    assert worst_alg <= 1e-12
    report("criterion 6 (invariant suites)",
           f"symplectic {worst_sympl:.2e}, t=0 identity {worst_id:.2e}, "
           f"spectrum-det {worst_det:.2e}, algebra {worst_alg:.2e}")


def test_criterion_7_weighted_geodesic_geometry(tmp_path):
    """Great-circle isotropic trace vs measurable anisotropic deviation."""
    cfg = ExperimentConfig(experiment="qubit-geodesic", parameters={},
                           time_grid=(0.0, 1.0, 2), output=tmp_path / "qg",
                           seed=0)
    rep = run_experiment(cfg)
    checks = {c["name"]: c for c in rep.checks}
    iso = checks["isotropic_great_circle_margin"]
    dev = checks["weighted_plane_deviation"]
    assert iso["passed"] and iso["value"] <= 1e-6
    assert dev["passed"] and dev["value"] > 1e-3
    assert (tmp_path / "qg" / "geodesic_isotropic.csv").exists()
    assert (tmp_path / "qg" / "geodesic_weighted.csv").exists()
    report("criterion 7 (weighted geodesic geometry)",
           f"great-circle margin {iso['value']:.2e}, "
           f"anisotropic deviation {dev['value']:.3f}")
