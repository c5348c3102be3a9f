"""Linear response of partial complexities to initial perturbations.

A response matrix collects, row by perturbing generator and column by
measured generator, the derivative of the partial complexities of the
evolved perturbation with respect to its strength.  Its square L = R^T R
defines a spectrum whose logarithmic growth rates are finite-time Lyapunov
estimates.

Two pipelines coexist:

* phase-space (Heisenberg) generators with quadratic Hamiltonians -- the
  perturbation stays a displacement, transported exactly by the classical
  flow map; stencil differentiation is exact because everything is linear
  in the strength.
* matrix generators -- finite differences of geodesic-solver partials with
  one Richardson extrapolation step (stencils at eps and eps/2).

Conventions: coefficient transports run forward in time, so the unitary
flavor reproduces the closed-form hyperbolic response of the inverted
oscillator entrywise, while the Gaussian state flavor equals the classical
tangent map (rows follow the conjugate-coordinate pairing of the
perturbing generator).  The two coincide for symmetric flows and always
share singular values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .generators import (
    PHASE_SPACE,
    DisplacementVector,
    GeneratorSet,
    conjugate_by_quadratic_flow,
)
from .geometry import (
    FAST_SOLVER,
    CostWeights,
    SolverConfig,
    heisenberg_complexity,
    state_complexity,
    unitary_complexity,
)

__all__ = [
    "DiffConfig",
    "ResponseMatrix",
    "ResponseSpectrum",
    "LyapunovEstimate",
    "unitary_response_matrix",
    "state_response_matrix",
    "response_spectrum",
    "lyapunov_spectrum",
]


@dataclass(frozen=True)
class DiffConfig:
    """Finite-difference stencil settings for response matrices.

    An entry is flagged unreliable when halving the step changes the
    central difference by more than ``flag_threshold * max(1, |entry|)`` --
    the signature of a non-smooth geodesic branch under the stencil.
    """

    epsilon: float = 1e-5
    richardson: bool = True
    flag_threshold: float = 1e-3
    solver: SolverConfig = field(default_factory=lambda: FAST_SOLVER)


DEFAULT_DIFF = DiffConfig()


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Derivatives of partial complexities w.r.t. a perturbation strength."""

    flavor: str  # "state" | "unitary"
    entries: np.ndarray  # (n, n) real; row = perturbation, column = measured
    time: float
    labels: tuple[str, ...]
    epsilon_used: float
    reliable: np.ndarray | None = None  # per-entry stencil-consistency flags

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2:
            raise ValueError("entries must be a 2-D real array")
        if not np.all(np.isfinite(e)):
            raise ValueError("entries must be finite")
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.reliable is None:
            object.__setattr__(self, "reliable", np.ones(e.shape, dtype=bool))

    @property
    def is_square(self) -> bool:
        return self.entries.shape[0] == self.entries.shape[1]

    def to_json(self) -> dict:
        return {
            "flavor": self.flavor,
            "time": self.time,
            "labels": list(self.labels),
            "entries": self.entries.tolist(),
            "epsilon_used": self.epsilon_used,
            "reliable": self.reliable.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ResponseSpectrum:
    """Eigenvalues of L = R^T R, sorted descending."""

    l_matrix: np.ndarray
    eigenvalues: np.ndarray
    time: float

    def to_json(self) -> dict:
        return {
            "time": self.time,
            "l_matrix": self.l_matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }


@dataclass(frozen=True, eq=False)
class LyapunovEstimate:
    """Finite-time exponents per eigen-branch with their fit diagnostics."""

    lambdas: np.ndarray
    times: np.ndarray
    fit_window: tuple[float, float]
    residual: float

    def to_json(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "fit_window": list(self.fit_window),
            "residual": self.residual,
        }


# ---------------------------------------------------------------------------
# stencil helpers


def _stencil(partials_at, eps: float, richardson: bool, flag_threshold: float):
    """Central differences with one Richardson step over vector outputs.

    ``partials_at(s)`` returns the measured partial-complexity vector at
    strength s.  Returns (derivative, reliable_mask).
    """
    d_full = (partials_at(eps) - partials_at(-eps)) / (2.0 * eps)
    if not richardson:
        return d_full, np.ones_like(d_full, dtype=bool)
    d_half = (partials_at(eps / 2) - partials_at(-eps / 2)) / eps
    deriv = (4.0 * d_half - d_full) / 3.0
    change = np.abs(d_half - d_full)
    ok = change <= flag_threshold * np.maximum(1.0, np.abs(deriv))
    return deriv, ok


# ---------------------------------------------------------------------------
# unitary flavor


def unitary_response_matrix(hamiltonian, gens: GeneratorSet, t: float,
                            cfg: DiffConfig = DEFAULT_DIFF) -> ResponseMatrix:
    """Response of unitary partial complexities to generator perturbations.

    Phase-space kind: the perturbation ``exp(i eps M_K)`` is a displacement,
    conjugated through the quadratic flow exactly; partial complexities are
    the straight-line geodesic components.  Matrix kind: the conjugated
    target is synthesised with matrix exponentials and its partials come
    from the geodesic solver at each stencil point.
    """
    if gens.kind == PHASE_SPACE:
        return _unitary_response_displacement(hamiltonian, gens, t, cfg)
    return _unitary_response_matrix_kind(hamiltonian, gens, t, cfg)


def _unitary_response_displacement(hamiltonian, gens, t, cfg) -> ResponseMatrix:
    n = gens.n_modes
    labels = gens.costed_labels()
    weights = CostWeights.isotropic(gens)
    m = len(labels)

    def row(k_idx: int):
        def partials_at(s: float) -> np.ndarray:
            coeffs = np.zeros(2 * n)
            coeffs[k_idx] = s
            disp = DisplacementVector(coeffs[:n], coeffs[n:])
            moved = conjugate_by_quadratic_flow(disp, hamiltonian, t)
            geo = heisenberg_complexity(moved, weights, gens)
            return np.array([geo.partials[l] for l in labels])

        return _stencil(partials_at, cfg.epsilon, cfg.richardson,
                        cfg.flag_threshold)

    entries = np.empty((m, m))
    reliable = np.empty((m, m), dtype=bool)
    for i in range(m):
        entries[i], reliable[i] = row(i)
    return ResponseMatrix(flavor="unitary", entries=entries, time=float(t),
                          labels=labels, epsilon_used=cfg.epsilon,
                          reliable=reliable)


def _unitary_response_matrix_kind(hamiltonian, gens, t, cfg) -> ResponseMatrix:
    h = np.asarray(hamiltonian, dtype=complex)
    if h.shape != (gens.dim, gens.dim):
        raise ValueError("Hamiltonian dimension does not match the generators")
    u_t = expm(-1j * h * t)
    labels = gens.costed_labels()
    weights = CostWeights.isotropic(gens)
    mats = [gens.generators[i].matrix for i in gens.costed_indices()]
    m = len(labels)
    entries = np.empty((m, m))
    reliable = np.empty((m, m), dtype=bool)
    for i, mk in enumerate(mats):
        multiplicities: list[int] = []

        # strengths are oriented in protocol-path coordinates (endpoint
        # exp(-i Y.M)), so a t=0 perturbation along M_K reports unit
        # partial along M_K
        def partials_at(s: float) -> np.ndarray:
            target = u_t @ expm(-1j * s * mk) @ u_t.conj().T
            geo = unitary_complexity(target, gens, weights, cfg.solver)
            if not geo.converged:
                raise RuntimeError(
                    f"geodesic solver did not converge at stencil point "
                    f"(generator {labels[i]!r}, strength {s:g})")
            multiplicities.append(geo.multiplicity)
            return np.array([geo.partials[l] for l in labels])

        entries[i], reliable[i] = _stencil(partials_at, cfg.epsilon,
                                           cfg.richardson, cfg.flag_threshold)
        if len(set(multiplicities)) > 1:
            # the geodesic branch switched across the stencil
            reliable[i] = False
    return ResponseMatrix(flavor="unitary", entries=entries, time=float(t),
                          labels=labels, epsilon_used=cfg.epsilon,
                          reliable=reliable)


# ---------------------------------------------------------------------------
# state flavor


def state_response_matrix(psi0, hamiltonian, gens: GeneratorSet, t: float,
                          cfg: DiffConfig = DEFAULT_DIFF) -> ResponseMatrix:
    """Response of relative-state partial complexities to perturbations.

    Gaussian pipeline (phase-space kind, ``psi0`` a Gaussian Wigner state):
    both states stay Gaussian with a common covariance under quadratic
    evolution, so their relative displacement is exact and linear in the
    strength -- the derivative needs no stencil.  The entries equal the
    classical tangent map of the flow; rows are indexed through the
    conjugate-coordinate pairing of the perturbing generator.

    Matrix pipeline: central differences of state-complexity partials for
    ``psi2(t) = exp(-iHt) exp(i eps M_K) psi0`` against ``psi1(t)``.
    """
    if gens.kind == PHASE_SPACE:
        return _state_response_gaussian(psi0, hamiltonian, gens, t)
    return _state_response_matrix_kind(psi0, hamiltonian, gens, t, cfg)


def _state_response_gaussian(psi0, hamiltonian, gens, t) -> ResponseMatrix:
    mean = np.asarray(getattr(psi0, "mean"), dtype=float)
    n = gens.n_modes
    if mean.size != 2 * n:
        raise ValueError("state dimension does not match the generator set")
    flow = getattr(hamiltonian, "flow_matrix", None)
    if flow is None:
        raise TypeError("the Gaussian pipeline needs a quadratic Hamiltonian")
    s = np.asarray(flow(t), dtype=float)
    labels = gens.costed_labels()
    # evolved relative displacement per initial coordinate shift; exact in eps
    entries = np.empty((2 * n, 2 * n))
    base = s @ mean
    for k in range(2 * n):
        shifted = s @ (mean + np.eye(2 * n)[k])
        entries[:, k] = shifted - base
    return ResponseMatrix(flavor="state", entries=entries, time=float(t),
                          labels=labels, epsilon_used=0.0)


def _state_response_matrix_kind(psi0, hamiltonian, gens, t, cfg) -> ResponseMatrix:
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    h = np.asarray(hamiltonian, dtype=complex)
    u_t = expm(-1j * h * t)
    psi1 = u_t @ psi0
    labels = gens.costed_labels()
    weights = CostWeights.isotropic(gens)
    mats = [gens.generators[i].matrix for i in gens.costed_indices()]
    m = len(labels)
    entries = np.empty((m, m))
    reliable = np.empty((m, m), dtype=bool)
    for i, mk in enumerate(mats):
        multiplicities: list[int] = []

        # protocol-path strength orientation, as in the unitary flavor
        def partials_at(s: float) -> np.ndarray:
            psi2 = u_t @ (expm(-1j * s * mk) @ psi0)
            geo = state_complexity(psi1, psi2, gens, weights, cfg.solver)
            if not geo.converged:
                raise RuntimeError(
                    f"state geodesic solve failed at stencil point "
                    f"(generator {labels[i]!r}, strength {s:g})")
            multiplicities.append(geo.multiplicity)
            return np.array([geo.partials[l] for l in labels])

        entries[i], reliable[i] = _stencil(partials_at, cfg.epsilon,
                                           cfg.richardson, cfg.flag_threshold)
        if len(set(multiplicities)) > 1:
            reliable[i] = False
    return ResponseMatrix(flavor="state", entries=entries, time=float(t),
                          labels=labels, epsilon_used=cfg.epsilon,
                          reliable=reliable)


# ---------------------------------------------------------------------------
# spectra and exponents


def response_spectrum(r: ResponseMatrix) -> ResponseSpectrum:
    """L = R^T R and its eigenvalues, sorted descending.

    The eigenvalues are computed as squared singular values of R, which
    keeps the contracting branch accurate long after direct diagonalisation
    of L would drown it in the expanding one.
    """
    if not r.is_square:
        raise ValueError("response matrix must be square")
    l_matrix = r.entries.T @ r.entries
    singular = np.linalg.svd(r.entries, compute_uv=False)
    eigenvalues = np.sort(singular**2)[::-1]
    return ResponseSpectrum(l_matrix=l_matrix, eigenvalues=eigenvalues,
                            time=r.time)


def lyapunov_spectrum(spectra: Sequence[ResponseSpectrum],
                      window: tuple[float, float]) -> LyapunovEstimate:
    """Least-squares growth rates of (1/2t) log s_i over a time window.

    Fits 0.5 * log s_i(t) against t per sorted eigen-branch; the reported
    residual is the RMS fit deviation across branches.
    """
    t_min, t_max = window
    inside = [sp for sp in spectra if t_min <= sp.time <= t_max]
    if len(inside) < 5:
        raise ValueError("need at least 5 spectra inside the fit window")
    inside.sort(key=lambda sp: sp.time)
    times = np.array([sp.time for sp in inside])
    vals = np.stack([sp.eigenvalues for sp in inside])  # (m, n)
    if np.any(vals <= 0):
        raise ValueError("nonpositive response eigenvalue in the fit window "
                         "(degenerate response matrix)")
    y = 0.5 * np.log(vals)
    design = np.stack([times, np.ones_like(times)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    slopes = coef[0]
    fit = design @ coef
    residual = float(np.sqrt(np.mean((y - fit) ** 2)))
    order = np.argsort(slopes)[::-1]
    return LyapunovEstimate(lambdas=slopes[order], times=times,
                            fit_window=(float(t_min), float(t_max)),
                            residual=residual)
