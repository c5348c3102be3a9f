"""Commutator matrices: generator transfer matrix, its time-evolved form,
and the identity tying them to the unitary response matrix.

For Heisenberg generators every pairwise commutator is a multiple of the
identity, so the transfer matrix T and the evolved commutator matrix O(t)
carry c-number entries and the chain

    R_u(t) T = O(t)

holds exactly when O uses the same forward coefficient transport as the
response pipeline.  For matrix generators the entries are operator valued;
they are exposed for diagnostics but no correspondence is claimed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .generators import HBAR, MATRIX, PHASE_SPACE, GeneratorSet
from .response import DiffConfig, ResponseMatrix, unitary_response_matrix

__all__ = [
    "TransferMatrix",
    "OtocMatrix",
    "transfer_matrix",
    "otoc_matrix",
    "check_correspondence",
    "averaged_otoc_identity",
]


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """Pairwise generator commutators [M_I, M_J].

    Phase-space kind: ``entries[i, j]`` is the c-number with
    [M_I, M_J] = entries[i, j] * identity.  Matrix kind: ``entries`` has
    shape (n, n, d, d) holding the commutator matrices.
    """

    labels: tuple[str, ...]
    entries: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "entries", np.asarray(self.entries, dtype=complex))

    @property
    def symplectic_image(self) -> np.ndarray:
        """The real matrix i T / hbar (phase-space kind only)."""
        if self.kind != PHASE_SPACE:
            raise ValueError("symplectic image needs phase-space entries")
        return (1j * self.entries / HBAR).real


@dataclass(frozen=True, eq=False)
class OtocMatrix:
    """Evolved commutators [M_I(t), M_J] in the same layout as TransferMatrix."""

    labels: tuple[str, ...]
    entries: np.ndarray
    kind: str
    time: float

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "entries", np.asarray(self.entries, dtype=complex))


def _phase_space_commutator_table(gens: GeneratorSet) -> np.ndarray:
    a = np.stack([g.a for g in gens])
    b = np.stack([g.b for g in gens])
    return 1j * HBAR * (a @ b.T - b @ a.T)


def transfer_matrix(gens: GeneratorSet) -> TransferMatrix:
    """All pairwise commutators of a generator set; antisymmetric by build."""
    if gens.kind == PHASE_SPACE:
        entries = _phase_space_commutator_table(gens)
        return TransferMatrix(labels=gens.labels, entries=entries, kind=PHASE_SPACE)
    mats = gens.matrices()
    n, d = len(gens), gens.dim
    entries = np.empty((n, n, d, d), dtype=complex)
    for i in range(n):
        for j in range(n):
            entries[i, j] = mats[i] @ mats[j] - mats[j] @ mats[i]
    return TransferMatrix(labels=gens.labels, entries=entries, kind=MATRIX)


def otoc_matrix(hamiltonian, gens: GeneratorSet, t: float) -> OtocMatrix:
    """Commutators of evolved generators with static ones.

    Phase-space kind: the coefficient vectors ride the forward classical
    flow map (exact for quadratic Hamiltonians), matching the response
    pipeline.  Matrix kind: M_I(t) = U(t)^dag M_I U(t) with U = exp(-iHt).
    """
    if gens.kind == PHASE_SPACE:
        flow = getattr(hamiltonian, "flow_matrix", None)
        if flow is None:
            raise TypeError("phase-space commutator evolution needs a "
                            "quadratic Hamiltonian")
        s = np.asarray(flow(t), dtype=float)
        table = _phase_space_commutator_table(gens)
        # evolved coefficient vectors; the identity component never matters
        base = np.stack([np.concatenate([g.a, g.b]) for g in gens])
        moved = base @ s.T  # row I -> S(t) coeffs_I
        # express moved vectors in the generator basis (for Heisenberg sets
        # the costed generators are the standard basis; identity rows vanish)
        gram = base @ base.T
        # guard: identity rows are zero vectors; solve on the costed block
        idx = [i for i in range(len(gens)) if np.abs(base[i]).max() > 0]
        gsub = gram[np.ix_(idx, idx)]
        comp = np.zeros((len(gens), len(gens)))
        sub = np.linalg.solve(gsub, (moved @ base[idx].T).T).T
        comp[:, idx] = sub
        entries = comp @ table
        return OtocMatrix(labels=gens.labels, entries=entries,
                          kind=PHASE_SPACE, time=float(t))
    h = np.asarray(hamiltonian, dtype=complex)
    u = expm(-1j * h * t)
    mats = gens.matrices()
    evolved = np.einsum("ba,gbc,cd->gad", u.conj(), mats, u)
    n, d = len(gens), gens.dim
    entries = np.empty((n, n, d, d), dtype=complex)
    for i in range(n):
        for j in range(n):
            entries[i, j] = evolved[i] @ mats[j] - mats[j] @ evolved[i]
    return OtocMatrix(labels=gens.labels, entries=entries, kind=MATRIX,
                      time=float(t))


def _costed_block(labels: tuple[str, ...], entries: np.ndarray,
                  keep: tuple[str, ...]) -> np.ndarray:
    idx = [labels.index(l) for l in keep]
    return entries[np.ix_(idx, idx)]


def check_correspondence(ru: ResponseMatrix, transfer: TransferMatrix,
                         otoc: OtocMatrix) -> float:
    """Max-norm residual of (R_u T - O) over the costed generator block."""
    if transfer.kind != PHASE_SPACE or otoc.kind != PHASE_SPACE:
        raise ValueError("the correspondence is defined for c-number entries "
                         "(phase-space generators)")
    keep = ru.labels
    t_block = _costed_block(transfer.labels, transfer.entries, keep)
    o_block = _costed_block(otoc.labels, otoc.entries, keep)
    if ru.entries.shape != t_block.shape:
        raise ValueError("response and transfer dimensions do not match")
    return float(np.abs(ru.entries @ t_block - o_block).max())


def averaged_otoc_identity(psi, hamiltonian, gens: GeneratorSet, t: float,
                           cfg: DiffConfig | None = None):
    """Both sides of the state-averaged correspondence, as real matrices.

    Returns (lhs, rhs) with lhs = <psi| O^dag O |psi> and
    rhs = <psi| T^dag L_u T |psi> over the costed generator block.  For
    Heisenberg generators the entries are c-numbers, so the averages are
    state independent; ``psi`` is validated but only its normalisation
    enters.
    """
    if gens.kind != PHASE_SPACE:
        raise ValueError("the averaged identity is computed for phase-space "
                         "generator sets")
    mean = np.asarray(getattr(psi, "mean"), dtype=float)
    if mean.size != 2 * gens.n_modes:
        raise ValueError("state does not match the generator set")
    ru = unitary_response_matrix(hamiltonian, gens, t, cfg or DiffConfig())
    transfer = transfer_matrix(gens)
    otoc = otoc_matrix(hamiltonian, gens, t)
    keep = ru.labels
    t_block = _costed_block(transfer.labels, transfer.entries, keep)
    o_block = _costed_block(otoc.labels, otoc.entries, keep)
    lhs = o_block.conj().T @ o_block
    lu = ru.entries.T @ ru.entries
    rhs = t_block.conj().T @ lu @ t_block
    if max(np.abs(lhs.imag).max(), np.abs(rhs.imag).max()) > 1e-12:
        raise AssertionError("state-averaged blocks should be real")
    return lhs.real, rhs.real
