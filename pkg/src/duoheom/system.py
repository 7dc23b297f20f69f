"""Two-qubit operator algebra in the product basis {|11>, |10>, |01>, |00>}.

Per-qubit basis order is {|1>, |0>} (excited first), so sigma_z = diag(1, -1)
and the Kronecker product of the two single-qubit spaces reproduces the
basis order above.
"""

from __future__ import annotations

import numpy as np

SI = np.eye(2, dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SP = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |1><0|
SM = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |0><1|

I4 = np.eye(4, dtype=complex)
SX1 = np.kron(SX, SI)
SY1 = np.kron(SY, SI)
SZ1 = np.kron(SZ, SI)
SX2 = np.kron(SI, SX)
SY2 = np.kron(SI, SY)
SZ2 = np.kron(SI, SZ)
#: exchange coupling sigma_1^+ sigma_2^- + sigma_1^- sigma_2^+
EXCHANGE = np.kron(SP, SM) + np.kron(SM, SP)

#: basis-state kets, index order |11>, |10>, |01>, |00>
KET_11 = np.array([1, 0, 0, 0], dtype=complex)
KET_10 = np.array([0, 1, 0, 0], dtype=complex)
KET_01 = np.array([0, 0, 1, 0], dtype=complex)
KET_00 = np.array([0, 0, 0, 1], dtype=complex)
#: Bell states (|10> + |01>)/sqrt2 and (|11> + |00>)/sqrt2
KET_PHI = (KET_10 + KET_01) / np.sqrt(2.0)
KET_PSI = (KET_11 + KET_00) / np.sqrt(2.0)

NAMED_STATES = {
    "11": KET_11, "10": KET_10, "01": KET_01, "00": KET_00,
    "Phi": KET_PHI, "Psi": KET_PSI,
}


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def named_state(name: str) -> np.ndarray:
    """Density matrix for a named initial state (11, 10, 01, 00, Phi, Psi)."""
    if name not in NAMED_STATES:
        raise KeyError(f"unknown state {name!r}; choose from {sorted(NAMED_STATES)}")
    return ket_to_dm(NAMED_STATES[name])


def partial_trace(rho: np.ndarray, keep: int) -> np.ndarray:
    """Reduced 2x2 state of qubit ``keep`` (1 or 2)."""
    r = np.asarray(rho, dtype=complex).reshape(2, 2, 2, 2)
    if keep == 1:
        return np.einsum("ajbj->ab", r)
    if keep == 2:
        return np.einsum("iaib->ab", r)
    raise ValueError("keep must be 1 or 2")


def check_density_matrix(rho: np.ndarray, herm_tol: float = 1e-8,
                         trace_tol: float = 1e-6, eig_tol: float = 1e-7) -> None:
    """Raise ValueError unless rho is Hermitian, unit trace, near-positive."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4) and rho.shape != (2, 2):
        raise ValueError(f"density matrix must be 2x2 or 4x4, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian within tolerance")
    if abs(np.trace(rho).real - 1.0) > trace_tol or abs(np.trace(rho).imag) > trace_tol:
        raise ValueError("density matrix trace deviates from 1")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < -eig_tol:
        raise ValueError(f"density matrix has eigenvalue {w.min():.3e} below -{eig_tol}")
