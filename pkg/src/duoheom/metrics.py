"""Entanglement and gate-performance diagnostics.

Concurrence (general and X-state closed form), Uhlmann fidelity with
single-qubit partial fidelities, X-state detection, zero-concurrence
interval analysis (sudden death, dark periods), and a pairwise
trace-distance non-Markovianity quantifier.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import system

#: magnitudes below this are treated as exactly zero after cleanup
ZERO_TOL = 1e-12

_SYY = np.kron(system.SY, system.SY)

#: row/column pairs (0-indexed) that vanish for an X-state
X_OFF_PATTERN = ((0, 1), (0, 2), (1, 0), (1, 3), (2, 0), (2, 3), (3, 1), (3, 2))


def _clamp01(x: float) -> float:
    if abs(x) < ZERO_TOL:
        return 0.0
    return min(max(x, 0.0), 1.0)


def concurrence(rho: np.ndarray, eig_tol: float = 1e-7) -> float:
    """Two-qubit concurrence max{0, L1 - L2 - L3 - L4}.

    L_i are the descending square roots of the eigenvalues of
    rho (sy x sy) rho* (sy x sy).
    """
    rho = np.asarray(rho, dtype=complex)
    system.check_density_matrix(rho, eig_tol=eig_tol)
    rho_tilde = _SYY @ rho.conj() @ _SYY
    evals = np.linalg.eigvals(rho @ rho_tilde)
    lam = np.sqrt(np.clip(evals.real, 0.0, None))
    lam.sort()
    return _clamp01(lam[3] - lam[2] - lam[1] - lam[0])


def is_xstate(rho: np.ndarray, tol: float = 1e-10) -> tuple[bool, float]:
    """Whether the eight off-pattern elements vanish; returns their max magnitude."""
    rho = np.asarray(rho, dtype=complex)
    worst = max(abs(rho[i, j]) for i, j in X_OFF_PATTERN)
    return worst <= tol, float(worst)


def concurrence_xstate(rho: np.ndarray, tol: float = 1e-10) -> float:
    """Closed-form concurrence 2 max{0, |r23| - sqrt(r11 r44), |r14| - sqrt(r22 r33)}.

    Only valid on X-states; non-X input is rejected with the offending
    magnitude reported.
    """
    rho = np.asarray(rho, dtype=complex)
    ok, worst = is_xstate(rho, tol)
    if not ok:
        raise ValueError(f"not an X-state: max off-pattern magnitude {worst:.3e}")
    r11, r22, r33, r44 = (rho[i, i].real for i in range(4))
    a = abs(rho[1, 2]) - math.sqrt(max(r11, 0.0) * max(r44, 0.0))
    b = abs(rho[0, 3]) - math.sqrt(max(r22, 0.0) * max(r33, 0.0))
    return _clamp01(2.0 * max(0.0, a, b))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: np.ndarray, rho_iso: np.ndarray) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho_iso) rho sqrt(rho_iso)))^2."""
    rho = np.asarray(rho, dtype=complex)
    rho_iso = np.asarray(rho_iso, dtype=complex)
    system.check_density_matrix(rho)
    system.check_density_matrix(rho_iso)
    s = _psd_sqrt(rho_iso)
    inner = s @ rho @ s
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return _clamp01(float(np.sqrt(w).sum() ** 2))


def partial_fidelities(rho: np.ndarray, rho_iso: np.ndarray) -> tuple[float, float]:
    """Uhlmann fidelities of the two single-qubit reduced states."""
    f1 = fidelity(system.partial_trace(rho, 1), system.partial_trace(rho_iso, 1))
    f2 = fidelity(system.partial_trace(rho, 2), system.partial_trace(rho_iso, 2))
    return f1, f2


def zero_intervals(times: np.ndarray, conc: np.ndarray,
                   zero_tol: float = ZERO_TOL, min_samples: int = 50) -> list[tuple[float, float]]:
    """Maximal intervals with concurrence below zero_tol lasting >= min_samples."""
    times = np.asarray(times, dtype=float)
    conc = np.asarray(conc, dtype=float)
    if times.shape != conc.shape:
        raise ValueError("times and concurrence must have equal length")
    mask = conc < zero_tol
    out = []
    start = None
    for k, flag in enumerate(mask):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if k - start >= min_samples:
                out.append((float(times[start]), float(times[k - 1])))
            start = None
    if start is not None and len(mask) - start >= min_samples:
        out.append((float(times[start]), float(times[-1])))
    return out


def esd_time(times: np.ndarray, conc: np.ndarray, zero_tol: float = ZERO_TOL,
             min_samples: int = 50) -> float | None:
    """Onset of the first sustained zero-concurrence window, if any."""
    intervals = zero_intervals(times, conc, zero_tol, min_samples)
    return intervals[0][0] if intervals else None


def dark_periods(times: np.ndarray, conc: np.ndarray, zero_tol: float = ZERO_TOL,
                 min_samples: int = 50) -> list[tuple[float, float]]:
    """Sustained zero windows followed by a revival (terminal window excluded)."""
    intervals = zero_intervals(times, conc, zero_tol, min_samples)
    t_last = float(np.asarray(times, dtype=float)[-1])
    return [iv for iv in intervals if iv[1] < t_last]


def trace_distance(rho_a: np.ndarray, rho_b: np.ndarray) -> float:
    diff = np.asarray(rho_a) - np.asarray(rho_b)
    w = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return 0.5 * float(np.abs(w).sum())


def blp_pair(times: np.ndarray, traj_a: np.ndarray, traj_b: np.ndarray) -> float:
    """Positive part of the trace-distance change, summed over the grid.

    Finite-difference version of the information-backflow quantifier for one
    fixed trajectory pair; contractive (CP-divisible) dynamics give zero.
    """
    times = np.asarray(times, dtype=float)
    traj_a = np.asarray(traj_a, dtype=complex)
    traj_b = np.asarray(traj_b, dtype=complex)
    if traj_a.shape != traj_b.shape or traj_a.shape[0] != len(times):
        raise ValueError("trajectories must share one time grid")
    d = np.array([trace_distance(a, b) for a, b in zip(traj_a, traj_b)])
    inc = np.diff(d)
    return float(inc[inc > 0].sum())


@dataclass
class MetricTrace:
    """Per-sample diagnostics with the export column contract."""

    times: np.ndarray
    concurrence: np.ndarray
    fidelity: np.ndarray | None = None
    f1: np.ndarray | None = None
    f2: np.ndarray | None = None
    xstate: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.concurrence = np.asarray(self.concurrence, dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,concurrence,fidelity,F1,F2,is_xstate\n")
        for k, t in enumerate(self.times):
            def cell(arr):
                return "" if arr is None else f"{arr[k]:.17g}"
            x = "" if self.xstate is None else str(int(bool(self.xstate[k])))
            buf.write(f"{t:.17g},{self.concurrence[k]:.17g},"
                      f"{cell(self.fidelity)},{cell(self.f1)},{cell(self.f2)},{x}\n")
        return buf.getvalue()


def metric_trace(traj, ideal=None, xstate_tol: float = 1e-10,
                 with_partial: bool = False) -> MetricTrace:
    """Evaluate the standard diagnostics along a trajectory.

    ``ideal`` is the matching unitary reference trajectory; fidelities are
    omitted without it.
    """
    conc = np.array([concurrence(r) for r in traj.rdos])
    fid = f1 = f2 = None
    if ideal is not None:
        if len(ideal.times) != len(traj.times) or np.max(
                np.abs(ideal.times - traj.times)) > 1e-9:
            raise ValueError("ideal reference must share the trajectory grid")
        fid = np.array([fidelity(r, ri) for r, ri in zip(traj.rdos, ideal.rdos)])
        if with_partial:
            pairs = [partial_fidelities(r, ri) for r, ri in zip(traj.rdos, ideal.rdos)]
            f1 = np.array([p[0] for p in pairs])
            f2 = np.array([p[1] for p in pairs])
    flags = np.array([is_xstate(r, xstate_tol)[0] for r in traj.rdos])
    return MetricTrace(traj.times, conc, fid, f1, f2, flags)
