"""Dense free-pole hierarchy engine for two qubits with private reservoirs.

Auxiliary density operators (ADOs) are indexed by occupation multi-indices
(m, n) over the damped modes of both baths; the (0, 0) entry is the physical
reduced density operator.  The hierarchy couples an ADO to its index
neighbours through the scaled raising/lowering structure

    d/dt rho_{m,n} = -i [H_S(t), rho_{m,n}]
                     - sum_{j,k} (m_{jk} z_{jk} + n_{jk} z*_{jk}) rho_{m,n}
                     - sum_{jk} sqrt((m_{jk}+1) d_{jk}) [sx_j, rho_{m+e}]
                     + sum_{jk} sqrt((n_{jk}+1) d*_{jk}) [sx_j, rho_{n+e}]
                     + sum_{jk} sqrt(m_{jk} d_{jk}) sx_j rho_{m-e}
                     + sum_{jk} sqrt(n_{jk} d*_{jk}) rho_{n-e} sx_j,

with indices outside the truncation bound treated as zero.  The ADO set is
stored as one dense (N_ado, 4, 4) array with precomputed neighbour tables,
so the right-hand side is a fixed sparse stencil evaluated with batched
matrix products.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import system
from .expfit import ModeSet
from .schedule import PulseSchedule, Segment
from .trajectory import DEFAULT_DT, Trajectory, segment_steps


class HeomDivergence(RuntimeError):
    """Propagation produced non-finite values (truncation or step too coarse)."""

    def __init__(self, t_last: float):
        super().__init__(f"hierarchy state diverged; last valid time {t_last:.6g} "
                         "(increase the truncation depth or reduce dt)")
        self.t_last = t_last


@dataclass(frozen=True)
class PerMode:
    """Cap every individual index entry: m_{jk} <= nmax of its bath."""

    nmax1: int
    nmax2: int | None = None

    def bound(self, bath: int) -> int:
        if bath == 2 and self.nmax2 is not None:
            return self.nmax2
        return self.nmax1


@dataclass(frozen=True)
class DepthSum:
    """Cap the total depth sum(m) + sum(n) <= nmax."""

    nmax: int


Truncation = PerMode | DepthSum


@dataclass(frozen=True)
class AdoIndex:
    """Occupation multi-index of one ADO."""

    m: tuple[int, ...]
    n: tuple[int, ...]

    @property
    def depth(self) -> int:
        return sum(self.m) + sum(self.n)


class Hierarchy:
    """Static topology: index enumeration, neighbour tables, coefficients."""

    def __init__(self, modes1: ModeSet, modes2: ModeSet, truncation: Truncation):
        self.modes1 = modes1
        self.modes2 = modes2
        self.truncation = truncation
        k1, k2 = modes1.K, modes2.K
        self.k1, self.k2 = k1, k2
        self.n_slots = 2 * (k1 + k2)
        if (k1 + k2) > 0:
            if isinstance(truncation, PerMode) and min(
                    truncation.bound(1) if k1 else 1,
                    truncation.bound(2) if k2 else 1) == 0:
                raise ValueError("per-mode truncation bound 0 leaves no hierarchy")
            if isinstance(truncation, DepthSum) and truncation.nmax == 0:
                raise ValueError("depth-sum truncation bound 0 leaves no hierarchy")

        # slot layout: m entries (bath1 modes, bath2 modes), then n entries
        slot_bath = [1] * k1 + [2] * k2
        mode_d = np.concatenate([modes1.d, modes2.d]) if k1 + k2 else np.zeros(0, complex)
        mode_z = np.concatenate([modes1.z, modes2.z]) if k1 + k2 else np.zeros(0, complex)
        self.slot_bath = np.array(slot_bath + slot_bath, dtype=int)
        self.slot_is_m = np.array([True] * (k1 + k2) + [False] * (k1 + k2))
        self.slot_z = np.concatenate([mode_z, mode_z.conj()])
        self.slot_d = np.concatenate([mode_d, mode_d.conj()])

        self.indices = self._enumerate()
        self.size = len(self.indices)
        self.lookup = {tuple(ix): i for i, ix in enumerate(self.indices)}
        self.zero_index = self.lookup[tuple([0] * self.n_slots)]
        self.damping = self.indices @ self.slot_z if self.n_slots else np.zeros(self.size, complex)
        self._build_tables()

    def _enumerate(self) -> np.ndarray:
        if self.n_slots == 0:
            return np.zeros((1, 0), dtype=int)
        if isinstance(self.truncation, PerMode):
            bounds = [self.truncation.bound(b) for b in self.slot_bath]
            ranges = [range(b + 1) for b in bounds]
            idx = np.array(list(itertools.product(*ranges)), dtype=int)
        else:
            nmax = self.truncation.nmax
            out: list[tuple[int, ...]] = []

            def rec(prefix: list[int], remaining: int, budget: int):
                if remaining == 0:
                    out.append(tuple(prefix))
                    return
                for v in range(budget + 1):
                    rec(prefix + [v], remaining - 1, budget - v)

            rec([], self.n_slots, nmax)
            idx = np.array(sorted(out), dtype=int)
        return idx

    def _build_tables(self):
        # per slot: rows with a valid up/down neighbour, the neighbour row,
        # and the scaled coupling coefficients of the corresponding terms
        self.up_src: list[np.ndarray] = []
        self.up_dst: list[np.ndarray] = []
        self.up_coef: list[np.ndarray] = []
        self.dn_src: list[np.ndarray] = []
        self.dn_dst: list[np.ndarray] = []
        self.dn_coef: list[np.ndarray] = []
        idx = self.indices
        for ell in range(self.n_slots):
            d_eff = self.slot_d[ell]
            sign_up = -1.0 if self.slot_is_m[ell] else 1.0
            up_src, up_dst, up_coef = [], [], []
            dn_src, dn_dst, dn_coef = [], [], []
            for row, ix in enumerate(idx):
                occ = ix[ell]
                up = list(ix)
                up[ell] += 1
                j = self.lookup.get(tuple(up))
                if j is not None:
                    up_src.append(row)
                    up_dst.append(j)
                    up_coef.append(sign_up * np.sqrt((occ + 1) * d_eff))
                if occ > 0:
                    dn = list(ix)
                    dn[ell] -= 1
                    j = self.lookup.get(tuple(dn))
                    if j is not None:
                        dn_src.append(row)
                        dn_dst.append(j)
                        dn_coef.append(np.sqrt(occ * d_eff))
            self.up_src.append(np.array(up_src, dtype=int))
            self.up_dst.append(np.array(up_dst, dtype=int))
            self.up_coef.append(np.array(up_coef, dtype=complex))
            self.dn_src.append(np.array(dn_src, dtype=int))
            self.dn_dst.append(np.array(dn_dst, dtype=int))
            self.dn_coef.append(np.array(dn_coef, dtype=complex))

    def ado_index(self, i: int) -> AdoIndex:
        half = self.k1 + self.k2
        row = self.indices[i]
        return AdoIndex(tuple(row[:half]), tuple(row[half:]))

    def depths(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def bath_superoperator(self) -> sparse.csr_matrix:
        """Static bath stencil as one sparse map on the stacked row-major vecs.

        Everything except the system commutator: damping diagonal plus the
        raising/lowering neighbour couplings.  Cached; the hot loop then does
        one sparse matvec per evaluation.
        """
        if getattr(self, "_bath_superop", None) is not None:
            return self._bath_superop
        n = self.size
        eye16 = sparse.identity(16, format="csr", dtype=complex)
        total = sparse.kron(
            sparse.diags(-self.damping.astype(complex), format="csr"), eye16, format="csr")
        eye4 = np.eye(4)
        for ell in range(self.n_slots):
            sx = _SX[self.slot_bath[ell]]
            comm = np.kron(sx, eye4) - np.kron(eye4, sx.T)
            left = np.kron(sx, eye4)
            right = np.kron(eye4, sx.T)
            if len(hu := self.up_src[ell]):
                adj = sparse.coo_matrix((self.up_coef[ell], (hu, self.up_dst[ell])),
                                        shape=(n, n)).tocsr()
                total = total + sparse.kron(adj, sparse.csr_matrix(comm), format="csr")
            if len(hd := self.dn_src[ell]):
                op = left if self.slot_is_m[ell] else right
                adj = sparse.coo_matrix((self.dn_coef[ell], (hd, self.dn_dst[ell])),
                                        shape=(n, n)).tocsr()
                total = total + sparse.kron(adj, sparse.csr_matrix(op), format="csr")
        self._bath_superop = total.tocsr()
        return self._bath_superop


@dataclass
class HierarchyState:
    """Full set of ADOs at one instant."""

    time: float
    ados: np.ndarray  # (size, 4, 4) complex
    hierarchy: Hierarchy

    def copy(self) -> "HierarchyState":
        return HierarchyState(self.time, self.ados.copy(), self.hierarchy)


def init_hierarchy(rho0: np.ndarray, modes1: ModeSet, modes2: ModeSet,
                   truncation: Truncation) -> HierarchyState:
    """Factorized initial condition: the physical state, all other ADOs zero."""
    system.check_density_matrix(rho0)
    hier = Hierarchy(modes1, modes2, truncation)
    ados = np.zeros((hier.size, 4, 4), dtype=complex)
    ados[hier.zero_index] = np.asarray(rho0, dtype=complex)
    return HierarchyState(0.0, ados, hier)


def rdo(state: HierarchyState) -> np.ndarray:
    """The physical reduced density operator (zero multi-index entry)."""
    return state.ados[state.hierarchy.zero_index]


def reset_environment(state: HierarchyState) -> HierarchyState:
    """Project onto a factorized total state: zero every ADO except the RDO."""
    out = state.copy()
    keep = rdo(state).copy()
    out.ados[:] = 0.0
    out.ados[state.hierarchy.zero_index] = keep
    return out


_SX = {1: system.SX1, 2: system.SX2}


def _rhs_stencil(hier: Hierarchy, ados: np.ndarray, h_sys: np.ndarray) -> np.ndarray:
    """Reference evaluation via the per-slot neighbour tables."""
    out = -1j * (h_sys @ ados - ados @ h_sys)
    if hier.n_slots == 0:
        return out
    out -= hier.damping[:, None, None] * ados
    for ell in range(hier.n_slots):
        sx = _SX[hier.slot_bath[ell]]
        if len(hier.up_src[ell]):
            g = ados[hier.up_dst[ell]]
            comm = sx @ g - g @ sx
            out[hier.up_src[ell]] += hier.up_coef[ell][:, None, None] * comm
        if len(hier.dn_src[ell]):
            g = ados[hier.dn_dst[ell]]
            term = sx @ g if hier.slot_is_m[ell] else g @ sx
            out[hier.dn_src[ell]] += hier.dn_coef[ell][:, None, None] * term
    return out


def _rhs_raw(hier: Hierarchy, ados: np.ndarray, h_sys: np.ndarray) -> np.ndarray:
    out = -1j * (h_sys @ ados - ados @ h_sys)
    if hier.n_slots == 0:
        return out
    bath = hier.bath_superoperator() @ ados.reshape(-1)
    out += bath.reshape(out.shape)
    return out


def rhs(state: HierarchyState, t: float, schedule: PulseSchedule,
        omega_q: float = 1.0) -> np.ndarray:
    """Hierarchy time derivative at time t (same shape as state.ados)."""
    seg = schedule.segment_at(t)
    return _rhs_raw(state.hierarchy, state.ados, seg.hamiltonian(t, omega_q))


@dataclass
class HeomResult:
    trajectory: Trajectory
    final_state: HierarchyState
    #: optional full hierarchy snapshots (time -> ados copy)
    snapshots: list[HierarchyState] = field(default_factory=list)


def _segment_pieces(schedule: PulseSchedule, t0: float, t_end: float):
    edges = schedule.breakpoints()
    if t_end > edges[-1] + 1e-9:
        raise ValueError(f"schedule ends at {edges[-1]:.6g} but t_end={t_end:.6g}; "
                         "extend it with an idle segment")
    for k, seg in enumerate(schedule.segments):
        a, b = max(edges[k], t0), min(edges[k + 1], t_end)
        if b - a > 1e-12:
            yield seg, a, b


def propagate(state: HierarchyState, schedule: PulseSchedule, t_end: float,
              dt: float = DEFAULT_DT, stride: int = 1, omega_q: float = 1.0,
              snapshot_times: tuple[float, ...] = (),
              check_every: int = 50) -> HeomResult:
    """Fixed-step RK4 propagation, steps aligned to schedule breakpoints.

    Samples the RDO every ``stride`` steps (plus the first and last point).
    Non-finite values abort with the last valid time.  ``snapshot_times``
    collects full hierarchy copies at the nearest step boundaries.
    """
    hier = state.hierarchy
    ados = state.ados.copy()
    t = state.time
    times = [t]
    rdos = [ados[hier.zero_index].copy()]
    snapshots: list[HierarchyState] = []
    snap_left = sorted(snapshot_times)
    step_count = 0
    for seg, a, b in _segment_pieces(schedule, t, t_end):
        n, h = segment_steps(b - a, dt)
        static = seg.hamiltonian(0.0, omega_q) if (seg.omega1 == 0 and seg.omega2 == 0) else None
        for i in range(n):
            tt = a + i * h
            if static is not None:
                h0 = h1 = h2 = static
            else:
                h0 = seg.hamiltonian(tt, omega_q)
                h1 = seg.hamiltonian(tt + 0.5 * h, omega_q)
                h2 = seg.hamiltonian(tt + h, omega_q)
            k1 = _rhs_raw(hier, ados, h0)
            k2 = _rhs_raw(hier, ados + 0.5 * h * k1, h1)
            k3 = _rhs_raw(hier, ados + 0.5 * h * k2, h1)
            k4 = _rhs_raw(hier, ados + h * k3, h2)
            ados = ados + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = tt + h
            step_count += 1
            if step_count % check_every == 0 and not np.all(np.isfinite(ados.view(float))):
                raise HeomDivergence(times[-1])
            if step_count % stride == 0:
                times.append(t)
                rdos.append(ados[hier.zero_index].copy())
            while snap_left and t >= snap_left[0] - 1e-12:
                snap_left.pop(0)
                snapshots.append(HierarchyState(t, ados.copy(), hier))
    if not np.all(np.isfinite(ados.view(float))):
        raise HeomDivergence(times[-1])
    if times[-1] != t:
        times.append(t)
        rdos.append(ados[hier.zero_index].copy())
    traj = Trajectory(np.array(times), np.array(rdos), meta={"kind": "heom-dense"})
    return HeomResult(traj, HierarchyState(t, ados, hier), snapshots)
