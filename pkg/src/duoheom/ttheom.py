"""Tensor-train form of the free-pole hierarchy.

The extended state (all ADOs stacked over system ket/bra and bath occupation
indices) is factorized into a chain of third-order cores in the fixed site
order

    q1 ket | m_11 n_11 ... m_1K1 n_1K1 | q1 bra | q2 ket | bath 2 ... | q2 bra

and the generator into five operator chains: one static part (system terms,
damping, bath couplings; interior operator rank 6) and four drive parts
(rank <= 2) whose time dependence enters only through the scalar prefactors
Omega_j cos(wex_j t + phi_j) and Omega_j sin(...).

Time integration is a symmetric two-site projector-splitting sweep: merged
neighbour cores evolve forward under the projected generator (Krylov
exponential), are split by SVD with the rank capped at R_max, and the
single-site remainder evolves backward, left-to-right then right-to-left.
Optional extras, both off by default: a fourth-order triple-jump composition
of the symmetric step (drive-free segments only), and an exact Strang
sub-flow for the diagonal damping generator that removes the stiffness of
fast modes from the Krylov solves.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import system
from .expfit import ModeSet
from .heom import Hierarchy, HierarchyState, PerMode
from .schedule import PulseSchedule, Segment
from .trajectory import DEFAULT_DT, Trajectory, segment_steps


class TruncationWarning(UserWarning):
    """Discarded singular-value weight exceeded the telemetry threshold."""


PART_NAMES = ("static", "d1c", "d1s", "d2c", "d2s")


def site_dims(k1: int, k2: int, nb1: int, nb2: int) -> list[int]:
    """Physical dimension per site; nb = local bath dimension N_max + 1."""
    return [2] + [nb1] * (2 * k1) + [2, 2] + [nb2] * (2 * k2) + [2]


@dataclass
class TTState:
    """Tensor train with cores of shape (R_{k-1}, N_k, R_k), boundary ranks 1."""

    cores: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(self.cores[:-1], self.cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("neighbouring core ranks do not match")

    @property
    def n_sites(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> list[int]:
        return [c.shape[1] for c in self.cores]

    @property
    def ranks(self) -> list[int]:
        return [1] + [c.shape[2] for c in self.cores]

    def copy(self) -> "TTState":
        return TTState([c.copy() for c in self.cores], dict(self.meta))

    def to_dense_vector(self, cap: float = 1e7) -> np.ndarray:
        total = float(np.prod(self.dims))
        if total > cap:
            raise ValueError(f"extended dimension {total:.3g} exceeds cap {cap:.3g}")
        out = np.ones((1, 1), dtype=complex)
        for c in self.cores:
            out = np.tensordot(out, c, axes=([out.ndim - 1], [0]))
        return out.reshape(-1)


@dataclass
class TTOperator:
    """Five operator chains sharing the site layout of the state."""

    parts: dict[str, list[np.ndarray]]
    k1: int
    k2: int
    nmax1: int
    nmax2: int

    @property
    def n_sites(self) -> int:
        return len(self.parts["static"])

    def part(self, name: str) -> list[np.ndarray]:
        return self.parts[name]


def _annihilator(nb: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, nb, dtype=float)), 1).astype(complex)


def _bath_core(z: complex, d: complex, nb: int, conj: bool,
               include_damping: bool) -> np.ndarray:
    """Rank-6 bath core; ``conj`` selects the n-type (bra occupation) variant.

    Matrix layout over (left rank u, right rank v), identity on the diagonal:
    (1,0) carries the damping -z m, (1,2) the lowering coupling, (3,0) the
    raising/commutator combination.
    """
    a = _annihilator(nb)
    num = a.conj().T @ a
    eye = np.eye(nb, dtype=complex)
    zz = z.conjugate() if conj else z
    dd = d.conjugate() if conj else d
    sq = np.sqrt(complex(dd))
    core = np.zeros((6, nb, nb, 6), dtype=complex)
    for r in range(6):
        core[r, :, :, r] = eye
    if include_damping:
        core[1, :, :, 0] = -zz * num
    if conj:
        core[1, :, :, 2] = sq * (a.conj().T - a)
        core[3, :, :, 0] = sq * a
    else:
        core[1, :, :, 2] = sq * a
        core[3, :, :, 0] = sq * (a.conj().T - a)
    return core


def _identity_op_core(nb: int, rank: int) -> np.ndarray:
    core = np.zeros((rank, nb, nb, rank), dtype=complex)
    eye = np.eye(nb, dtype=complex)
    for r in range(rank):
        core[r, :, :, r] = eye
    return core


def build_tt_operator(modes1: ModeSet, modes2: ModeSet, omega1: float = 1.0,
                      omega2: float = 1.0, j: float = 0.0, nmax1: int = 3,
                      nmax2: int | None = None,
                      include_damping: bool = True) -> TTOperator:
    """Explicit operator cores of the hierarchy generator.

    The static chain carries the Larmor terms, the exchange coupling J, the
    occupation damping and the bath raising/lowering couplings; the four
    drive chains carry -i/2 [sx_j, .] and -i/2 [sy_j, .] to be scaled by
    Omega_j cos / Omega_j sin at evaluation time.
    """
    k1, k2 = modes1.K, modes2.K
    nb1 = nmax1 + 1
    nb2 = (nmax2 if nmax2 is not None else nmax1) + 1
    n_sites = 2 * (k1 + k2) + 4
    sx, sy, sz = system.SX, system.SY, system.SZ
    sp, sm = system.SP, system.SM
    eye = np.eye(2, dtype=complex)
    zero = np.zeros((2, 2), dtype=complex)

    def row_core(blocks):
        return np.stack(blocks, axis=-1)[None, :, :, :]

    def col_core(blocks):
        return np.stack(blocks, axis=0)[:, :, :, None]

    def grid_core(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=0)

    static: list[np.ndarray] = []
    static.append(row_core([-0.5j * omega1 * sz, eye, zero, sx,
                            -1j * j * sp, -1j * j * sm]))
    for k in range(k1):
        static.append(_bath_core(modes1.z[k], modes1.d[k], nb1, False, include_damping))
        static.append(_bath_core(modes1.z[k], modes1.d[k], nb1, True, include_damping))
    static.append(grid_core([
        [eye, zero, zero, zero, zero, zero],
        [0.5j * omega1 * sz.T, eye, zero, zero, sp.T, sm.T],
        [sx.T, zero, zero, zero, zero, zero],
        [zero, zero, zero, zero, zero, zero],
        [zero, zero, eye, zero, zero, zero],
        [zero, zero, zero, eye, zero, zero],
    ]))
    static.append(grid_core([
        [eye, zero, zero, zero, zero, zero],
        [-0.5j * omega2 * sz, eye, zero, sx, zero, zero],
        [sm, zero, zero, zero, zero, zero],
        [sp, zero, zero, zero, zero, zero],
        [zero, zero, zero, zero, eye, zero],
        [zero, zero, zero, zero, zero, eye],
    ]))
    for k in range(k2):
        static.append(_bath_core(modes2.z[k], modes2.d[k], nb2, False, include_damping))
        static.append(_bath_core(modes2.z[k], modes2.d[k], nb2, True, include_damping))
    static.append(col_core([eye, 0.5j * omega2 * sz.T, sx.T, zero,
                            1j * j * sm.T, 1j * j * sp.T]))

    def drive_part(qubit: int, pauli: np.ndarray) -> list[np.ndarray]:
        cores: list[np.ndarray] = []
        ket = row_core([-0.5j * pauli, eye])
        bra = col_core([eye, 0.5j * pauli.T])
        for site in range(n_sites):
            role, bath_dim = _site_role(site, k1, k2, nb1, nb2)
            if qubit == 1 and role == "q1ket":
                cores.append(ket)
            elif qubit == 1 and role == "q1bra":
                cores.append(bra)
            elif qubit == 2 and role == "q2ket":
                cores.append(ket)
            elif qubit == 2 and role == "q2bra":
                cores.append(bra)
            else:
                # identity passthrough; rank 2 while between ket and bra
                inside = (qubit == 1 and role == "bath1") or (qubit == 2 and role == "bath2")
                dim = bath_dim if role.startswith("bath") else 2
                cores.append(_identity_op_core(dim, 2 if inside else 1))
        return cores

    parts = {
        "static": static,
        "d1c": drive_part(1, sx),
        "d1s": drive_part(1, sy),
        "d2c": drive_part(2, sx),
        "d2s": drive_part(2, sy),
    }
    return TTOperator(parts, k1, k2, nb1 - 1, nb2 - 1)


def _site_role(site: int, k1: int, k2: int, nb1: int, nb2: int) -> tuple[str, int]:
    if site == 0:
        return "q1ket", 2
    if 1 <= site <= 2 * k1:
        return "bath1", nb1
    if site == 2 * k1 + 1:
        return "q1bra", 2
    if site == 2 * k1 + 2:
        return "q2ket", 2
    if site == 2 * (k1 + k2) + 3:
        return "q2bra", 2
    return "bath2", nb2


def part_prefactors(seg: Segment, t: float) -> np.ndarray:
    """Scalars multiplying (static, d1c, d1s, d2c, d2s) at time t."""
    a1 = seg.wex1 * t + seg.phi1
    a2 = seg.wex2 * t + seg.phi2
    return np.array([1.0,
                     seg.omega1 * math.cos(a1), seg.omega1 * math.sin(a1),
                     seg.omega2 * math.cos(a2), seg.omega2 * math.sin(a2)])


# ---------------------------------------------------------------------------
# dense bridges

def tt_from_dense(vec: np.ndarray, dims: list[int], r_max: int = 10**9,
                  eps: float = 0.0) -> TTState:
    """TT factorization of a dense extended vector by sequential SVD."""
    total = int(np.prod(dims))
    if vec.size != total:
        raise ValueError("vector size does not match dims")
    cores = []
    rest = vec.reshape(1, total).astype(complex)
    r_prev = 1
    for d in dims[:-1]:
        mat = rest.reshape(r_prev * d, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = len(s) if eps <= 0 else max(1, int(np.sum(s > eps * s[0])))
        keep = max(1, min(keep, r_max))
        cores.append(u[:, :keep].reshape(r_prev, d, keep))
        rest = s[:keep, None] * vh[:keep]
        r_prev = keep
    cores.append(rest.reshape(r_prev, dims[-1], 1))
    return TTState(cores)


def init_tt_state(rho0: np.ndarray, modes1: ModeSet, modes2: ModeSet,
                  nmax1: int, nmax2: int | None = None) -> TTState:
    """Factorized initial condition: system state, all bath sites in |0>."""
    system.check_density_matrix(rho0)
    k1, k2 = modes1.K, modes2.K
    nb1 = nmax1 + 1
    nb2 = (nmax2 if nmax2 is not None else nmax1) + 1
    t4 = np.asarray(rho0, dtype=complex).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3)
    sys_tt = tt_from_dense(t4.reshape(-1), [2, 2, 2, 2], eps=1e-14)
    c_i, c_k, c_j, c_l = sys_tt.cores
    cores = [c_i]
    r = c_i.shape[2]
    for _ in range(2 * k1):
        b = np.zeros((r, nb1, r), dtype=complex)
        b[:, 0, :] = np.eye(r)
        cores.append(b)
    cores.extend([c_k, c_j])
    r = c_j.shape[2]
    for _ in range(2 * k2):
        b = np.zeros((r, nb2, r), dtype=complex)
        b[:, 0, :] = np.eye(r)
        cores.append(b)
    cores.append(c_l)
    return TTState(cores, meta={"k1": k1, "k2": k2, "nmax1": nb1 - 1, "nmax2": nb2 - 1})


def rdo_from_tt(state: TTState) -> np.ndarray:
    """Physical 4x4 state: all bath sites contracted at occupation 0."""
    k1 = state.meta.get("k1")
    if k1 is None:
        raise ValueError("state carries no site-layout metadata")
    k2 = state.meta["k2"]
    pieces = []
    for site, core in enumerate(state.cores):
        role, _ = _site_role(site, k1, k2, 0, 0)
        pieces.append(core[:, 0, :] if role.startswith("bath") else core)
    out = np.ones((1, 1), dtype=complex)
    for p in pieces:
        out = np.tensordot(out, p, axes=([out.ndim - 1], [0]))
    t4 = out.reshape(2, 2, 2, 2)  # (i, k, j, l)
    return t4.transpose(0, 2, 1, 3).reshape(4, 4)


def tt_to_dense(state: TTState, modes1: ModeSet, modes2: ModeSet,
                cap: float = 1e7) -> HierarchyState:
    """Exact contraction into a dense per-mode hierarchy state."""
    k1, k2 = modes1.K, modes2.K
    dims = state.dims
    nb1 = dims[1] if k1 else 1
    nb2 = dims[2 * k1 + 3] if k2 else 1
    full = state.to_dense_vector(cap).reshape(dims)
    # move axes into (m-slots..., n-slots..., i, j, k, l)
    m_axes = [1 + 2 * k for k in range(k1)] + [2 * k1 + 3 + 2 * k for k in range(k2)]
    n_axes = [2 + 2 * k for k in range(k1)] + [2 * k1 + 4 + 2 * k for k in range(k2)]
    i_ax, k_ax, j_ax, l_ax = 0, 2 * k1 + 1, 2 * k1 + 2, len(dims) - 1
    perm = m_axes + n_axes + [i_ax, j_ax, k_ax, l_ax]
    arr = np.transpose(full, perm)
    n_slots = 2 * (k1 + k2)
    arr = arr.reshape(arr.shape[:n_slots] + (4, 4)) if n_slots else arr.reshape(4, 4)
    hier = Hierarchy(modes1, modes2, PerMode(nb1 - 1, nb2 - 1))
    ados = np.zeros((hier.size, 4, 4), dtype=complex)
    for row, ix in enumerate(hier.indices):
        ados[row] = arr[tuple(ix)] if n_slots else arr
    return HierarchyState(0.0, ados, hier)


def apply_tt_operator(op: TTOperator, state: TTState,
                      prefactors=None) -> TTState:
    """Exact application sum_p pref_p (L_p W); ranks multiply then add."""
    if prefactors is None:
        prefactors = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    terms = []
    for pref, name in zip(prefactors, PART_NAMES):
        if pref == 0.0:
            continue
        cores = []
        for d, c in zip(op.part(name), state.cores):
            nc = np.einsum("aijb,rjs->aribs", d, c)
            sh = nc.shape
            nc = nc.reshape(sh[0] * sh[1], sh[2], sh[3] * sh[4])
            cores.append(nc)
        cores[0] = cores[0] * pref
        terms.append(TTState(cores, dict(state.meta)))
    if not terms:
        raise ValueError("all prefactors vanish")
    out = terms[0]
    for extra in terms[1:]:
        out = _tt_add(out, extra)
    return out


def _tt_add(a: TTState, b: TTState) -> TTState:
    cores = []
    n = a.n_sites
    for k, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        ra0, d, ra1 = ca.shape
        rb0, _, rb1 = cb.shape
        if k == 0:
            c = np.concatenate([ca, cb], axis=2)
        elif k == n - 1:
            c = np.concatenate([ca, cb], axis=0)
        else:
            c = np.zeros((ra0 + rb0, d, ra1 + rb1), dtype=complex)
            c[:ra0, :, :ra1] = ca
            c[ra0:, :, ra1:] = cb
        cores.append(c)
    return TTState(cores, dict(a.meta))


# ---------------------------------------------------------------------------
# projector-splitting integration

def _right_canonicalize(cores: list[np.ndarray]) -> None:
    """LQ sweep: every core except the first becomes right-orthogonal."""
    for i in range(len(cores) - 1, 0, -1):
        r0, d, r1 = cores[i].shape
        mat = cores[i].reshape(r0, d * r1)
        q, r = np.linalg.qr(mat.conj().T)
        keep = q.shape[1]
        cores[i] = q.conj().T.reshape(keep, d, r1)
        cores[i - 1] = np.tensordot(cores[i - 1], r.conj().T, axes=([2], [0]))


def _update_left_env(env: np.ndarray, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    t = np.tensordot(env, c, axes=([0], [0]))          # (a, lbar, p, r)
    t = np.tensordot(d, t, axes=([0, 2], [0, 2]))      # (po, b, lbar, r)
    t = np.tensordot(c.conj(), t, axes=([0, 1], [2, 0]))  # (rbar, b, r)
    return t.transpose(2, 1, 0)                        # (r, b, rbar)


def _update_right_env(env: np.ndarray, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    t = np.tensordot(c, env, axes=([2], [0]))          # (l, p, b, rbar)
    t = np.tensordot(d, t, axes=([2, 3], [1, 2]))      # (a, po, l, rbar)
    t = np.tensordot(t, c.conj(), axes=([1, 3], [1, 2]))  # (a, l, lbar)
    return t.transpose(1, 0, 2)                        # (l, a, lbar)


def _matvec_one(env_l, d, env_r, x):
    # three GEMMs; every reshape below is a view on contiguous data
    l, p, r = x.shape
    la, a, lp = env_l.shape
    _, po, pi, b = d.shape
    rr, _, rp = env_r.shape
    t = x.reshape(l * p, r) @ env_r.reshape(rr, b * rp)
    t = np.matmul(d.reshape(a * po, pi * b), t.reshape(l, p * b, rp))
    t = env_l.reshape(la * a, lp).T @ t.reshape(l * a, po * rp)
    return t.reshape(lp, po, rp)


def _matvec_two(env_l, d1, d2, env_r, x):
    # four GEMMs, view-only reshapes
    l, p1, p2, r = x.shape
    la, a1, lp = env_l.shape
    _, po1, pi1, amid = d1.shape
    a2, po2, pi2, b = d2.shape
    rr, _, rp = env_r.shape
    t = x.reshape(l * p1 * p2, r) @ env_r.reshape(rr, b * rp)
    t = np.matmul(d2.reshape(a2 * po2, pi2 * b), t.reshape(l * p1, p2 * b, rp))
    t = t.reshape(l, p1, a2, po2, rp)
    t = np.matmul(d1.reshape(a1 * po1, pi1 * amid), t.reshape(l, p1 * a2, po2 * rp))
    t = env_l.reshape(la * a1, lp).T @ t.reshape(l * a1, po1 * po2 * rp)
    return t.reshape(lp, po1, po2, rp)


def _expm_krylov(matvec, v0: np.ndarray, dt: complex, m_max: int = 30,
                 tol: float = 1e-11, depth: int = 0) -> np.ndarray:
    """exp(dt*A) v0 via an Arnoldi subspace, halving dt when it cannot converge."""
    from scipy.linalg import expm as dense_expm

    beta = np.linalg.norm(v0)
    if beta == 0.0:
        return v0
    n = v0.size
    m_max = min(m_max, n)
    basis = np.empty((m_max + 1, n), dtype=complex)
    basis_c = np.empty((m_max + 1, n), dtype=complex)
    hess = np.zeros((m_max + 1, m_max), dtype=complex)
    basis[0] = v0 / beta
    basis_c[0] = basis[0].conj()
    y = np.array([beta], dtype=complex)
    m_used = 0
    converged = False
    for j in range(m_max):
        w = matvec(basis[j])
        hcol = basis_c[: j + 1] @ w
        w = w - hcol @ basis[: j + 1]
        corr = basis_c[: j + 1] @ w  # re-orthogonalization pass
        hcol = hcol + corr
        w = w - corr @ basis[: j + 1]
        hess[: j + 1, j] = hcol
        hnorm = np.linalg.norm(w)
        hess[j + 1, j] = hnorm
        m_used = j + 1
        if hnorm < 1e-14 * max(1.0, float(np.abs(hcol).max())):
            y = beta * dense_expm(dt * hess[:m_used, :m_used])[:, 0]
            converged = True
            break
        basis[j + 1] = w / hnorm
        basis_c[j + 1] = basis[j + 1].conj()
        # test the a-posteriori estimate every few iterations (expm is cheap
        # against the matvecs only once the basis has some size)
        if j >= 2 and (j % 3 == 2 or j == m_max - 1):
            y = beta * dense_expm(dt * hess[:m_used, :m_used])[:, 0]
            err = abs(dt) * hnorm * abs(y[-1])
            if err <= tol * max(beta, 1e-300):
                converged = True
                break
    if not converged:
        y = beta * dense_expm(dt * hess[:m_used, :m_used])[:, 0]
        err = abs(dt) * abs(hess[m_used, m_used - 1]) * abs(y[-1])
        if err > tol * max(beta, 1e-300) and depth < 12:
            half = _expm_krylov(matvec, v0, dt / 2.0, m_max, tol, depth + 1)
            return _expm_krylov(matvec, half, dt / 2.0, m_max, tol, depth + 1)
    return y @ basis[:m_used]


def _split_two_site(theta: np.ndarray, r_max: int, svd_eps: float,
                    to_right: bool) -> tuple[np.ndarray, np.ndarray, float]:
    """SVD split of a merged (l, p1, p2, r) block; returns discarded weight."""
    l, p1, p2, r = theta.shape
    mat = theta.reshape(l * p1, p2 * r)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    total = float(np.sum(s**2))
    keep = len(s)
    if total > 0.0 and svd_eps > 0.0:
        tail = np.cumsum(s[::-1] ** 2)[::-1]
        ok = tail <= (svd_eps**2) * total
        # ok[k] means dropping s[k:] is acceptable
        candidates = np.nonzero(ok)[0]
        keep = int(candidates[0]) if len(candidates) else len(s)
        keep = max(keep, 1)
    keep = max(1, min(keep, r_max))
    discarded = float(np.sum(s[keep:] ** 2) / total) if total > 0 else 0.0
    u = u[:, :keep]
    s = s[:keep]
    vh = vh[:keep]
    if to_right:
        left = u.reshape(l, p1, keep)
        right = (s[:, None] * vh).reshape(keep, p2, r)
    else:
        left = (u * s).reshape(l, p1, keep)
        right = vh.reshape(keep, p2, r)
    return left, right, discarded


class _Sweeper:
    """One symmetric two-site sweep pass over the chain."""

    def __init__(self, state: TTState, op: TTOperator, prefs: np.ndarray,
                 r_max: int, svd_eps: float, krylov_tol: float):
        self.cores = state.cores
        self.op = op
        self.active = [name for name, p in zip(PART_NAMES, prefs) if p != 0.0]
        self.prefs = {name: p for name, p in zip(PART_NAMES, prefs) if p != 0.0}
        self.r_max = r_max
        self.svd_eps = svd_eps
        self.krylov_tol = krylov_tol
        self.max_discarded = 0.0
        self.rank_capped = False
        n = len(self.cores)
        self.left: dict[str, list] = {m: [None] * (n + 1) for m in self.active}
        self.right: dict[str, list] = {m: [None] * (n + 1) for m in self.active}
        for m in self.active:
            self.left[m][0] = np.ones((1, 1, 1), dtype=complex)
            self.right[m][n] = np.ones((1, 1, 1), dtype=complex)
        for i in range(n - 1, 0, -1):
            for m in self.active:
                self.right[m][i] = _update_right_env(
                    self.right[m][i + 1], self.cores[i], self.op.part(m)[i])

    def _one_site_matvec(self, i):
        envs = [(self.left[m][i], self.op.part(m)[i], self.right[m][i + 1],
                 self.prefs[m]) for m in self.active]

        def mv(vflat):
            x = vflat.reshape(self.cores[i].shape)
            acc = None
            for el, d, er, p in envs:
                t = p * _matvec_one(el, d, er, x)
                acc = t if acc is None else acc + t
            return acc.reshape(-1)

        return mv

    def _two_site_matvec(self, i, shape):
        envs = [(self.left[m][i], self.op.part(m)[i], self.op.part(m)[i + 1],
                 self.right[m][i + 2], self.prefs[m]) for m in self.active]

        def mv(vflat):
            x = vflat.reshape(shape)
            acc = None
            for el, d1, d2, er, p in envs:
                t = p * _matvec_two(el, d1, d2, er, x)
                acc = t if acc is None else acc + t
            return acc.reshape(-1)

        return mv

    def _evolve_two(self, i, dt):
        theta = np.tensordot(self.cores[i], self.cores[i + 1], axes=([2], [0]))
        mv = self._two_site_matvec(i, theta.shape)
        theta = _expm_krylov(mv, theta.reshape(-1), dt,
                             tol=self.krylov_tol).reshape(theta.shape)
        return theta

    def _record(self, discarded, keep_possible):
        self.max_discarded = max(self.max_discarded, discarded)
        if keep_possible:
            self.rank_capped = True

    def sweep(self, dt: float) -> None:
        """Symmetric second-order pass: L->R with dt/2, R->L with dt/2."""
        cores, op = self.cores, self.op
        n = len(cores)
        for i in range(n - 2):
            theta = self._evolve_two(i, 0.5 * dt)
            full_rank = min(theta.shape[0] * theta.shape[1],
                            theta.shape[2] * theta.shape[3])
            left, right, disc = _split_two_site(theta, self.r_max, self.svd_eps, True)
            self._record(disc, full_rank > self.r_max)
            cores[i], cores[i + 1] = left, right
            for m in self.active:
                self.left[m][i + 1] = _update_left_env(
                    self.left[m][i], cores[i], op.part(m)[i])
            mv = self._one_site_matvec(i + 1)
            cores[i + 1] = _expm_krylov(mv, cores[i + 1].reshape(-1), -0.5 * dt,
                                        tol=self.krylov_tol).reshape(cores[i + 1].shape)
        # last bond: one full step, then turn around
        i = n - 2
        theta = self._evolve_two(i, dt)
        full_rank = min(theta.shape[0] * theta.shape[1], theta.shape[2] * theta.shape[3])
        left, right, disc = _split_two_site(theta, self.r_max, self.svd_eps, False)
        self._record(disc, full_rank > self.r_max)
        cores[i], cores[i + 1] = left, right
        for m in self.active:
            self.right[m][i + 1] = _update_right_env(
                self.right[m][i + 2], cores[i + 1], op.part(m)[i + 1])
        for i in range(n - 3, -1, -1):
            mv = self._one_site_matvec(i + 1)
            cores[i + 1] = _expm_krylov(mv, cores[i + 1].reshape(-1), -0.5 * dt,
                                        tol=self.krylov_tol).reshape(cores[i + 1].shape)
            theta = self._evolve_two(i, 0.5 * dt)
            full_rank = min(theta.shape[0] * theta.shape[1],
                            theta.shape[2] * theta.shape[3])
            left, right, disc = _split_two_site(theta, self.r_max, self.svd_eps, False)
            self._record(disc, full_rank > self.r_max)
            cores[i], cores[i + 1] = left, right
            for m in self.active:
                self.right[m][i + 1] = _update_right_env(
                    self.right[m][i + 2], cores[i + 1], op.part(m)[i + 1])


def _apply_damping_flow(state: TTState, modes1: ModeSet, modes2: ModeSet,
                        tau: float) -> None:
    """Exact flow of the diagonal damping generator: scale bath cores."""
    k1 = modes1.K
    for site, core in enumerate(state.cores):
        role, _ = _site_role(site, k1, modes2.K, 0, 0)
        if role == "bath1":
            k = (site - 1) // 2
            z = modes1.z[k] if (site - 1) % 2 == 0 else np.conj(modes1.z[k])
        elif role == "bath2":
            off = site - (2 * k1 + 3)
            k = off // 2
            z = modes2.z[k] if off % 2 == 0 else np.conj(modes2.z[k])
        else:
            continue
        occ = np.arange(core.shape[1])
        core *= np.exp(-z * occ * tau)[None, :, None]


_TRIPLE_JUMP = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))


@dataclass
class TtResult:
    trajectory: Trajectory
    final_state: TTState
    telemetry: dict


def tt_propagate(state: TTState, op: TTOperator, schedule: PulseSchedule,
                 t_end: float, dt: float = DEFAULT_DT, r_max: int = 60,
                 stride: int = 1, svd_eps: float = 1e-12, order: int = 2,
                 strang_damping: str | bool = "auto", krylov_tol: float = 1e-11,
                 modes1: ModeSet | None = None, modes2: ModeSet | None = None,
                 t_start: float = 0.0, discard_warn: float = 1e-8) -> TtResult:
    """Two-site projector-splitting propagation of the extended state.

    ``order`` 2 is the plain symmetric sweep; 4 composes it as a triple jump
    (drive-free segments only).  ``strang_damping`` splits off the exact
    diagonal damping flow when the fastest mode makes the local solves stiff
    ("auto": enabled when dt * N_max * max|z| > 1); it requires the mode sets.
    A warning is emitted when the per-step discarded weight exceeds
    ``discard_warn`` while the rank cap is active.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    state = state.copy()
    need_modes = strang_damping is True or strang_damping == "auto"
    if need_modes and (modes1 is None or modes2 is None):
        if strang_damping == "auto":
            strang_damping = False
        else:
            raise ValueError("strang_damping requires the mode sets")
    if strang_damping == "auto":
        zmax = max([0.0] + [float(np.max(np.abs(m.z))) for m in (modes1, modes2) if m.K])
        nmax = max(op.nmax1, op.nmax2)
        strang_damping = dt * nmax * zmax > 1.0
    op_sweep = op
    if strang_damping:
        op_sweep = build_tt_operator(
            modes1, modes2, include_damping=False,
            omega1=_static_omega(op, 1), omega2=_static_omega(op, 2),
            j=_static_j(op), nmax1=op.nmax1, nmax2=op.nmax2)

    times = [t_start]
    rdos = [rdo_from_tt(state)]
    max_disc = 0.0
    capped = False
    max_rank_seen = max(state.ranks)
    t = t_start
    step_count = 0

    def do_sweep(seg, t0, h):
        nonlocal max_disc, capped
        prefs = part_prefactors(seg, t0 + 0.5 * h)
        if strang_damping:
            _apply_damping_flow(state, modes1, modes2, 0.5 * h)
        _right_canonicalize(state.cores)
        sw = _Sweeper(state, op_sweep, prefs, r_max, svd_eps, krylov_tol)
        sw.sweep(h)
        if strang_damping:
            _apply_damping_flow(state, modes1, modes2, 0.5 * h)
        max_disc = max(max_disc, sw.max_discarded)
        capped = capped or sw.rank_capped

    edges = schedule.breakpoints()
    if t_end > edges[-1] + 1e-9:
        raise ValueError(f"schedule ends at {edges[-1]:.6g} but t_end={t_end:.6g}")
    for k, seg in enumerate(schedule.segments):
        a, b = max(edges[k], t_start), min(edges[k + 1], t_end)
        if b - a <= 1e-12:
            continue
        driven = seg.omega1 != 0.0 or seg.omega2 != 0.0
        n, h = segment_steps(b - a, dt)
        for i in range(n):
            t0 = a + i * h
            if order == 4 and not driven:
                g1 = _TRIPLE_JUMP
                do_sweep(seg, t0, g1 * h)
                do_sweep(seg, t0 + g1 * h, (1.0 - 2.0 * g1) * h)
                do_sweep(seg, t0 + (1.0 - g1) * h, g1 * h)
            else:
                do_sweep(seg, t0, h)
            t = t0 + h
            step_count += 1
            max_rank_seen = max(max_rank_seen, max(state.ranks))
            if step_count % stride == 0:
                times.append(t)
                rdos.append(rdo_from_tt(state))
    if times[-1] != t:
        times.append(t)
        rdos.append(rdo_from_tt(state))
    if capped and max_disc > discard_warn:
        warnings.warn(f"rank cap R_max={r_max} active with discarded weight "
                      f"{max_disc:.3e} per step; results may be under-resolved",
                      TruncationWarning)
    telemetry = {"max_discarded_weight": max_disc, "rank_capped": capped,
                 "max_rank": max_rank_seen, "steps": step_count,
                 "strang_damping": bool(strang_damping), "order": order}
    traj = Trajectory(np.array(times), np.array(rdos), meta={"kind": "heom-tt"})
    return TtResult(traj, state, telemetry)


def _static_omega(op: TTOperator, qubit: int) -> float:
    # recover the Larmor frequency stored in the static boundary cores
    core = op.part("static")[0 if qubit == 1 else 2 * op.k1 + 2]
    block = core[0, :, :, 0] if qubit == 1 else core[1, :, :, 0]
    return float((2j * block[0, 0]).real)


def _static_j(op: TTOperator) -> float:
    core = op.part("static")[0]
    return float((1j * core[0, 0, 1, 4]).real)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(state: TTState, path: str) -> None:
    """Versioned JSON container: dims, ranks, cores row-major interleaved re/im."""
    payload = {
        "format": "tt-state",
        "version": CHECKPOINT_VERSION,
        "dims": state.dims,
        "ranks": state.ranks,
        "meta": {k: state.meta[k] for k in ("k1", "k2", "nmax1", "nmax2")
                 if k in state.meta},
        "cores": [np.stack([c.real, c.imag], axis=-1).reshape(-1).tolist()
                  for c in state.cores],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str) -> TTState:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "tt-state":
        raise ValueError("not a tensor-train checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    dims = payload["dims"]
    ranks = payload["ranks"]
    cores = []
    for k, flat in enumerate(payload["cores"]):
        arr = np.asarray(flat, dtype=float).reshape(ranks[k], dims[k], ranks[k + 1], 2)
        cores.append(arr[..., 0] + 1j * arr[..., 1])
    return TTState(cores, dict(payload.get("meta", {})))
