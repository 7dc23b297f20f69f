"""Piecewise-constant control schedules, ideal propagation, process matrices.

Controls are the rotating drive of each qubit (amplitude Omega_j, phase
phi_j, frequency wex_j) and the exchange coupling J, all constant within a
segment and switched instantaneously at segment boundaries.  Gate helpers
build the exchange gates (sqrt-iSWAP^dagger, iSWAP, iSWAP^dagger), arbitrary
x-y-plane rotations, and the two Hadamard+CNOT decomposition schemes.
Terminal frame rotations (virtual Z) are tracked as bookkeeping only and are
never applied to the dynamics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import system
from .trajectory import DEFAULT_DT, Trajectory, segment_steps

SEGMENT_FIELDS = ("duration", "omega1", "phi1", "wex1", "omega2", "phi2", "wex2", "j")


@dataclass(frozen=True)
class Segment:
    """One constant-control interval.

    ``tau_pi`` records the duration as an exact rational multiple of pi when
    the segment was produced by a gate helper; schedule totals can then be
    compared exactly.
    """

    duration: float
    omega1: float = 0.0
    phi1: float = 0.0
    wex1: float = 1.0
    omega2: float = 0.0
    phi2: float = 0.0
    wex2: float = 1.0
    j: float = 0.0
    label: str = ""
    tau_pi: Fraction | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment durations must be positive")

    def hamiltonian(self, t: float, omega_q: float = 1.0) -> np.ndarray:
        """System Hamiltonian at absolute time t (4x4, product basis)."""
        h = 0.5 * omega_q * (system.SZ1 + system.SZ2) + self.j * system.EXCHANGE
        if self.omega1 != 0.0:
            a = self.wex1 * t + self.phi1
            h = h + 0.5 * self.omega1 * (math.cos(a) * system.SX1 + math.sin(a) * system.SY1)
        if self.omega2 != 0.0:
            a = self.wex2 * t + self.phi2
            h = h + 0.5 * self.omega2 * (math.cos(a) * system.SX2 + math.sin(a) * system.SY2)
        return h


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass
class PulseSchedule:
    segments: list[Segment] = field(default_factory=list)
    #: terminal frame rotations (angle per qubit); bookkeeping only
    virtual_z: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")

    @property
    def total_duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    @property
    def total_duration_pi(self) -> Fraction | None:
        """Exact total duration in units of pi, when every segment carries one."""
        if any(s.tau_pi is None for s in self.segments):
            return None
        return sum((s.tau_pi for s in self.segments), Fraction(0))

    def breakpoints(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def segment_at(self, t: float) -> Segment:
        edges = self.breakpoints()
        if t < -1e-12 or t > edges[-1] + 1e-9:
            raise ValueError(f"t={t} outside schedule [0, {edges[-1]}]")
        k = min(int(np.searchsorted(edges, t, side="right")) - 1, len(self.segments) - 1)
        return self.segments[max(k, 0)]

    def extended_to(self, t_end: float, label: str = "idle") -> "PulseSchedule":
        """Append a trailing idle so the schedule covers [0, t_end]."""
        gap = t_end - self.total_duration
        if gap <= 1e-12:
            return self
        segs = self.segments + [Segment(gap, label=label)]
        return PulseSchedule(segs, virtual_z=list(self.virtual_z))

    def then(self, other: "PulseSchedule") -> "PulseSchedule":
        return PulseSchedule(self.segments + other.segments,
                             virtual_z=self.virtual_z + other.virtual_z)

    def to_json(self) -> str:
        payload = {
            "segments": [
                {**{f: getattr(s, f) for f in SEGMENT_FIELDS}, "label": s.label}
                for s in self.segments
            ],
            "virtual_z": [list(v) for v in self.virtual_z],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PulseSchedule":
        payload = json.loads(text)
        segs = [Segment(**seg) for seg in payload["segments"]]
        vz = [tuple(v) for v in payload.get("virtual_z", [])]
        return cls(segs, virtual_z=vz)


def idle(duration: float, tau_pi: Fraction | None = None) -> Segment:
    return Segment(duration, label="idle", tau_pi=tau_pi)


def single_qubit_rotation(qubit: int, phi: float, theta: float, omega: float,
                          omega_q: float = 1.0) -> Segment:
    """Rotation exp[-i theta (sx cos(phi) + sy sin(phi))/2] on one qubit.

    Realized by a resonant drive of amplitude ``omega`` for time
    |theta|/omega; negative angles flip the drive phase by pi.
    """
    if theta == 0.0:
        raise ValueError("zero-angle rotation has no duration")
    if not omega > 0:
        raise ValueError("drive amplitude must be positive")
    drive_phi = phi + (math.pi if theta < 0 else 0.0)
    duration = abs(theta) / omega
    tau_pi = abs(_frac(theta / math.pi)) / _frac(omega)
    fields = dict(duration=duration, label=f"R(q{qubit}, phi={phi:g}, theta={theta:g})",
                  tau_pi=tau_pi)
    if qubit == 1:
        fields.update(omega1=omega, phi1=drive_phi, wex1=omega_q)
    elif qubit == 2:
        fields.update(omega2=omega, phi2=drive_phi, wex2=omega_q)
    else:
        raise ValueError("qubit must be 1 or 2")
    return Segment(**fields)


def simultaneous(seg1: Segment, seg2: Segment) -> Segment:
    """Merge two equal-duration single-qubit segments into one block."""
    if abs(seg1.duration - seg2.duration) > 1e-12:
        raise ValueError("simultaneous blocks need equal durations")
    if seg1.omega2 != 0.0 or seg2.omega1 != 0.0:
        raise ValueError("expected a qubit-1 segment and a qubit-2 segment")
    return Segment(seg1.duration, omega1=seg1.omega1, phi1=seg1.phi1, wex1=seg1.wex1,
                   omega2=seg2.omega2, phi2=seg2.phi2, wex2=seg2.wex2,
                   j=0.0, label=f"{seg1.label} + {seg2.label}", tau_pi=seg1.tau_pi)


def _exchange_segment(j: float, quarter_turns: Fraction, label: str) -> Segment:
    if not j > 0:
        raise ValueError("coupling J must be positive")
    tau_pi = quarter_turns / _frac(j)
    return Segment(float(quarter_turns) * math.pi / j, j=j, label=label, tau_pi=tau_pi)


def sqrt_iswap_dagger(j: float) -> PulseSchedule:
    """Exchange coupling on for pi/(4 J): |10> -> (|10> - i|01>)/sqrt(2)."""
    return PulseSchedule([_exchange_segment(j, Fraction(1, 4), "sqrt_iswap_dagger")])


def iswap(j: float) -> Segment:
    return _exchange_segment(j, Fraction(3, 2), "iswap")


def iswap_dagger(j: float) -> Segment:
    return _exchange_segment(j, Fraction(1, 2), "iswap_dagger")


def sequence_hcnot(variant: str, omega: float, j: float, delta_t: float = 0.0,
                   omega_q: float = 1.0) -> PulseSchedule:
    """Hadamard-then-CNOT decomposition schemes A and B.

    A: [Ry(-pi/2) x Rx(pi/2)] . iSWAP . [Ry(-pi/2) x 1] . iSWAP
    B: [Ry(-pi/2) x 1] . iSWAP^dag . [Ry(pi/2) x 1] . iSWAP . [1 x Rx(pi/2)]

    Idles of length ``delta_t`` separate successive gates.  Both schemes
    equal CNOT.(H x 1) up to the recorded terminal virtual-Z angles (the
    CNOT convention flips qubit 2 when qubit 1 is in |0>).  Totals:
    pi/Omega + 3 pi/J + 3 dt (A) and 3 pi/(2 Omega) + 2 pi/J + 4 dt (B).
    """
    if variant not in ("A", "B", "a", "b"):
        raise ValueError("variant must be 'A' or 'B'")
    if not (omega > 0 and j > 0 and delta_t >= 0):
        raise ValueError("need omega > 0, j > 0, delta_t >= 0")

    def ry(q, sign):
        return single_qubit_rotation(q, math.pi / 2, sign * math.pi / 2, omega, omega_q)

    def rx(q, sign):
        return single_qubit_rotation(q, 0.0, sign * math.pi / 2, omega, omega_q)

    if variant.upper() == "A":
        gates = [simultaneous(ry(1, -1), rx(2, +1)), iswap(j), ry(1, -1), iswap(j)]
        vz = [(-math.pi / 2, math.pi)]
    else:
        gates = [ry(1, -1), iswap_dagger(j), ry(1, +1), iswap(j), rx(2, +1)]
        vz = [(math.pi / 2, 0.0)]
    dt_pi = _frac(delta_t / math.pi) if delta_t > 0 else None
    segs: list[Segment] = []
    for k, g in enumerate(gates):
        segs.append(g)
        if delta_t > 0 and k < len(gates) - 1:
            segs.append(idle(delta_t, tau_pi=dt_pi))
    return PulseSchedule(segs, virtual_z=vz)


def _rotating_frame_generator(seg: Segment, omega_q: float) -> np.ndarray:
    """Time-independent generator of a segment in the frame rotating at omega_q.

    Valid for resonant drives (wex == omega_q on any driven qubit); the
    exchange coupling is invariant under the common rotation.
    """
    for om, wex, which in ((seg.omega1, seg.wex1, 1), (seg.omega2, seg.wex2, 2)):
        if om != 0.0 and abs(wex - omega_q) > 1e-12:
            raise ValueError(f"qubit {which} drive is detuned (wex={wex}); only "
                             "resonant drives are supported")
    h = seg.j * system.EXCHANGE
    if seg.omega1 != 0.0:
        h = h + 0.5 * seg.omega1 * (math.cos(seg.phi1) * system.SX1
                                    + math.sin(seg.phi1) * system.SY1)
    if seg.omega2 != 0.0:
        h = h + 0.5 * seg.omega2 * (math.cos(seg.phi2) * system.SX2
                                    + math.sin(seg.phi2) * system.SY2)
    return h


_Z_HALF = np.array([1.0, 0.0, 0.0, -1.0])  # eigenvalues of (sz1+sz2)/2


def _frame(t: float, omega_q: float) -> np.ndarray:
    """Diagonal of V(t) = exp(+i t omega_q (sz1+sz2)/2)."""
    return np.exp(1j * omega_q * t * _Z_HALF)


def segment_propagator(seg: Segment, t_start: float, tau: float,
                       omega_q: float = 1.0) -> np.ndarray:
    """Exact lab-frame unitary across [t_start, t_start + tau] of one segment."""
    h_rot = _rotating_frame_generator(seg, omega_q)
    w, v = np.linalg.eigh(h_rot)
    u_rot = (v * np.exp(-1j * w * tau)) @ v.conj().T
    vf = _frame(t_start + tau, omega_q).conj()
    vi = _frame(t_start, omega_q)
    return (vf[:, None] * u_rot) * vi[None, :]


def ideal_propagate(rho0: np.ndarray, schedule: PulseSchedule, stride: int = 1,
                    dt: float = DEFAULT_DT, t_end: float | None = None,
                    omega_q: float = 1.0) -> Trajectory:
    """Unitary (kappa = 0) evolution of rho0 under the schedule.

    Exact within each segment (rotating-frame factorization, no ODE error);
    sampled on the same segment-aligned grid the hierarchy integrators use,
    every ``stride`` steps.
    """
    system.check_density_matrix(rho0)
    if t_end is not None:
        schedule = schedule.extended_to(t_end)
    times = [0.0]
    rho = np.asarray(rho0, dtype=complex)
    rdos = [rho]
    t = 0.0
    step_count = 0
    for seg in schedule.segments:
        n, h = segment_steps(seg.duration, dt)
        w, v = np.linalg.eigh(_rotating_frame_generator(seg, omega_q))
        u_rot_step = (v * np.exp(-1j * w * h)) @ v.conj().T
        for _ in range(n):
            vf = _frame(t + h, omega_q).conj()
            vi = _frame(t, omega_q)
            u = (vf[:, None] * u_rot_step) * vi[None, :]
            rho = u @ rho @ u.conj().T
            t += h
            step_count += 1
            if step_count % stride == 0:
                times.append(t)
                rdos.append(rho)
    if times[-1] != t:
        times.append(t)
        rdos.append(rho)
    return Trajectory(np.array(times), np.array(rdos), meta={"kind": "ideal"})


# ---------------------------------------------------------------------------
# process (chi) matrices from single-qubit trajectories

#: operator basis for the process matrix
PAULI_BASIS = (np.eye(2, dtype=complex), system.SX, system.SY, system.SZ)

#: tomography preparations spanning the single-qubit operator space
PREPARATIONS = (
    np.array([[1, 0], [0, 0]], dtype=complex),             # |1><1|
    np.array([[0, 0], [0, 1]], dtype=complex),             # |0><0|
    np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex),     # |+><+|
    np.array([[0.5, -0.5j], [0.5j, 0.5]], dtype=complex),  # |+i><+i|
)


def _basis_matrix() -> np.ndarray:
    """16x16 map from vec(chi) to the row-major-vec superoperator."""
    cols = [np.kron(PAULI_BASIS[m], PAULI_BASIS[n].T).reshape(-1)
            for m in range(4) for n in range(4)]
    return np.array(cols).T


_B = _basis_matrix()
_B_INV = np.linalg.inv(_B)
_P0 = np.array([p.reshape(-1) for p in PREPARATIONS]).T
_P0_INV = np.linalg.inv(_P0)


@dataclass
class KrausChannel:
    """chi trajectory of a single-qubit channel rho -> sum_mn chi_mn A_m rho A_n."""

    times: np.ndarray
    chis: np.ndarray  # (T, 4, 4)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.chis = np.asarray(self.chis, dtype=complex)
        if self.chis.shape != (len(self.times), 4, 4):
            raise ValueError("chis must have shape (len(times), 4, 4)")

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def superoperators(self) -> np.ndarray:
        """(T, 4, 4) row-major-vec superoperators rebuilt from chi."""
        return (self.chis.reshape(len(self.times), 16) @ _B.T).reshape(-1, 4, 4)

    def max_tp_violation(self) -> float:
        """Largest deviation of sum_mn chi_mn A_n A_m from the identity."""
        worst = 0.0
        for chi in self.chis:
            acc = np.zeros((2, 2), dtype=complex)
            for m in range(4):
                for n in range(4):
                    acc += chi[m, n] * (PAULI_BASIS[n] @ PAULI_BASIS[m])
            worst = max(worst, float(np.abs(acc - np.eye(2)).max()))
        return worst

    def max_hermiticity_violation(self) -> float:
        return float(np.abs(self.chis - np.conj(np.swapaxes(self.chis, 1, 2))).max())


def kraus_tomography(times: np.ndarray, evolved: list[np.ndarray],
                     cond_limit: float = 1e8) -> KrausChannel:
    """Process matrices chi(t) by linear inversion from basis preparations.

    ``evolved`` holds, per preparation in ``PREPARATIONS`` order, the evolved
    single-qubit states as a (T, 2, 2) array on the common time grid.
    """
    if len(evolved) != 4:
        raise ValueError("need the four basis-preparation trajectories")
    times = np.asarray(times, dtype=float)
    trajs = [np.asarray(e, dtype=complex) for e in evolved]
    for e in trajs:
        if e.shape != (len(times), 2, 2):
            raise ValueError("each trajectory must have shape (T, 2, 2)")
    if np.linalg.cond(_P0) > cond_limit:
        raise RuntimeError("preparation basis is ill-conditioned")
    chis = np.empty((len(times), 4, 4), dtype=complex)
    for k in range(len(times)):
        pt = np.array([e[k].reshape(-1) for e in trajs]).T
        m = pt @ _P0_INV
        cond = np.linalg.cond(m) if np.abs(m).max() > 0 else 1.0
        if cond > cond_limit:
            raise RuntimeError(f"superoperator inversion ill-conditioned at "
                               f"t={times[k]} (cond={cond:.2e})")
        chis[k] = (_B_INV @ m.reshape(-1)).reshape(4, 4)
    return KrausChannel(times, chis)


def kraus_predict(chi1: KrausChannel, chi2: KrausChannel,
                  rho_tg: np.ndarray) -> Trajectory:
    """Two-qubit prediction rho(t_g + t) from independent single-qubit channels.

    Applies the tensor product of the two reconstructed maps to ``rho_tg``;
    exact when the reservoirs are factorized (reset) at t_g and the qubits
    stay uncoupled afterwards.
    """
    if len(chi1.times) != len(chi2.times) or np.max(np.abs(chi1.times - chi2.times)) > 1e-12:
        raise ValueError("channels must share one time grid")
    system.check_density_matrix(rho_tg)
    s1 = chi1.superoperators().reshape(-1, 2, 2, 2, 2)
    s2 = chi2.superoperators().reshape(-1, 2, 2, 2, 2)
    rho_r = np.asarray(rho_tg, dtype=complex).reshape(2, 2, 2, 2)
    out = np.einsum("tabcd,tABCD,cCdD->taAbB", s1, s2, rho_r, optimize=True)
    return Trajectory(chi1.times, out.reshape(-1, 4, 4), meta={"kind": "kraus-predict"})
