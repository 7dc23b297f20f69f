"""Analytic zero-temperature reference dynamics with a rotating-wave coupling.

Without drives and inter-qubit coupling, every element of the reduced state
is a closed-form combination of two single-qubit amplitude functions h_j(t).
For a Lorentzian bath h(t) is available in closed form; for a general mode
decomposition it solves a small linear ODE system (the memory integral
unrolled over the modes).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .expfit import ModeSet


class StepSizeError(RuntimeError):
    """Step-halving check detected an insufficient integration step."""


def h_lorentzian(t, two_pi_kappa: float, lam: float, delta: float = 0.0,
                 omega_q: float = 1.0):
    """Closed-form excited-state amplitude for a zero-temperature Lorentzian bath.

    h(t) = exp[-((lam - i delta)/2 + i omega_q) t]
           (cosh(d t/2) + (lam - i delta)/d sinh(d t/2)),
    d = sqrt((lam - i delta)^2 - 4 pi kappa omega_q lam).  |h| is blind to
    the sign of delta.  Vectorized over t.
    """
    kappa = two_pi_kappa / (2.0 * math.pi)
    tt = np.asarray(t, dtype=float)
    a = lam - 1j * delta
    d = cmath.sqrt(a * a - 4.0 * math.pi * kappa * omega_q * lam)
    half = 0.5 * tt
    if abs(d) * np.max(np.abs(tt), initial=0.0) < 1e-8:
        # degenerate root: cosh -> 1, sinh(d t/2)/d -> t/2
        core = 1.0 + a * half
    else:
        core = np.cosh(d * half) + (a / d) * np.sinh(d * half)
    out = np.exp(-(0.5 * a + 1j * omega_q) * tt) * core
    if np.isscalar(t) or np.ndim(t) == 0:
        return complex(out)
    return out


@dataclass
class AmplitudeTrace:
    """Sampled h(t) plus the per-mode accumulators of the ODE route."""

    times: np.ndarray
    h: np.ndarray
    e_modes: np.ndarray | None = None  # (T, K) when ODE-driven

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.h = np.asarray(self.h, dtype=complex)
        if self.h.shape != self.times.shape:
            raise ValueError("h and times must have equal length")


def _h_rk4(modes: ModeSet, omega_q: float, t_end: float, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = modes.K
    a = np.zeros((k + 1, k + 1), dtype=complex)
    a[0, 1:] = -1.0
    a[1:, 0] = modes.d
    a[1:, 1:] = np.diag(-(modes.z - 1j * omega_q))
    n = max(1, int(round(t_end / dt)))
    h = t_end / n
    # sub-step for stability: RK4 needs |lambda h| within its stability region
    rate = float(np.max(np.abs(modes.z - 1j * omega_q), initial=0.0))
    sub = max(1, int(math.ceil(rate * h / 1.5)))
    hs = h / sub
    y = np.zeros(k + 1, dtype=complex)
    y[0] = 1.0
    times = np.empty(n + 1)
    ys = np.empty((n + 1, k + 1), dtype=complex)
    times[0] = 0.0
    ys[0] = y
    for i in range(n):
        for _ in range(sub):
            k1 = a @ y
            k2 = a @ (y + 0.5 * hs * k1)
            k3 = a @ (y + 0.5 * hs * k2)
            k4 = a @ (y + hs * k3)
            y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        times[i + 1] = (i + 1) * h
        ys[i + 1] = y
    return times, ys[:, 0], ys[:, 1:]


def h_numeric(modes: ModeSet, omega_q: float = 1.0, t_end: float = 50.0,
              dt: float = 2.0 * math.pi / 200.0, check: bool = True,
              check_tol: float = 1e-8) -> AmplitudeTrace:
    """Amplitude h(t) from the mode expansion of the correlation function.

    Integrates dh~/dt = -sum_k e_k, de_k/dt = -(z_k - i w_q) e_k + d_k h~
    with RK4 on the ``dt`` sampling grid (sub-stepping internally when a mode
    rate makes the plain step unstable) and returns h = e^{-i w_q t} h~.
    With ``check`` a step-halving comparison flags an insufficient dt.
    """
    if modes.K and np.min(modes.z.real) <= 0:
        raise ValueError("modes must decay (Re z > 0)")
    times, htilde, e_modes = _h_rk4(modes, omega_q, t_end, dt)
    if check:
        _, htilde2, _ = _h_rk4(modes, omega_q, t_end, dt / 2.0)
        err = float(np.max(np.abs(htilde - htilde2[::2])))
        if err > check_tol:
            raise StepSizeError(f"halving the step changes h by {err:.3e} "
                                f"(tolerance {check_tol:.1e}); reduce dt")
    h = np.exp(-1j * omega_q * times) * htilde
    return AmplitudeTrace(times, h, e_modes)


def rwa_rdo(rho0: np.ndarray, h1, h2) -> np.ndarray:
    """Reduced state assembled from the amplitude functions.

    ``h1`` and ``h2`` may be scalars (single time) or equal-length arrays
    (trajectory); the result has shape (4, 4) or (T, 4, 4).  The last
    diagonal element is fixed by trace, conjugates by Hermiticity.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    h1 = np.asarray(h1, dtype=complex)
    h2 = np.asarray(h2, dtype=complex)
    scalar = h1.ndim == 0
    h1 = np.atleast_1d(h1)
    h2 = np.atleast_1d(h2)
    if h1.shape != h2.shape:
        raise ValueError("h1 and h2 must have matching shapes")
    p1 = np.abs(h1) ** 2
    p2 = np.abs(h2) ** 2
    out = np.zeros((len(h1), 4, 4), dtype=complex)
    out[:, 0, 0] = rho0[0, 0] * p1 * p2
    out[:, 1, 1] = rho0[1, 1] * p1 + rho0[0, 0] * p1 * (1.0 - p2)
    out[:, 2, 2] = rho0[2, 2] * p2 + rho0[0, 0] * p2 * (1.0 - p1)
    out[:, 3, 3] = 1.0 - out[:, 0, 0] - out[:, 1, 1] - out[:, 2, 2]
    out[:, 0, 1] = rho0[0, 1] * p1 * h2
    out[:, 0, 2] = rho0[0, 2] * p2 * h1
    out[:, 0, 3] = rho0[0, 3] * h1 * h2
    out[:, 1, 2] = rho0[1, 2] * h1 * h2.conj()
    out[:, 1, 3] = rho0[1, 3] * h1 + rho0[0, 2] * h1 * (1.0 - p2)
    out[:, 2, 3] = rho0[2, 3] * h2 + rho0[0, 1] * h2 * (1.0 - p1)
    for i in range(4):
        for j in range(i + 1, 4):
            out[:, j, i] = out[:, i, j].conj()
    return out[0] if scalar else out
