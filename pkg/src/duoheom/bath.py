"""Reservoir statistics: spectral densities, noise power, correlation functions.

Units: hbar = 1 and the qubit frequency omega_q is the frequency unit, so all
quantities below are dimensionless.  Coupling strengths are quoted as
``2*pi*kappa`` throughout (the constructors accept that knob directly and
divide by 2*pi).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

LORENTZIAN = "lorentzian"
BROADBAND = "broadband"

#: widest frequency window used by the quadrature paths, in units of omega_c
#: (the (1 + (w/w_c)^2)^-2 tail beyond 20 w_c contributes < 1e-9 of the mass)
OMEGA_WINDOW_FACTOR = 20.0


class QuadratureError(RuntimeError):
    """Fourier quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class BathSpec:
    """Parameterized noise reservoir attached to one qubit.

    ``kind`` selects between a Lorentzian line (detuning ``delta``, width
    ``lam``) and a broadband spectrum (exponent ``s``, cutoff ``omega_c``,
    reference frequency ``omega_ph``).  ``beta`` is the inverse temperature;
    ``math.inf`` means zero temperature.
    """

    kind: str
    kappa: float
    beta: float = math.inf
    omega_q: float = 1.0
    delta: float = 0.0
    lam: float = 0.01
    s: float = 1.0
    omega_c: float = 50.0
    omega_ph: float = 1.0

    def __post_init__(self):
        if self.kind not in (LORENTZIAN, BROADBAND):
            raise ValueError(f"unknown bath kind {self.kind!r}")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive (math.inf for zero temperature)")
        if self.kind == LORENTZIAN and not self.lam > 0:
            raise ValueError("Lorentzian line width lam must be positive")
        if self.kind == BROADBAND:
            if not 0 < self.s <= 1:
                raise ValueError("broadband exponent must satisfy 0 < s <= 1")
            if not self.omega_c > 0:
                raise ValueError("cutoff omega_c must be positive")

    @property
    def two_pi_kappa(self) -> float:
        return 2.0 * math.pi * self.kappa

    @property
    def zero_temperature(self) -> bool:
        return math.isinf(self.beta)

    @classmethod
    def lorentzian(cls, two_pi_kappa: float, delta: float = 0.0, lam: float = 0.01,
                   beta: float = math.inf, omega_q: float = 1.0) -> "BathSpec":
        return cls(LORENTZIAN, two_pi_kappa / (2.0 * math.pi), beta=beta,
                   omega_q=omega_q, delta=delta, lam=lam)

    @classmethod
    def broadband(cls, two_pi_kappa: float, s: float, omega_c: float = 50.0,
                  omega_ph: float = 1.0, beta: float = math.inf,
                  omega_q: float = 1.0) -> "BathSpec":
        return cls(BROADBAND, two_pi_kappa / (2.0 * math.pi), beta=beta,
                   omega_q=omega_q, s=s, omega_c=omega_c, omega_ph=omega_ph)

    def with_beta(self, beta: float) -> "BathSpec":
        return replace(self, beta=beta)


def spectral_density(spec: BathSpec, omega):
    """Spectral density J(w).  Vectorized over ``omega``.

    The broadband form is odd in w by construction; the Lorentzian form is a
    single peak at omega_q - delta and is only physically meaningful for
    narrow lines.
    """
    w = np.asarray(omega, dtype=float)
    if spec.kind == LORENTZIAN:
        out = spec.kappa * spec.omega_q * spec.lam**2 / (
            (spec.omega_q - spec.delta - w) ** 2 + spec.lam**2)
    else:
        out = (np.sign(w) * spec.omega_ph ** (1.0 - spec.s) * spec.kappa
               * np.abs(w) ** spec.s / (1.0 + (w / spec.omega_c) ** 2) ** 2)
    if np.isscalar(omega) or np.ndim(omega) == 0:
        return float(out)
    return out


def _odd_spectral_density(spec: BathSpec, w: np.ndarray) -> np.ndarray:
    # odd completion sgn(w) J(|w|); the broadband form is odd already
    return np.sign(w) * spectral_density(spec, np.abs(w))


def bose_occupation(beta: float, omega):
    """Bose function n(w) = 1/(e^{beta w} - 1); 0 for w>0 and -1 for w<0 at beta=inf."""
    w = np.asarray(omega, dtype=float)
    if math.isinf(beta):
        return np.where(w > 0, 0.0, -1.0)
    with np.errstate(over="ignore", divide="ignore"):
        return 1.0 / np.expm1(beta * w)


def noise_power(spec: BathSpec, omega):
    """Spectral noise power S(w) = J(w) [1 + n(w)] on the odd-completed J.

    At beta = inf this reduces to J(w) for w > 0 and 0 for w <= 0.  At finite
    beta the w = 0 value diverges for any sub-Ohmic broadband spectrum (and
    for the Lorentzian); the +inf sentinel is returned there and callers must
    handle it.  Detailed balance S(-w) = e^{-beta w} S(w) holds identically.
    """
    w = np.asarray(omega, dtype=float)
    j_odd = _odd_spectral_density(spec, w)
    if spec.zero_temperature:
        out = np.where(w > 0, j_odd, 0.0)
    else:
        with np.errstate(invalid="ignore"):
            out = j_odd * (1.0 + bose_occupation(spec.beta, w))
        # w = 0: finite limit kappa/beta only for the Ohmic broadband case
        if np.any(w == 0.0):
            if spec.kind == BROADBAND and spec.s == 1.0:
                limit = spec.kappa / spec.beta
            else:
                limit = math.inf
            out = np.where(w == 0.0, limit, out)
    if np.isscalar(omega) or np.ndim(omega) == 0:
        return float(out)
    return out


def _window_cut(spec: BathSpec, rtol: float) -> float:
    """Frequency window large enough that the spectral tail mass is below rtol.

    For the broadband form the tail integral beyond W behaves like
    kappa w_ph^(1-s) w_c^4 W^(s-3) / (3-s); the window is sized so that this
    bound stays under rtol in absolute units (floor 20 w_c).  Lorentzian
    tails fall like kappa w_q lam^2 / W, handled the same way.
    """
    floor = OMEGA_WINDOW_FACTOR * (spec.omega_c if spec.kind == BROADBAND else
                                   max(1.0, abs(spec.omega_q - spec.delta) + spec.lam))
    eps = max(rtol, 1e-12)
    if spec.kind == BROADBAND:
        coef = spec.kappa * spec.omega_ph ** (1.0 - spec.s) * spec.omega_c**4 / (3.0 - spec.s)
        w = (coef / eps) ** (1.0 / (3.0 - spec.s))
    else:
        w = spec.kappa * spec.omega_q * spec.lam**2 / eps
    return float(min(max(floor, w), 1e8))


def _fourier_quad(spec: BathSpec, t: float, rtol: float, limit: int = 400):
    """C(t) = int S(w) e^{-iwt} dw by adaptive Gauss-Kronrod, with error sum."""
    w_max = _window_cut(spec, rtol)
    pieces = []
    floor = OMEGA_WINDOW_FACTOR * (spec.omega_c if spec.kind == BROADBAND else
                                   max(1.0, abs(spec.omega_q - spec.delta) + spec.lam))
    if spec.zero_temperature:
        lo = 0.0
    else:
        # the negative side is Boltzmann suppressed; a modest window suffices
        lo = -min(w_max, max(floor, 100.0 / spec.beta))
    # split at +-1 (absorbs the |w|^(s-1) endpoint behaviour) and at the
    # nominal window edge (helps the adaptive rule on the long tail piece)
    cuts = sorted({lo, w_max} | {x for x in (-floor, -1.0, 0.0, 1.0, floor)
                                 if lo < x < w_max})
    for a, b in zip(cuts[:-1], cuts[1:]):
        pieces.append((a, b))

    def s_val(w):
        return noise_power(spec, w)

    total = 0.0 + 0.0j
    err = 0.0
    # the achieved error estimate is checked by the caller; scipy's roundoff
    # warnings on long oscillatory tail pieces are redundant with that check
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in pieces:
            touches_zero = (a == 0.0 or b == 0.0) and not spec.zero_temperature \
                and spec.kind == BROADBAND and spec.s < 1.0
            if touches_zero:
                # substitute u = |w|^s: the u-integrand is bounded at u = 0
                s = spec.s
                sgn = 1.0 if a == 0.0 else -1.0
                span = abs(b if a == 0.0 else a)

                def f_re(u, sgn=sgn):
                    w = sgn * u ** (1.0 / s)
                    return s_val(w) * math.cos(w * t) * u ** (1.0 / s - 1.0) / s

                def f_im(u, sgn=sgn):
                    w = sgn * u ** (1.0 / s)
                    return -s_val(w) * math.sin(w * t) * u ** (1.0 / s - 1.0) / s

                re, er = integrate.quad(f_re, 0.0, span**s, limit=limit, epsabs=1e-13, epsrel=rtol)
                im, ei = integrate.quad(f_im, 0.0, span**s, limit=limit, epsabs=1e-13, epsrel=rtol)
                total += re + 1j * im
                err += er + ei
            elif abs(t) * (b - a) > 8.0 * math.pi:
                # strongly oscillatory piece: QAWO weights
                re, er = integrate.quad(s_val, a, b, weight="cos", wvar=t,
                                        limit=limit, epsabs=1e-13, epsrel=rtol)
                im, ei = integrate.quad(s_val, a, b, weight="sin", wvar=t,
                                        limit=limit, epsabs=1e-13, epsrel=rtol)
                total += re - 1j * im
                err += er + ei
            else:
                re, er = integrate.quad(lambda w: s_val(w) * math.cos(w * t), a, b,
                                        limit=limit, epsabs=1e-13, epsrel=rtol)
                im, ei = integrate.quad(lambda w: -s_val(w) * math.sin(w * t), a, b,
                                        limit=limit, epsabs=1e-13, epsrel=rtol)
                total += re + 1j * im
                err += er + ei
    return total, err


def correlation_function(spec: BathSpec, t, rtol: float = 1e-10,
                         err_tol: float | None = None):
    """Reservoir autocorrelation C(t) = <X(t) X(0)>.

    Zero-temperature Lorentzian baths use the closed form
    pi kappa omega_q lam * exp(-lam |t| - i (omega_q - delta) t); everything
    else is evaluated by Fourier quadrature of the noise power over a
    truncated window.  ``err_tol`` (default 1e-8 absolute) bounds the
    accepted quadrature error estimate; beyond it a QuadratureError is raised
    carrying the achieved estimate.
    """
    if spec.kind == LORENTZIAN and spec.zero_temperature:
        tt = np.asarray(t, dtype=float)
        amp = math.pi * spec.kappa * spec.omega_q * spec.lam
        out = amp * np.exp(-spec.lam * np.abs(tt)
                           - 1j * (spec.omega_q - spec.delta) * tt)
        if np.isscalar(t) or np.ndim(t) == 0:
            return complex(out)
        return out

    def one(tv: float) -> complex:
        val, err = _fourier_quad(spec, tv, rtol)
        bound = 1e-8 if err_tol is None else err_tol
        if err > bound:
            raise QuadratureError(f"correlation quadrature at t={tv}", err)
        return val

    if np.isscalar(t) or np.ndim(t) == 0:
        return one(float(t))
    return np.array([one(float(tv)) for tv in np.asarray(t, dtype=float)])


def t1_estimate(spec: BathSpec) -> float:
    """Weak-coupling relaxation time tanh(beta w_q / 2) / (2 pi J(w_q))."""
    j_q = spectral_density(spec, spec.omega_q)
    if j_q <= 0.0:
        raise ValueError("t1_estimate undefined: J(omega_q) vanishes")
    if spec.zero_temperature:
        factor = 1.0
    else:
        factor = math.tanh(spec.beta * spec.omega_q / 2.0)
    return factor / (2.0 * math.pi * j_q)
