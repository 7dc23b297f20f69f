"""Damped-exponential decompositions of bath correlation functions.

A ``ModeSet`` represents C(t) ~ sum_k d_k exp(-z_k t) for t >= 0 with
Re z_k > 0.  Zero-temperature Lorentzian baths decompose analytically into a
single mode; every other spectrum goes through a rational approximation of
the noise power S(w) on the real frequency axis (AAA), whose lower-half-plane
poles supply the modes.  Each fit is certified in the time domain against the
quadrature correlation function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import AAA

from .bath import BROADBAND, LORENTZIAN, BathSpec, correlation_function, noise_power

MODESET_SCHEMA_KEYS = ("K", "modes", "residual", "window")


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeSet:
    """Modes (d_k, z_k) of one reservoir, with the certified time window.

    ``residual`` is the max absolute deviation of the reconstruction from the
    reference correlation function over ``window`` = (0, t_cert).
    ``converged`` is False when the fit stopped short of the requested
    tolerance (not persisted by the JSON schema).
    """

    d: np.ndarray
    z: np.ndarray
    residual: float = 0.0
    window: tuple[float, float] = (0.0, math.inf)
    converged: bool = True
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "d", np.atleast_1d(np.asarray(self.d, dtype=complex)))
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=complex)))
        if self.d.shape != self.z.shape:
            raise ValueError("amplitude and rate arrays must have equal length")
        if self.K and np.min(self.z.real) <= 0:
            raise ValueError("every mode must decay: Re z_k > 0")

    @property
    def K(self) -> int:
        return len(self.d)

    @classmethod
    def empty(cls) -> "ModeSet":
        return cls(np.zeros(0, dtype=complex), np.zeros(0, dtype=complex))

    def to_json(self) -> str:
        payload = {
            "K": self.K,
            "modes": [{"d_re": dk.real, "d_im": dk.imag, "z_re": zk.real, "z_im": zk.imag}
                      for dk, zk in zip(self.d, self.z)],
            "residual": self.residual,
            "window": list(self.window),
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModeSet":
        payload = json.loads(text)
        modes = payload["modes"]
        d = np.array([m["d_re"] + 1j * m["d_im"] for m in modes], dtype=complex)
        z = np.array([m["z_re"] + 1j * m["z_im"] for m in modes], dtype=complex)
        ms = cls(d, z, residual=float(payload["residual"]),
                 window=tuple(payload["window"]))
        if ms.K != payload["K"]:
            raise ValueError("mode count in payload does not match mode list")
        return ms


def reconstruct_cf(modes: ModeSet, t):
    """sum_k d_k exp(-z_k t) for t >= 0 (vectorized)."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("reconstruct_cf is defined for t >= 0 only")
    if modes.K == 0:
        out = np.zeros_like(tt, dtype=complex)
    else:
        out = np.exp(-np.multiply.outer(tt, modes.z)) @ modes.d
    if np.isscalar(t) or np.ndim(t) == 0:
        return complex(out)
    return out


def decompose_lorentzian(spec: BathSpec) -> ModeSet:
    """Single-mode analytic decomposition of a zero-temperature Lorentzian bath."""
    if spec.kind != LORENTZIAN:
        raise FitError("analytic route requires a Lorentzian spec")
    if not spec.zero_temperature:
        raise FitError("analytic Lorentzian modes hold at beta=inf only; "
                       "use decompose_aaa for finite temperature")
    d = math.pi * spec.kappa * spec.omega_q * spec.lam
    z = spec.lam + 1j * (spec.omega_q - spec.delta)
    return ModeSet(np.array([d], dtype=complex), np.array([z], dtype=complex),
                   residual=0.0, window=(0.0, math.inf), label="lorentzian-analytic")


def _sample_grid(spec: BathSpec, n_half: int = 1500) -> np.ndarray:
    """Mirrored log-spaced grid avoiding the w = 0 divergence.

    The grid extends far beyond the cutoff (same adaptive window as the
    quadrature reference): a grid truncated at 20 w_c leaves the rational
    approximant free to misplace a few tenths of a percent of the spectral
    mass, which shows up as a reconstruction bias at t ~ 0.
    """
    from .bath import _window_cut

    w_hi = _window_cut(spec, 1e-9)
    pos = np.geomspace(1e-4, w_hi, n_half)
    grid = np.concatenate([-pos[::-1], pos])
    # near-zero neighbourhood: keep points but exclude anything below 1e-6
    return grid[np.abs(grid) >= 1e-6]


def _cert_grid(t_cert: float, n: int = 384) -> np.ndarray:
    lin = np.linspace(0.0, t_cert, n // 2)
    log = np.geomspace(max(t_cert * 1e-4, 1e-3), t_cert, n // 2)
    return np.unique(np.concatenate([[0.0], lin, log]))


def certify(modes: ModeSet, spec: BathSpec, t_cert: float,
            n_points: int = 384, rtol: float = 1e-9) -> float:
    """Max |C_fit - C_ref| over [0, t_cert] against the quadrature reference."""
    ts = _cert_grid(t_cert, n_points)
    ref = correlation_function(spec, ts, rtol=rtol)
    fit = reconstruct_cf(modes, ts)
    return float(np.max(np.abs(fit - ref)))


def decompose_aaa(spec: BathSpec, tol: float, t_cert: float,
                  max_terms: int = 120, n_grid: int = 1000,
                  cert_points: int = 384) -> ModeSet:
    """Mode extraction through an AAA rational approximant of S(w).

    The approximant is built on a mirrored log grid, its poles in the lower
    half plane are converted to decaying modes (z = i * pole, d = -2*pi*i *
    residue, from closing the Fourier contour below the real axis for t > 0),
    and the reconstruction is certified against the quadrature correlation
    function on [0, t_cert].  ``tol`` bounds both the AAA relative error on
    the sample set and the accepted time-domain residual relative to |C(0)|.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = _sample_grid(spec, n_grid)
    vals = noise_power(spec, grid)
    approx = AAA(grid, vals, rtol=float(tol), max_terms=max_terms)
    poles = approx.poles()
    residues = approx.residues()

    lower = poles.imag < 0.0
    z = 1j * poles[lower]
    d = -2j * math.pi * residues[lower]

    # prune non-decaying leftovers (defensive; the half-plane cut should not
    # let any through) and drop numerically irrelevant amplitudes
    keep = z.real > 0.0
    z, d = z[keep], d[keep]
    scale = max(np.sum(np.abs(d)), 1e-300)
    keep = np.abs(d) > 1e-14 * scale
    z, d = z[keep], d[keep]
    if len(z) == 0:
        raise FitError("AAA produced no decaying modes")
    order = np.argsort(-np.abs(d))
    modes = ModeSet(d[order], z[order], window=(0.0, t_cert), label="aaa")

    residual = certify(modes, spec, t_cert, n_points=cert_points)
    c0 = abs(correlation_function(spec, 0.0))
    converged = residual <= tol * max(c0, 1e-300)
    return ModeSet(modes.d, modes.z, residual=residual, window=(0.0, t_cert),
                   converged=converged, label="aaa")


def decompose(spec: BathSpec, tol: float = 1e-4, t_cert: float = 50.0,
              **kwargs) -> ModeSet:
    """Analytic route for zero-temperature Lorentzian specs, AAA otherwise."""
    if spec.kind == LORENTZIAN and spec.zero_temperature:
        return decompose_lorentzian(spec)
    return decompose_aaa(spec, tol, t_cert, **kwargs)
