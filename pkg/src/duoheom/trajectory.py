"""Sampled reduced-density-operator trajectories and their CSV export."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

#: default integrator step 2*pi/(200*omega_q)
DEFAULT_DT = 2.0 * np.pi / 200.0

CSV_HEADER = ("t,"
              + ",".join(f"re_rho_{i}{j},im_rho_{i}{j}"
                         for i in range(1, 5) for j in range(1, 5))
              + ",trace,min_eig")


@dataclass
class Trajectory:
    """Time series of 4x4 reduced density operators."""

    times: np.ndarray
    rdos: np.ndarray  # (T, 4, 4) complex
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.rdos = np.asarray(self.rdos, dtype=complex)
        if self.rdos.shape != (len(self.times), 4, 4):
            raise ValueError("rdos must have shape (len(times), 4, 4)")

    def __len__(self) -> int:
        return len(self.times)

    def traces(self) -> np.ndarray:
        return np.einsum("tii->t", self.rdos).real

    def min_eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.rdos + np.conj(np.swapaxes(self.rdos, 1, 2)))
        return np.linalg.eigvalsh(herm)[:, 0]

    def to_csv(self) -> str:
        """Column order: t, re/im of the 16 elements row-major, trace, min_eig."""
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        traces = self.traces()
        mins = self.min_eigenvalues()
        for k, t in enumerate(self.times):
            cells = [f"{t:.17g}"]
            for i in range(4):
                for j in range(4):
                    v = self.rdos[k, i, j]
                    cells.append(f"{v.real:.17g}")
                    cells.append(f"{v.imag:.17g}")
            cells.append(f"{traces[k]:.17g}")
            cells.append(f"{mins[k]:.17g}")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def segment_steps(duration: float, dt: float) -> tuple[int, float]:
    """Number of uniform steps (>= 1) covering ``duration`` with step <= dt."""
    if duration <= 0:
        raise ValueError("segment duration must be positive")
    n = max(1, int(np.ceil(duration / dt - 1e-12)))
    return n, duration / n
