"""Two driven, coupled qubits with independent Gaussian reservoirs.

Free-pole hierarchical equations of motion in dense and tensor-train form,
analytic rotating-wave reference dynamics, and entanglement / fidelity
diagnostics.
"""

from . import bath, expfit, heom, metrics, rwa, schedule, system  # noqa: F401

__version__ = "0.1.0"
