"""Search the single-qubit blocks of the two H+CNOT decomposition schemes.

The circuit constraints: scheme A is
    [Ry(-pi/2) x Rx(pi/2)] . iSWAP . [block] . iSWAP
(4 gates, single-qubit time pi/Omega, two-qubit time 3pi/J), scheme B is
    [Ry(-pi/2) x 1] . 2Q . [block] . 2Q' . [1 x Rx(pi/2)]
(5 gates, single-qubit time 3pi/(2 Omega), two-qubit time 2pi/J, one iSWAP
and one iSWAP^dagger in some order).  Every block lasts pi/(2 Omega), so all
rotation angles are +-pi/2 about axes in the x-y plane.  A candidate is
accepted when the full unitary equals CNOT.(H x 1) up to terminal virtual-Z
rotations on both qubits and a global phase.
"""

import itertools

import numpy as np

SI = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)
ISWAP_DAG = ISWAP.conj()

H = (SX + SZ) / np.sqrt(2)
CNOT = np.zeros((4, 4), dtype=complex)  # |1><1| x I + |0><0| x X, basis {1,0} per qubit
CNOT[0, 0] = CNOT[1, 1] = 1
CNOT[2, 3] = CNOT[3, 2] = 1
TARGET = CNOT @ np.kron(H, SI)


def rot(phi, theta):
    axis = SX * np.cos(phi) + SY * np.sin(phi)
    return np.cos(theta / 2) * SI - 1j * np.sin(theta / 2) * axis


GATES = {
    "1": SI,
    "Rx(+)": rot(0, np.pi / 2), "Rx(-)": rot(0, -np.pi / 2),
    "Ry(+)": rot(np.pi / 2, np.pi / 2), "Ry(-)": rot(np.pi / 2, -np.pi / 2),
}


def equal_up_to_virtual_z(u, target, tol=1e-10):
    """u == e^{i delta} (Rz(a) x Rz(b)) target ?  Returns (a, b) or None."""
    m = u @ target.conj().T
    off = np.abs(m - np.diag(np.diag(m))).max()
    if off > tol:
        return None
    dd = np.diag(m)
    if np.abs(np.abs(dd) - 1).max() > tol:
        return None
    # consistency of a product structure: m11*m44 == m22*m33
    if abs(dd[0] * dd[3] - dd[1] * dd[2]) > tol:
        return None
    # phases: dd = e^{i delta} diag(e^{-i(a+b)/2}, e^{-i(a-b)/2}, ...) for
    # (Rz(a) x Rz(b)); recover relative angles from ratios
    a = -np.angle(dd[0] / dd[2])  # e^{-ia}
    b = -np.angle(dd[0] / dd[1])  # e^{-ib}
    return a, b


def search_a():
    first = np.kron(GATES["Ry(-)"], GATES["Rx(+)"])
    hits = []
    for n1, n2 in itertools.product(GATES, repeat=2):
        if n1 == "1" and n2 == "1":
            continue
        block = np.kron(GATES[n1], GATES[n2])
        u = ISWAP @ block @ ISWAP @ first
        res = equal_up_to_virtual_z(u, TARGET)
        if res is not None:
            hits.append((n1, n2, res))
    return hits


def search_b():
    first = np.kron(GATES["Ry(-)"], SI)
    last = np.kron(SI, GATES["Rx(+)"])
    hits = []
    for order in ("dag_first", "iswap_first"):
        g1, g2 = (ISWAP_DAG, ISWAP) if order == "dag_first" else (ISWAP, ISWAP_DAG)
        for n1, n2 in itertools.product(GATES, repeat=2):
            if n1 == "1" and n2 == "1":
                continue
            block = np.kron(GATES[n1], GATES[n2])
            u = last @ g2 @ block @ g1 @ first
            res = equal_up_to_virtual_z(u, TARGET)
            if res is not None:
                hits.append((order, n1, n2, res))
    return hits


if __name__ == "__main__":
    print("scheme A middle blocks (q1, q2, virtual-Z angles/pi):")
    for n1, n2, (a, b) in search_a():
        print(f"  {n1} x {n2}   vz=({a/np.pi:+.4f}, {b/np.pi:+.4f})")
    print("scheme B middle blocks (order, q1, q2, virtual-Z angles/pi):")
    for order, n1, n2, (a, b) in search_b():
        print(f"  {order}: {n1} x {n2}   vz=({a/np.pi:+.4f}, {b/np.pi:+.4f})")
