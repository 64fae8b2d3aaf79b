import numpy as np


def random_state(n_qubits, rng):
    psi = rng.standard_normal(1 << n_qubits) + 1j * rng.standard_normal(1 << n_qubits)
    return psi / np.linalg.norm(psi)


def dense_commutator_norm(a, b):
    return np.linalg.norm(a @ b - b @ a)
