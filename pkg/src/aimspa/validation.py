"""Input coercion helpers shared by the estimator wrappers."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import AimParams


def check_params(params) -> AimParams:
    """Accept an :class:`AimParams`, its dict form, a JSON string or a JSON file path."""
    if isinstance(params, AimParams):
        return params
    if isinstance(params, dict):
        return AimParams.from_dict(params)
    if isinstance(params, (str, Path)):
        text = str(params)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        return AimParams.from_dict(json.loads(text))
    raise TypeError(f"cannot interpret {type(params).__name__} as model parameters")


def check_state(state, n_qubits: int | None = None, normalized: bool = True,
                atol: float = 1e-8) -> np.ndarray:
    """Complex 1-D statevector with power-of-two length (and unit norm)."""
    psi = np.asarray(state, dtype=complex)
    if psi.ndim != 1 or psi.size == 0 or psi.size & (psi.size - 1):
        raise ValueError("state must be a 1-D array of length 2**n")
    if not np.all(np.isfinite(psi)):
        raise ValueError("state has non-finite amplitudes")
    if n_qubits is not None and psi.size != 1 << n_qubits:
        raise ValueError(f"expected a {n_qubits}-qubit state, got length {psi.size}")
    if normalized and abs(np.linalg.norm(psi) - 1.0) > atol:
        raise ValueError("state is not normalized")
    return psi


def check_grid(grid, name: str = "grid") -> np.ndarray:
    """Finite, strictly increasing 1-D array."""
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.ndim != 1 or not np.all(np.isfinite(g)):
        raise ValueError(f"{name} must be a finite 1-D array")
    if g.size > 1 and np.any(np.diff(g) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return g
