"""Estimator-style wrappers: configure in ``__init__``, ``fit(params)``, then query.

Hyperparameters are plain attributes so ``get_params``/``set_params``/``clone``
work; fitted state carries a trailing underscore.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .correlator import CorrelatorSpec, correlator_fast, correlator_gate_level, greater_lesser_retarded
from .greens import assemble_gf, retarded_gf_exact, retarded_gf_variational
from .model import build_hamiltonian, exact_diagonalize
from .validation import check_grid, check_params, check_state
from .vqe import ground_search


def _rng(random_state):
    return np.random.default_rng(random_state)


class ExactDiagonalizer(BaseEstimator):
    """Sector-blocked ED of the impurity model."""

    def fit(self, params, y=None):
        p = check_params(params)
        ed = exact_diagonalize(p)
        self.params_ = p
        self.result_ = ed
        self.ground_energy_ = ed.ground_energy
        self.ground_state_ = ed.ground_state
        self.ground_sector_ = ed.ground_sector
        self.degenerate_ = ed.degenerate
        return self


class SpaVQE(BaseEstimator):
    def __init__(self, delta_target=1e-5, d_max=8, restarts=5, mode="square_nn", random_state=None):
        self.delta_target = delta_target
        self.d_max = d_max
        self.restarts = restarts
        self.mode = mode
        self.random_state = random_state

    def fit(self, params, y=None):
        p = check_params(params)
        rep = ground_search(p, self.delta_target, self.d_max, restarts=self.restarts,
                            rng=_rng(self.random_state), mode=self.mode)
        self.params_ = p
        self.report_ = rep
        self.energy_ = rep.energy
        self.ground_state_ = rep.ground_state
        self.depth_ = rep.depth
        self.overlap_error_ = rep.overlap_error
        return self

    def score(self, params=None, y=None):
        """Fidelity ``1 - delta`` of the fitted state with the exact ground state."""
        check_is_fitted(self, "report_")
        return 1.0 - self.overlap_error_


class LanczosGreensFunction(BaseEstimator):
    """Impurity Green's function; ``predict(omega)`` returns ``G^R(omega + i eta)``."""

    def __init__(self, orbital=0, eta=0.1, method="exact", depth=None, mode="square_nn",
                 random_state=None):
        self.orbital = orbital
        self.eta = eta
        self.method = method
        self.depth = depth
        self.mode = mode
        self.random_state = random_state

    def fit(self, params, y=None):
        p = check_params(params)
        if self.method == "exact":
            gf = retarded_gf_exact(p, self.orbital, np.zeros(1), self.eta)
            self.reports_ = {}
        elif self.method == "variational":
            gf, self.reports_ = retarded_gf_variational(p, self.orbital, np.zeros(1), self.eta,
                                                        d=self.depth, rng=_rng(self.random_state),
                                                        mode=self.mode)
        else:
            raise ValueError("method must be 'exact' or 'variational'")
        self.params_ = p
        self.chains_ = {1: gf.chains.get("plus"), -1: gf.chains.get("minus")}
        self.norms_ = {1: gf.norm_plus, -1: gf.norm_minus}
        return self

    def predict(self, omega):
        check_is_fitted(self, "chains_")
        return self.samples(omega).values

    def samples(self, omega):
        check_is_fitted(self, "chains_")
        omega = check_grid(omega, "omega")
        return assemble_gf(self.chains_, self.norms_, omega, self.eta, self.method)


class CorrelatorEstimator(BaseEstimator):
    """Time-domain ``G^R(t)`` of one orbital in the exact ground state.

    ``predict(times)`` gives ``G^R``; ``transform(times)`` stacks
    ``(G>, G<, G^R)`` as columns.
    """

    def __init__(self, orbital=0, mode="fast", shots=None, random_state=None):
        self.orbital = orbital
        self.mode = mode
        self.shots = shots
        self.random_state = random_state

    def fit(self, params, y=None, ground_state=None):
        p = check_params(params)
        self.params_ = p
        self.hamiltonian_ = build_hamiltonian(p)
        if ground_state is None:
            ground_state = exact_diagonalize(p).ground_state
        self.ground_state_ = check_state(ground_state, p.n_qubits)
        return self

    def transform(self, times):
        check_is_fitted(self, "ground_state_")
        times = check_grid(times, "times")
        if self.mode not in ("fast", "gate_level"):
            raise ValueError("mode must be 'fast' or 'gate_level'")
        out = greater_lesser_retarded(self.ground_state_, self.hamiltonian_, self.orbital, times,
                                      gate_level=self.mode == "gate_level")
        return np.stack(out, axis=1)

    def predict(self, times):
        return self.transform(times)[:, 2]

    def evaluate(self, spec: CorrelatorSpec):
        """Arbitrary operator string on the fitted ground state."""
        check_is_fitted(self, "ground_state_")
        if self.mode == "fast":
            return correlator_fast(self.ground_state_, spec, self.hamiltonian_)
        return correlator_gate_level(self.ground_state_, spec, self.hamiltonian_, self.shots,
                                     _rng(self.random_state))
