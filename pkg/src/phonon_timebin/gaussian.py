"""Covariance-matrix engine for the same circuit vocabulary as the Fock
engine, with determinant-based threshold-click probabilities.

Conventions: hbar = 1, quadrature ordering (x1, p1, x2, p2, ...), vacuum
covariance = I/2.  Means are identically zero here -- the vocabulary has no
displacement -- and that is asserted, which keeps the vacuum-probability
formula P0(S) = 1/sqrt(det(sigma_S + I/2)) displacement-free.
"""

from __future__ import annotations

import itertools
import math
from typing import Mapping, Sequence

import numpy as np

from .core import OutcomeDistribution

SYMMETRY_TOL = 1e-12


class GaussianEngineError(ValueError):
    pass


def _rot(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def symplectic_form(n_modes: int) -> np.ndarray:
    omega = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        omega[2 * k, 2 * k + 1] = 1.0
        omega[2 * k + 1, 2 * k] = -1.0
    return omega


class CovarianceState:
    """Zero-mean Gaussian state over an ordered registry of modes."""

    def __init__(self, modes: Sequence[str], sigma: np.ndarray | None = None):
        if len(set(modes)) != len(modes):
            raise GaussianEngineError("duplicate mode labels")
        self.modes = tuple(modes)
        if sigma is None:
            sigma = 0.5 * np.eye(2 * len(self.modes))
        self.sigma = np.asarray(sigma, dtype=float)
        self.mean = np.zeros(2 * len(self.modes))

    def mode_index(self, label: str) -> int:
        try:
            return self.modes.index(label)
        except ValueError:
            raise GaussianEngineError(f"mode {label!r} not registered") from None

    def copy(self) -> "CovarianceState":
        return CovarianceState(self.modes, self.sigma.copy())

    def block(self, label: str) -> np.ndarray:
        k = 2 * self.mode_index(label)
        return self.sigma[k:k + 2, k:k + 2]

    def mean_occupation(self, label: str) -> float:
        blk = self.block(label)
        return 0.5 * (blk[0, 0] + blk[1, 1] - 1.0)

    def check_valid(self, tol: float = 1e-10) -> None:
        if np.abs(self.sigma - self.sigma.T).max() > SYMMETRY_TOL:
            raise GaussianEngineError("covariance not symmetric"
                                      )
        omega = symplectic_form(len(self.modes))
        eig = np.linalg.eigvalsh(self.sigma + 0.5j * omega)
        if eig.min() < -tol:
            raise GaussianEngineError(f"uncertainty relation violated: {eig.min():g}")

    def purity_det(self) -> float:
        """det(2 sigma); equals 1 for pure states."""
        return float(np.linalg.det(2.0 * self.sigma))


def vacuum_state(modes: Sequence[str]) -> CovarianceState:
    return CovarianceState(modes)


def thermal_state(modes: Sequence[str], occupations: float | Mapping[str, float]) -> CovarianceState:
    if isinstance(occupations, (int, float)):
        occupations = {m: float(occupations) for m in modes}
    diag = []
    for m in modes:
        n = occupations.get(m, 0.0)
        if n < 0:
            raise GaussianEngineError("thermal occupation must be >= 0")
        diag += [n + 0.5, n + 0.5]
    return CovarianceState(modes, np.diag(diag))


def add_vacuum_mode(state: CovarianceState, label: str) -> CovarianceState:
    n = len(state.modes)
    sigma = 0.5 * np.eye(2 * (n + 1))
    sigma[:2 * n, :2 * n] = state.sigma
    return CovarianceState(state.modes + (label,), sigma)


def drop_modes(state: CovarianceState, labels: Sequence[str]) -> CovarianceState:
    drop = {state.mode_index(m) for m in labels}
    keep = [i for i in range(len(state.modes)) if i not in drop]
    sel = np.concatenate([[2 * i, 2 * i + 1] for i in keep]) if keep else np.array([], int)
    return CovarianceState([state.modes[i] for i in keep], state.sigma[np.ix_(sel, sel)])


# ---------------------------------------------------------------------------
# symplectic operations


def _embed(state: CovarianceState, labels: Sequence[str], small: np.ndarray) -> np.ndarray:
    S = np.eye(2 * len(state.modes))
    idx = np.concatenate([[2 * state.mode_index(m), 2 * state.mode_index(m) + 1]
                          for m in labels])
    S[np.ix_(idx, idx)] = small
    return S


def phase_symplectic(phi: float) -> np.ndarray:
    # apply_phase multiplies |n> by e^{i n phi}, i.e. a -> a e^{i phi}
    return _rot(phi)


def beam_splitter_symplectic(transmissivity: float, phase: float = 0.0) -> np.ndarray:
    if not 0.0 <= transmissivity <= 1.0:
        raise GaussianEngineError("transmissivity must be in [0, 1]")
    theta = math.acos(min(1.0, math.sqrt(transmissivity)))
    c, s = math.cos(theta), math.sin(theta)
    R = _rot(phase)
    S = np.zeros((4, 4))
    S[:2, :2] = c * np.eye(2)
    S[:2, 2:] = s * R
    S[2:, :2] = -s * R.T
    S[2:, 2:] = c * np.eye(2)
    return S


def squeeze_symplectic(p: float, phase: float = 0.0) -> np.ndarray:
    if not 0.0 <= p < 1.0:
        raise GaussianEngineError("scattering probability must be in [0, 1)")
    r = math.atanh(math.sqrt(p))
    ch, sh = math.cosh(r), math.sinh(r)
    c, s = math.cos(phase), math.sin(phase)
    off = sh * np.array([[c, s], [s, -c]])
    S = np.zeros((4, 4))
    S[:2, :2] = ch * np.eye(2)
    S[:2, 2:] = off
    S[2:, :2] = off
    S[2:, 2:] = ch * np.eye(2)
    return S


def symplectic_apply(state: CovarianceState, op: str, labels: Sequence[str],
                     *params) -> CovarianceState:
    """Apply one of the vocabulary unitaries (squeeze | beamsplitter | phase)."""
    if op == "phase":
        small = phase_symplectic(*params)
    elif op == "beamsplitter":
        small = beam_splitter_symplectic(*params)
    elif op == "squeeze":
        small = squeeze_symplectic(*params)
    else:
        raise GaussianEngineError(f"unknown op {op!r}")
    S = _embed(state, labels, small)
    return CovarianceState(state.modes, S @ state.sigma @ S.T)


def apply_phase(state: CovarianceState, mode: str, phi: float) -> CovarianceState:
    return symplectic_apply(state, "phase", [mode], phi)


def apply_beam_splitter(state: CovarianceState, mode_a: str, mode_b: str,
                        transmissivity: float, phase: float = 0.0) -> CovarianceState:
    return symplectic_apply(state, "beamsplitter", [mode_a, mode_b], transmissivity, phase)


def apply_two_mode_squeeze(state: CovarianceState, optical_mode: str, mech_mode: str,
                           p: float, phase: float = 0.0) -> CovarianceState:
    return symplectic_apply(state, "squeeze", [optical_mode, mech_mode], p, phase)


def thermal_loss(state: CovarianceState, mode: str, survival: float,
                 n_env: float = 0.0) -> CovarianceState:
    """sigma_mode -> eta sigma_mode + (1-eta)(n_env + 1/2) I, cross blocks
    scaled by sqrt(eta)."""
    if not 0.0 <= survival <= 1.0:
        raise GaussianEngineError("survival must be in [0, 1]")
    if n_env < 0:
        raise GaussianEngineError("n_env must be >= 0")
    k = 2 * state.mode_index(mode)
    n = 2 * len(state.modes)
    X = np.eye(n)
    X[k, k] = X[k + 1, k + 1] = math.sqrt(survival)
    sigma = X @ state.sigma @ X
    sigma[k, k] += (1.0 - survival) * (n_env + 0.5)
    sigma[k + 1, k + 1] += (1.0 - survival) * (n_env + 0.5)
    return CovarianceState(state.modes, sigma)


def apply_loss(state: CovarianceState, mode: str, survival: float) -> CovarianceState:
    return thermal_loss(state, mode, survival, 0.0)


def apply_thermal_noise(state: CovarianceState, mode: str, delta_n: float,
                        epsilon: float = 0.01) -> CovarianceState:
    if delta_n < 0:
        raise GaussianEngineError("delta_n must be >= 0")
    if delta_n == 0.0:
        return state.copy()
    return thermal_loss(state, mode, 1.0 - epsilon, delta_n / epsilon)


# ---------------------------------------------------------------------------
# threshold detection


def vacuum_probability(state: CovarianceState, labels: Sequence[str]) -> float:
    """P(no click on the given modes) = 1/sqrt(det(sigma_S + I/2))."""
    if np.abs(state.mean).max() > 0:
        raise GaussianEngineError("click formulas require zero-mean states")
    if not labels:
        return 1.0
    sel = np.concatenate([[2 * state.mode_index(m), 2 * state.mode_index(m) + 1]
                          for m in labels])
    red = state.sigma[np.ix_(sel, sel)]
    try:
        chol = np.linalg.cholesky(red + 0.5 * np.eye(len(sel)))
    except np.linalg.LinAlgError:
        raise GaussianEngineError(
            "non-positive-definite sigma + I/2: invalid state") from None
    return 1.0 / float(np.prod(np.diagonal(chol)))


def click_probabilities(
    state: CovarianceState,
    detector_map: Mapping[str, Sequence[str]],
    efficiency: Mapping[str, float] | float | None = None,
) -> OutcomeDistribution:
    """Exact threshold-click pattern probabilities by inclusion-exclusion
    over detector subsets (exponential in detector count, which is small)."""
    work = state
    for det, modes in detector_map.items():
        eta = 1.0 if efficiency is None else (
            efficiency if isinstance(efficiency, (int, float)) else efficiency.get(det, 1.0))
        if eta < 1.0:
            for m in modes:
                work = thermal_loss(work, m, eta, 0.0)
    detectors = list(detector_map)
    n = len(detectors)
    # P0[subset] = P(no click on that detector subset, rest unconstrained)
    p0 = np.empty(1 << n)
    for code in range(1 << n):
        labels = [m for b in range(n) if code >> b & 1 for m in detector_map[detectors[b]]]
        p0[code] = vacuum_probability(work, labels)
    probs: dict[tuple[bool, ...], float] = {}
    for pattern_code in range(1 << n):
        clicks = [b for b in range(n) if pattern_code >> b & 1]
        quiet_code = (~pattern_code) & ((1 << n) - 1)
        total = 0.0
        for r in range(len(clicks) + 1):
            for sub in itertools.combinations(clicks, r):
                sub_code = sum(1 << b for b in sub)
                total += (-1) ** r * p0[quiet_code | sub_code]
        pattern = tuple(bool(pattern_code >> b & 1) for b in range(n))
        probs[pattern] = max(total, 0.0) if total > -1e-9 else total
    norm = sum(probs.values())
    if abs(norm - 1.0) > 1e-9:
        raise GaussianEngineError(f"pattern probabilities sum to {norm!r}")
    probs = {k: v / norm for k, v in probs.items()}
    return OutcomeDistribution(tuple(detectors), probs)
