"""Two-qubit states in Bloch form.

A state is stored as ``(x, y, T)``: Alice's local Bloch vector, Bob's local
Bloch vector and the correlation tensor, with ``T[i, j]`` the coefficient of
``sigma_i (x) sigma_j`` (Alice's Pauli first).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PSD_TOL = 1e-9

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)
I2 = np.eye(2, dtype=complex)


class InvalidStateError(ValueError):
    """Raised when a Bloch triple does not describe a density matrix."""


def _vec3(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected 3 components, got shape {np.shape(v)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite vector component")
    return arr


def _mat3(m) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite matrix entry")
    return arr


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    x: np.ndarray
    y: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _vec3(self.x))
        object.__setattr__(self, "y", _vec3(self.y))
        object.__setattr__(self, "T", _mat3(self.T))
        for arr in (self.x, self.y, self.T):
            arr.setflags(write=False)

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "T": self.T.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TwoQubitState":
        try:
            return cls(data["x"], data["y"], data["T"])
        except KeyError as exc:
            raise ValueError(f"missing key {exc.args[0]!r}") from None

    def __repr__(self):
        return f"TwoQubitState(x={self.x.tolist()}, y={self.y.tolist()}, T={self.T.tolist()})"


@dataclass(frozen=True)
class StateReport:
    min_eigenvalue: float
    valid: bool
    local_norms: tuple[float, float]
    tol: float = field(default=PSD_TOL)


@dataclass(frozen=True, eq=False)
class Frame:
    """Orthonormal right-handed triple ``(beta, e1, e2)`` with ``beta x e1 = e2``.

    Target states live on the unit circle spanned by ``e1`` and ``e2``.
    """

    beta: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def matrix(self) -> np.ndarray:
        """Columns ``beta, e1, e2``; maps frame coordinates to lab coordinates."""
        return np.column_stack([self.beta, self.e1, self.e2])

    def circle(self, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
        """Angles ``2 pi k / n`` and the corresponding unit vectors, shape ``(n, 3)``."""
        phi = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
        s = np.cos(phi)[:, None] * self.e1 + np.sin(phi)[:, None] * self.e2
        return phi, s


# _BASIS[i, j] = sigma_i (x) sigma_j with sigma_0 = I.
_BASIS = np.array([[np.kron(a, b) for b in (I2,) + PAULI] for a in (I2,) + PAULI])


def to_density_matrix(state: TwoQubitState) -> np.ndarray:
    coeff = np.empty((4, 4))
    coeff[0, 0] = 1.0
    coeff[1:, 0] = state.x
    coeff[0, 1:] = state.y
    coeff[1:, 1:] = state.T
    return np.tensordot(coeff, _BASIS, axes=([0, 1], [0, 1])) / 4.0


def validate_state(state: TwoQubitState, tol: float = PSD_TOL) -> StateReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho = to_density_matrix(state)
    lam_min = float(np.linalg.eigvalsh(rho)[0])
    norms = (float(np.linalg.norm(state.x)), float(np.linalg.norm(state.y)))
    valid = lam_min >= -tol and norms[0] <= 1 + tol and norms[1] <= 1 + tol
    return StateReport(lam_min, valid, norms, tol)


def require_valid(state: TwoQubitState, tol: float = PSD_TOL) -> None:
    report = validate_state(state, tol)
    if not report.valid:
        raise InvalidStateError(
            f"not a density matrix (min eigenvalue {report.min_eigenvalue:.3e})"
        )


def partial_transpose(rho: np.ndarray) -> np.ndarray:
    """Transpose on Bob's qubit of a 4x4 two-qubit operator."""
    return rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


def ppt_min_eigenvalue(state: TwoQubitState) -> float:
    """Smallest eigenvalue of the partial transpose; negative iff entangled."""
    require_valid(state)
    return float(np.linalg.eigvalsh(partial_transpose(to_density_matrix(state)))[0])


def is_entangled(state: TwoQubitState, tol: float = PSD_TOL) -> bool:
    return ppt_min_eigenvalue(state) < -tol


def bell_diagonal(t1: float, t2: float, t3: float) -> TwoQubitState:
    state = TwoQubitState(np.zeros(3), np.zeros(3), np.diag([t1, t2, t3]))
    require_valid(state)
    return state


def is_separable_bell_diagonal(t1: float, t2: float, t3: float) -> bool:
    return abs(t1) + abs(t2) + abs(t3) <= 1.0


def is_bell_diagonal(state: TwoQubitState, atol: float = 1e-12) -> bool:
    """True for ``x = y = 0`` and diagonal ``T``."""
    off = state.T - np.diag(np.diag(state.T))
    return bool(
        np.all(np.abs(state.x) <= atol)
        and np.all(np.abs(state.y) <= atol)
        and np.all(np.abs(off) <= atol)
    )


def entanglement_threshold(lam: float) -> float:
    """Smallest ``|t|`` above which ``rho(t z, t z, -lam I)`` is entangled."""
    radicand = 1.0 - 2.0 * lam - 3.0 * lam * lam
    if radicand < 0:
        raise ValueError(f"lambda={lam} outside [0, 1/3]: negative radicand")
    return 0.5 * np.sqrt(radicand)


def geometric_discord_bell_diagonal(t1: float, t2: float, t3: float) -> float:
    bell_diagonal(t1, t2, t3)
    a, b, _ = sorted(abs(t) for t in (t1, t2, t3))
    return 0.25 * (a * a + b * b)


def make_frame(beta) -> Frame:
    b = _vec3(beta)
    norm = np.linalg.norm(b)
    if norm == 0:
        raise ValueError("beta must be non-zero")
    b = b / norm
    # Gram-Schmidt against the axis least aligned with beta (first on ties).
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(b)))] = 1.0
    e1 = ref - (ref @ b) * b
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(b, e1)
    return Frame(b, e1, e2)


def werner(lam: float) -> TwoQubitState:
    """``rho(0, 0, -lam I)``."""
    return TwoQubitState(np.zeros(3), np.zeros(3), -lam * np.eye(3))


def dakic_state(lam: float, t: float) -> TwoQubitState:
    """``rho(t z, t z, -lam I)``; physical for ``|t| <= (1 - lam) / 2``."""
    z = np.array([0.0, 0.0, t])
    return TwoQubitState(z, z, -lam * np.eye(3))


def load_state(path) -> TwoQubitState:
    """Read the JSON state format ``{"x": [..], "y": [..], "T": [[..]..]}``."""
    with open(Path(path)) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("state JSON must be an object")
    return TwoQubitState.from_dict(data)


def dump_state(state: TwoQubitState, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(state.to_dict(), fh, indent=2)
        fh.write("\n")
