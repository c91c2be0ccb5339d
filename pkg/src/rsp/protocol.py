"""Encodings, decoding channels and the one-bit preparation pipeline.

Alice measures a binary POVM ``M_pm = a_pm I pm a.sigma`` on her qubit and
sends the outcome; Bob applies the affine qubit channel ``u -> T u + v``
selected by that bit.  All fidelities are averaged over the unit circle
orthogonal to ``frame.beta`` with the normalized measure ``dphi / 2 pi``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from .bloch import I2, PAULI, Frame, TwoQubitState, _mat3, _vec3

ENCODING_TOL = 1e-12
CPTP_TOL = 1e-9
DEFAULT_NODES = 2048


class ChannelClass(str, enum.Enum):
    GENERAL = "general"
    INVARIANT = "invariant"
    BISTOCHASTIC = "bistochastic"


class InvalidEncodingError(ValueError):
    pass


class InvalidChannelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Encoding:
    a_plus: float
    a_minus: float
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _vec3(self.a))
        self.a.setflags(write=False)
        ap, am = float(self.a_plus), float(self.a_minus)
        if abs(ap + am - 1.0) > ENCODING_TOL:
            raise InvalidEncodingError(f"a_plus + a_minus = {ap + am}, expected 1")
        if not (-ENCODING_TOL <= ap <= 1 + ENCODING_TOL and -ENCODING_TOL <= am <= 1 + ENCODING_TOL):
            raise InvalidEncodingError("a_plus, a_minus must lie in [0, 1]")
        if np.linalg.norm(self.a) > min(ap, am) + ENCODING_TOL:
            raise InvalidEncodingError(
                f"|a| = {np.linalg.norm(self.a):.6g} exceeds min(a_plus, a_minus) = {min(ap, am):.6g}"
            )

    @classmethod
    def von_neumann(cls, direction) -> "Encoding":
        """Projective measurement along ``direction`` (normalized here)."""
        d = _vec3(direction)
        return cls(0.5, 0.5, 0.5 * d / np.linalg.norm(d))

    @classmethod
    def trivial(cls, outcome: int = +1) -> "Encoding":
        """No measurement; the outcome ``outcome`` is sent with certainty."""
        if outcome > 0:
            return cls(1.0, 0.0, np.zeros(3))
        return cls(0.0, 1.0, np.zeros(3))


EncodingStrategy = Callable[[np.ndarray], Encoding]


@dataclass(frozen=True, eq=False)
class DecodingChannel:
    """Affine qubit map ``u -> Tmap u + v``."""

    Tmap: np.ndarray
    v: np.ndarray
    class_tag: ChannelClass = ChannelClass.GENERAL

    def __post_init__(self):
        object.__setattr__(self, "Tmap", _mat3(self.Tmap))
        object.__setattr__(self, "v", _vec3(self.v))
        object.__setattr__(self, "class_tag", ChannelClass(self.class_tag))
        self.Tmap.setflags(write=False)
        self.v.setflags(write=False)
        if self.class_tag is ChannelClass.BISTOCHASTIC and np.any(self.v != 0):
            raise InvalidChannelError("bistochastic channels have zero shift")

    @classmethod
    def identity(cls, class_tag=ChannelClass.BISTOCHASTIC) -> "DecodingChannel":
        return cls(np.eye(3), np.zeros(3), class_tag)

    @classmethod
    def rotation(cls, matrix, class_tag=ChannelClass.BISTOCHASTIC) -> "DecodingChannel":
        return cls(matrix, np.zeros(3), class_tag)

    @classmethod
    def constant(cls, bloch) -> "DecodingChannel":
        """Replace the input by the fixed state with Bloch vector ``bloch``."""
        return cls(np.zeros((3, 3)), bloch, ChannelClass.GENERAL)


@dataclass(frozen=True, eq=False)
class ExtremalChannelParams:
    u: float
    w: float
    O1: np.ndarray
    O2: np.ndarray

    def __post_init__(self):
        for name in ("O1", "O2"):
            m = _mat3(getattr(self, name))
            if not np.allclose(m @ m.T, np.eye(3), atol=1e-10) or np.linalg.det(m) < 0:
                raise ValueError(f"{name} must be a proper rotation")
            object.__setattr__(self, name, m)


@dataclass(frozen=True)
class DecodingPair:
    plus: DecodingChannel
    minus: DecodingChannel

    def __post_init__(self):
        if self.plus.class_tag != self.minus.class_tag:
            raise InvalidChannelError("both decodings must carry the same class tag")

    @property
    def class_tag(self) -> ChannelClass:
        return self.plus.class_tag


class PostMeasurement(NamedTuple):
    n_plus: np.ndarray | None
    n_minus: np.ndarray | None
    p_plus: float
    p_minus: float


class ChannelReport(NamedTuple):
    min_eigenvalue: float
    trace_error: float
    valid: bool


def rotation_about(axis, angle: float) -> np.ndarray:
    axis = _vec3(axis)
    return Rotation.from_rotvec(angle * axis / np.linalg.norm(axis)).as_matrix()


def povm_elements(enc: Encoding) -> tuple[np.ndarray, np.ndarray]:
    a_sigma = sum(enc.a[i] * PAULI[i] for i in range(3))
    return enc.a_plus * I2 + a_sigma, enc.a_minus * I2 - a_sigma


def outcome_probabilities(state: TwoQubitState, enc: Encoding) -> tuple[float, float]:
    ax = float(enc.a @ state.x)
    return enc.a_plus + ax, enc.a_minus - ax


def _unnormalized_bob(state: TwoQubitState, enc: Encoding) -> tuple[np.ndarray, np.ndarray]:
    # Tr_A[(a.sigma (x) I) rho] has Bloch part T^T a for T[i, j] ~ sigma_i (x) sigma_j.
    ta = state.T.T @ enc.a
    return ta + enc.a_plus * state.y, -ta + enc.a_minus * state.y


def post_measurement_bloch(state: TwoQubitState, enc: Encoding) -> PostMeasurement:
    """Bob's conditional Bloch vectors; ``None`` marks a branch of zero weight."""
    p_plus, p_minus = outcome_probabilities(state, enc)
    m_plus, m_minus = _unnormalized_bob(state, enc)
    n_plus = m_plus / p_plus if p_plus > 0 else None
    n_minus = m_minus / p_minus if p_minus > 0 else None
    return PostMeasurement(n_plus, n_minus, p_plus, p_minus)


def extremal_channel(params: ExtremalChannelParams, class_tag=ChannelClass.GENERAL) -> DecodingChannel:
    cu, cw = np.cos(params.u), np.cos(params.w)
    T0 = np.diag([cu, cw, cu * cw])
    v0 = np.array([0.0, 0.0, np.sin(params.u) * np.sin(params.w)])
    return DecodingChannel(params.O1 @ T0 @ params.O2.T, params.O1 @ v0, class_tag)


def choi_matrix(ch: DecodingChannel) -> np.ndarray:
    """``sum_ij |i><j| (x) Lambda(|i><j|)`` for the affine map of ``ch``."""
    out_pauli = [sum(ch.Tmap[j, k] * PAULI[j] for j in range(3)) for k in range(3)]
    shift = I2 + sum(ch.v[j] * PAULI[j] for j in range(3))
    J = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            X = np.zeros((2, 2), dtype=complex)
            X[i, j] = 1.0
            image = 0.5 * (np.trace(X) * shift + sum(np.trace(X @ PAULI[k]) * out_pauli[k] for k in range(3)))
            J += np.kron(X, image)
    return J


def validate_channel_cptp(ch: DecodingChannel, tol: float = CPTP_TOL) -> ChannelReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    J = choi_matrix(ch)
    lam_min = float(np.linalg.eigvalsh(0.5 * (J + J.conj().T))[0])
    reduced = np.trace(J.reshape(2, 2, 2, 2), axis1=1, axis2=3)
    trace_err = float(np.max(np.abs(reduced - I2)))
    return ChannelReport(lam_min, trace_err, lam_min >= -tol and trace_err <= tol)


def require_cptp(ch: DecodingChannel, tol: float = CPTP_TOL) -> None:
    report = validate_channel_cptp(ch, tol)
    if not report.valid:
        raise InvalidChannelError(f"channel is not CPTP (Choi min eigenvalue {report.min_eigenvalue:.3e})")


def apply_channel(ch: DecodingChannel, u) -> np.ndarray:
    return ch.Tmap @ _vec3(u) + ch.v


def final_bloch(state: TwoQubitState, enc: Encoding, dec: DecodingPair) -> np.ndarray:
    """Bob's Bloch vector after decoding, averaged over Alice's outcome."""
    m_plus, m_minus = _unnormalized_bob(state, enc)
    p_plus, p_minus = outcome_probabilities(state, enc)
    return (
        dec.plus.Tmap @ m_plus + p_plus * dec.plus.v
        + dec.minus.Tmap @ m_minus + p_minus * dec.minus.v
    )


def pointwise_fidelity(r, s) -> float:
    s = _vec3(s)
    if abs(np.linalg.norm(s) - 1.0) > 1e-9:
        raise ValueError("target direction must be a unit vector")
    return 0.5 * (1.0 + float(_vec3(r) @ s))


Decoding = Union[DecodingPair, Callable[[np.ndarray], DecodingPair]]


def _bloch_on_circle(state, frame, strat, dec, n_nodes):
    if n_nodes < 4:
        raise ValueError("n_nodes must be at least 4")
    _, nodes = frame.circle(n_nodes)
    r = np.empty_like(nodes)
    for k, s in enumerate(nodes):
        pair = dec(s) if callable(dec) else dec
        r[k] = final_bloch(state, strat(s), pair)
    return nodes, r


def average_G(state: TwoQubitState, frame: Frame, strat: EncodingStrategy, dec: Decoding,
              n_nodes: int = DEFAULT_NODES) -> float:
    """Trapezoidal circle average of ``r(s) . s``; the mean fidelity is ``(1 + G) / 2``."""
    nodes, r = _bloch_on_circle(state, frame, strat, dec, n_nodes)
    return float(np.mean(np.einsum("ni,ni->n", r, nodes)))


def quadratic_fidelity(state: TwoQubitState, frame: Frame, strat: EncodingStrategy, dec: Decoding,
                       n_nodes: int = DEFAULT_NODES) -> float:
    """Circle average of ``(s . r(s))**2``.  Reported for comparison only."""
    nodes, r = _bloch_on_circle(state, frame, strat, dec, n_nodes)
    return float(np.mean(np.einsum("ni,ni->n", r, nodes) ** 2))


def baseline_protocol(frame: Frame) -> tuple[EncodingStrategy, DecodingPair]:
    """State-independent protocol: Alice sends sign(e1 . s), Bob prepares +e1 or -e1."""

    def strat(s):
        return Encoding.trivial(+1 if s @ frame.e1 >= 0 else -1)

    pair = DecodingPair(DecodingChannel.constant(frame.e1), DecodingChannel.constant(-frame.e1))
    return strat, pair


def random_guess_protocol(frame: Frame) -> tuple[EncodingStrategy, DecodingPair]:
    """Bob ignores the message and prepares a fixed pure state on the circle."""
    pair = DecodingPair(DecodingChannel.constant(frame.e1), DecodingChannel.constant(frame.e1))
    return (lambda s: Encoding.trivial(+1)), pair
