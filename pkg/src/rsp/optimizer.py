"""Maximization of the circle-averaged fidelity over encodings and decodings.

For a fixed decoding pair the best binary POVM is found node by node
(:func:`optimal_G_over_povm`).  Decodings are then searched within a class
and the worst target plane is located by :func:`minimize_over_beta`.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from .bloch import Frame, TwoQubitState, make_frame, require_valid
from .elliptic import elliptic_E
from .protocol import (
    DEFAULT_NODES,
    ChannelClass,
    DecodingChannel,
    DecodingPair,
    Encoding,
    ExtremalChannelParams,
    extremal_channel,
    rotation_about,
)

DEFAULT_BETA_GRID = 1000
SCAN_NODES = 256
BETA_XATOL = 1e-6
Z_HAT = np.array([0.0, 0.0, 1.0])


class OmegaClass(str, enum.Enum):
    OMEGA0 = "omega0"
    OMEGA_PLUS = "omega_plus"
    OMEGA_MINUS = "omega_minus"


@dataclass(frozen=True, eq=False)
class MVQuantities:
    M: np.ndarray
    V_plus: np.ndarray
    V_minus: np.ndarray


@dataclass(frozen=True, eq=False)
class PovmSolution:
    """Per-node data of the optimal encoding for a fixed decoding pair."""

    nodes: np.ndarray
    classes: list
    integrand: np.ndarray


@dataclass(frozen=True, eq=False)
class InvariantChannel:
    """Channel commuting with rotations about ``beta``.

    In the frame ``(beta, e1, e2)`` the linear part is
    ``diag[t_beta, c I + d J]`` with ``J`` the quarter turn ``e1 -> e2``.
    """

    t_beta: float
    c: float
    d: float
    v_beta: float = 0.0

    def to_channel(self, frame: Frame) -> DecodingChannel:
        F = frame.matrix()
        A = np.array([[self.t_beta, 0, 0], [0, self.c, -self.d], [0, self.d, self.c]])
        return DecodingChannel(F @ A @ F.T, self.v_beta * frame.beta, ChannelClass.INVARIANT)


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    G_star: float
    F_star: float
    beta_star: np.ndarray
    node_classes: list
    decoding_params: dict
    decoding: DecodingPair | None = None
    decoding_class: ChannelClass | None = None
    n_nodes: int = DEFAULT_NODES
    extra: dict = field(default_factory=dict)


def worker_count() -> int:
    """Worker cap from ``RSP_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("RSP_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Optimization over Alice's POVM for fixed decodings
# ---------------------------------------------------------------------------

def mv_quantities(state: TwoQubitState, dec: DecodingPair) -> MVQuantities:
    Tp, Tm = dec.plus.Tmap, dec.minus.Tmap
    M = (Tp - Tm) @ state.T.T + np.outer(dec.plus.v - dec.minus.v, state.x)
    return MVQuantities(M, Tp @ state.y + dec.plus.v, Tm @ state.y + dec.minus.v)


def classify_omega(mv: MVQuantities, s) -> OmegaClass:
    lhs = np.linalg.norm(mv.M.T @ s)
    rhs = float((mv.V_plus - mv.V_minus) @ s)
    if lhs >= abs(rhs):
        return OmegaClass.OMEGA0
    return OmegaClass.OMEGA_PLUS if rhs > 0 else OmegaClass.OMEGA_MINUS


def optimal_povm_at(mv: MVQuantities, s) -> Encoding:
    cls = classify_omega(mv, s)
    if cls is OmegaClass.OMEGA_PLUS:
        return Encoding.trivial(+1)
    if cls is OmegaClass.OMEGA_MINUS:
        return Encoding.trivial(-1)
    w = mv.M.T @ s
    norm = np.linalg.norm(w)
    if norm == 0:
        return Encoding(0.5, 0.5, np.zeros(3))
    return Encoding(0.5, 0.5, 0.5 * w / norm)


def _integrand(M, Vp, Vm, nodes):
    """Best pointwise value of ``r(s).s`` over encodings; broadcasts over leading axes.

    The objective is concave and piecewise linear in ``a_plus`` with its kink at
    1/2, so the optimum is one of ``a_plus`` in ``{0, 1/2, 1}``.
    """
    S = nodes.T
    w = np.swapaxes(M, -1, -2) @ S
    f = np.sqrt(np.sum(w * w, axis=-2))
    Ap = Vp @ S
    Am = Vm @ S
    return np.maximum(0.5 * (f + Ap + Am), np.maximum(Ap, Am))


def _batch_G(state, Tp, vp, Tm, vm, nodes):
    M = (Tp - Tm) @ state.T.T + (vp - vm)[:, :, None] * state.x[None, None, :]
    Vp = Tp @ state.y + vp
    Vm = Tm @ state.y + vm
    return _integrand(M, Vp, Vm, nodes).mean(axis=-1)


def _pair_G(state, pair: DecodingPair, nodes) -> float:
    mv = mv_quantities(state, pair)
    return float(_integrand(mv.M, mv.V_plus, mv.V_minus, nodes).mean())


def optimal_G_over_povm(state: TwoQubitState, frame: Frame, dec: DecodingPair,
                        n_nodes: int = DEFAULT_NODES) -> tuple[float, PovmSolution]:
    if n_nodes < 4:
        raise ValueError("n_nodes must be at least 4")
    require_valid(state)
    _, nodes = frame.circle(n_nodes)
    mv = mv_quantities(state, dec)
    values = _integrand(mv.M, mv.V_plus, mv.V_minus, nodes)
    classes = [classify_omega(mv, s) for s in nodes]
    return float(values.mean()), PovmSolution(nodes, classes, values)


def optimal_strategy(state: TwoQubitState, dec: DecodingPair) -> Callable[[np.ndarray], Encoding]:
    """The per-node optimal encoding as an explicit strategy."""
    mv = mv_quantities(state, dec)
    return lambda s: optimal_povm_at(mv, s)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def separable_optimal_fidelity() -> float:
    return 0.5 * (1.0 + 2.0 / math.pi)


def _ellipse_average(small: float, large: float) -> float:
    """``(1/pi) int_0^pi sqrt(small^2 cos^2 + large^2 sin^2)`` for ``small <= large``."""
    if large == 0:
        return 0.0
    q = small / large
    return 2.0 * large / math.pi * elliptic_E(math.sqrt((1.0 - q) * (1.0 + q)))


def optimize_bistochastic_bell_diagonal(t1: float, t2: float, t3: float) -> float:
    """Fidelity of the best protocol whose decodings act on the target plane as +1 and -1.

    Those decodings are the rotations about ``beta`` by 0 and pi.  The worst
    plane is orthogonal to the largest ``|t_i|``, so only the two smallest
    magnitudes enter.  For Bell-diagonal states this also equals the
    invariant-class optimum.
    """
    a, b, _ = sorted(abs(float(t)) for t in (t1, t2, t3))
    return 0.5 * (1.0 + _ellipse_average(a, b))


def optimize_bistochastic_unrestricted(t1: float, t2: float, t3: float) -> float:
    """Optimum over all unital decodings (arbitrary rotation pairs) for ``rho(0, 0, T)``.

    Bob can turn the target circle onto the plane of the two largest
    ``|t_i|``, so the value does not depend on ``beta``.
    """
    _, b, c = sorted(abs(float(t)) for t in (t1, t2, t3))
    return 0.5 * (1.0 + _ellipse_average(b, c))


def invariant_isotropic_G(lam: float, gamma: float) -> float:
    """Invariant-class optimum for ``T = -lam I`` with in-plane ``|y|`` equal to ``gamma``.

    Circle average of ``max(lam, gamma |cos psi|)``.
    """
    lam, gamma = abs(lam), abs(gamma)
    if gamma <= lam:
        return lam
    psi0 = math.acos(lam / gamma)
    return 2.0 / math.pi * (gamma * math.sin(psi0) + lam * (math.pi / 2.0 - psi0))


def twirl_channel(ch: DecodingChannel, frame: Frame) -> InvariantChannel:
    """Average of ``O T O^T`` over rotations ``O`` about ``frame.beta``."""
    F = frame.matrix()
    A = F.T @ ch.Tmap @ F
    c = 0.5 * (A[1, 1] + A[2, 2])
    d = 0.5 * (A[2, 1] - A[1, 2])
    return InvariantChannel(float(A[0, 0]), float(c), float(d), float(frame.beta @ ch.v))


# ---------------------------------------------------------------------------
# Decoding searches at a fixed plane
# ---------------------------------------------------------------------------

def _beta_rotations(beta, angles):
    """Stack of rotations about ``beta``, shape ``(len(angles), 3, 3)``."""
    K = np.array([[0, -beta[2], beta[1]], [beta[2], 0, -beta[0]], [-beta[1], beta[0], 0]])
    P = np.outer(beta, beta)
    angles = np.asarray(angles, dtype=float)
    return (P[None] + np.cos(angles)[:, None, None] * (np.eye(3) - P)[None]
            + np.sin(angles)[:, None, None] * K[None])


@dataclass
class _Inner:
    G: float
    pair: DecodingPair
    params: dict


def _nelder_mead(fun, x0, xatol=1e-9, fatol=1e-13, maxiter=None):
    res = minimize(fun, np.asarray(x0, dtype=float), method="Nelder-Mead",
                   options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter,
                            "maxfev": maxiter, "adaptive": len(x0) > 4})
    return res.x, res.fun


def _max_invariant(state, frame, nodes, grid=16, warm=None, refine=True) -> _Inner:
    # Extreme points of the twirled class with c^2 + d^2 = 1: rotations about beta.
    # The beta-beta entry never meets an in-plane target, so it is set to 1.
    beta = frame.beta
    theta = 2.0 * np.pi * np.arange(grid) / grid
    tp, tm = np.meshgrid(theta, theta, indexing="ij")
    tp, tm = tp.ravel(), tm.ravel()
    if warm is not None:
        tp = np.append(tp, warm[0])
        tm = np.append(tm, warm[1])
    Rp, Rm = _beta_rotations(beta, tp), _beta_rotations(beta, tm)
    zero = np.zeros((len(tp), 3))
    vals = _batch_G(state, Rp, zero, Rm, zero, nodes)
    best = int(np.argmax(vals))
    x, g = np.array([tp[best], tm[best]]), float(vals[best])
    if refine:
        def neg(th):
            R = _beta_rotations(beta, th)
            return -float(_batch_G(state, R[:1], zero[:1], R[1:], zero[:1], nodes)[0])

        x_nm, f_nm = _nelder_mead(neg, x, xatol=1e-10, maxiter=400)
        if -f_nm > g:
            x, g = x_nm, -f_nm
    Rp, Rm = _beta_rotations(beta, x)
    pair = DecodingPair(DecodingChannel(Rp, np.zeros(3), ChannelClass.INVARIANT),
                        DecodingChannel(Rm, np.zeros(3), ChannelClass.INVARIANT))
    params = {"theta_plus": float(x[0] % (2 * np.pi)), "theta_minus": float(x[1] % (2 * np.pi)),
              "c_plus": float(np.cos(x[0])), "d_plus": float(np.sin(x[0])),
              "c_minus": float(np.cos(x[1])), "d_minus": float(np.sin(x[1])), "t_beta": 1.0}
    return _Inner(g, pair, params)


def _rotation_to(d):
    """A rotation taking ``z`` to the unit vector ``d``."""
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    axis = np.cross(Z_HAT, d)
    sin_a = np.linalg.norm(axis)
    if sin_a < 1e-12:
        return np.eye(3) if d[2] > 0 else np.diag([1.0, -1.0, -1.0])
    return Rotation.from_rotvec(axis / sin_a * math.atan2(sin_a, d[2])).as_matrix()


def _top_plane_rotation(state, frame):
    """Rotation ``Q`` with ``Q^T`` taking ``(e1, e2)`` onto the top right-singular plane of ``T``."""
    _, _, Vh = np.linalg.svd(state.T)
    w_top, w_mid = Vh[0], Vh[1]
    Qt = (np.outer(w_top, frame.e1) + np.outer(w_mid, frame.e2)
          + np.outer(np.cross(w_top, w_mid), frame.beta))
    return Qt.T


def _bistochastic_candidates(state, frame):
    beta = frame.beta
    flip = rotation_about(beta, np.pi)
    Q = _top_plane_rotation(state, frame)
    n = Q.T @ beta
    cands = [
        (np.eye(3), flip),
        (Q, Q @ rotation_about(n, np.pi)),
        (np.eye(3), np.eye(3)),
    ]
    inv = _max_invariant(state, frame, frame.circle(64)[1], grid=12, refine=False)
    cands.append((inv.pair.plus.Tmap, inv.pair.minus.Tmap))
    return cands


def _rotvec(R):
    return Rotation.from_matrix(R).as_rotvec()


def _rotmat(rv):
    return Rotation.from_rotvec(rv).as_matrix()


def _max_bistochastic(state, frame, nodes, warm=None, refine=True, maxiter=3000) -> _Inner:
    cands = _bistochastic_candidates(state, frame)
    if warm is not None:
        cands.append(warm)
    Tp = np.stack([c[0] for c in cands])
    Tm = np.stack([c[1] for c in cands])
    zero = np.zeros((len(cands), 3))
    vals = _batch_G(state, Tp, zero, Tm, zero, nodes)
    order = np.argsort(-vals)
    best_g, best = float(vals[order[0]]), cands[order[0]]
    if refine:
        z1 = np.zeros((1, 3))

        def neg(p):
            return -float(_batch_G(state, _rotmat(p[:3])[None], z1, _rotmat(p[3:])[None], z1, nodes)[0])

        for idx in order[:2]:
            p0 = np.concatenate([_rotvec(cands[idx][0]), _rotvec(cands[idx][1])])
            x, f = _nelder_mead(neg, p0, xatol=1e-9, maxiter=maxiter)
            if -f > best_g:
                best_g, best = -f, (_rotmat(x[:3]), _rotmat(x[3:]))
    pair = DecodingPair(DecodingChannel.rotation(best[0]), DecodingChannel.rotation(best[1]))
    return _Inner(best_g, pair, {"O_plus": best[0].tolist(), "O_minus": best[1].tolist()})


def _extremal_from_vector(p):
    return ExtremalChannelParams(p[0], p[1], _rotmat(p[2:5]), _rotmat(p[5:8]))


def _extremal_half(p):
    # Same map as extremal_channel(_extremal_from_vector(p)) without the validation overhead.
    O1, O2 = _rotmat(p[2:5]), _rotmat(p[5:8])
    cu, cw = math.cos(p[0]), math.cos(p[1])
    T = (O1 * np.array([cu, cw, cu * cw])) @ O2.T
    return T, O1[:, 2] * (math.sin(p[0]) * math.sin(p[1]))


def _extremal_arrays(p):
    Tp, vp = _extremal_half(p[:8])
    Tm, vm = _extremal_half(p[8:])
    return Tp, vp, Tm, vm


def _rotation_params(R):
    # u = w = 0 gives T0 = I, v0 = 0.
    return np.concatenate([[0.0, 0.0], _rotvec(R), np.zeros(3)])


def _constant_params(d):
    # u = w = pi/2 gives T0 = 0, v0 = z.
    return np.concatenate([[np.pi / 2, np.pi / 2], _rotvec(_rotation_to(d)), np.zeros(3)])


def _max_general(state, frame, nodes, warm=None, refine=True, maxiter=4000) -> _Inner:
    e1, e2 = frame.e1, frame.e2
    cands = [
        np.concatenate([_constant_params(e1), _constant_params(-e1)]),
        np.concatenate([_constant_params(e2), _constant_params(-e2)]),
    ]
    for Rp, Rm in _bistochastic_candidates(state, frame):
        cands.append(np.concatenate([_rotation_params(Rp), _rotation_params(Rm)]))
    if warm is not None:
        cands.append(np.asarray(warm, dtype=float))
    arrays = [_extremal_arrays(p) for p in cands]
    Tp, vp, Tm, vm = (np.stack(a) for a in zip(*arrays))
    vals = _batch_G(state, Tp, vp, Tm, vm, nodes)
    order = np.argsort(-vals)
    best_g, best = float(vals[order[0]]), cands[order[0]]
    if refine:
        def neg(p):
            a = _extremal_arrays(p)
            return -float(_batch_G(state, a[0][None], a[1][None], a[2][None], a[3][None], nodes)[0])

        for idx in order[:2]:
            x, f = _nelder_mead(neg, cands[idx], xatol=1e-8, maxiter=maxiter)
            if -f > best_g:
                best_g, best = -f, x
    Tp, vp, Tm, vm = _extremal_arrays(best)
    pair = DecodingPair(DecodingChannel(Tp, vp), DecodingChannel(Tm, vm))
    params = {}
    for name, p in (("plus", best[:8]), ("minus", best[8:])):
        ep = _extremal_from_vector(p)
        params[name] = {"u": float(ep.u % (2 * np.pi)), "w": float(ep.w),
                        "O1": ep.O1.tolist(), "O2": ep.O2.tolist()}
    params["vector"] = best.tolist()
    return _Inner(best_g, pair, params)


_INNER = {
    ChannelClass.INVARIANT: _max_invariant,
    ChannelClass.BISTOCHASTIC: _max_bistochastic,
    ChannelClass.GENERAL: _max_general,
}


def _warm_value(cls, inner: _Inner):
    if cls is ChannelClass.INVARIANT:
        return (inner.params["theta_plus"], inner.params["theta_minus"])
    if cls is ChannelClass.BISTOCHASTIC:
        return (inner.pair.plus.Tmap, inner.pair.minus.Tmap)
    return inner.params["vector"]


def max_over_decodings(state: TwoQubitState, frame: Frame, decoding_class,
                       n_nodes: int = DEFAULT_NODES) -> tuple[float, DecodingPair, dict]:
    """Best ``G`` at a fixed plane over decodings in ``decoding_class``.

    Exact for the invariant class up to the angular search; a lower bound from
    a local search for the other classes.
    """
    require_valid(state)
    cls = ChannelClass(decoding_class)
    inner = _INNER[cls](state, frame, frame.circle(n_nodes)[1])
    return inner.G, inner.pair, inner.params


# ---------------------------------------------------------------------------
# Worst plane
# ---------------------------------------------------------------------------

def fibonacci_half_sphere(n: int) -> np.ndarray:
    """``n`` quasi-uniform unit vectors with ``z > 0`` (one per antipodal pair)."""
    i = np.arange(n)
    z = (i + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _sph(p):
    th, ph = p
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def _sph_angles(b):
    return np.array([math.acos(max(-1.0, min(1.0, b[2]))), math.atan2(b[1], b[0])])


def minimize_over_beta(state: TwoQubitState, decoding_class, n_beta: int = DEFAULT_BETA_GRID,
                       n_nodes: int = DEFAULT_NODES, scan_nodes: int = SCAN_NODES,
                       n_refine: int = 2) -> OptimizationResult:
    """Worst target plane for the best protocol in ``decoding_class``.

    A half-sphere grid is scanned with a cheap inner search; the ``n_refine``
    lowest grid points are polished by Nelder-Mead on the polar angles, and the
    final values are recomputed at ``n_nodes``.
    """
    if n_beta < 32:
        raise ValueError("n_beta must be at least 32")
    require_valid(state)
    cls = ChannelClass(decoding_class)
    inner_fn = _INNER[cls]
    betas = fibonacci_half_sphere(n_beta)
    # Local decoding polish is cheap only for the two-angle invariant search.
    polish = cls is ChannelClass.INVARIANT

    def coarse(b, warm=None, refine=False):
        fr = make_frame(b)
        return inner_fn(state, fr, fr.circle(scan_nodes)[1], warm=warm, refine=refine)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scan = list(pool.map(coarse, betas))
    else:
        scan = [coarse(b) for b in betas]
    scan_vals = np.array([s.G for s in scan])

    candidates = []
    for idx in np.argsort(scan_vals, kind="stable")[:n_refine]:
        warm = [_warm_value(cls, scan[idx])]
        best = [scan[idx].G, betas[idx]]

        def objective(p):
            b = _sph(p)
            inner = coarse(b, warm=warm[0], refine=polish)
            if inner.G < best[0]:
                best[0], best[1] = inner.G, b
                warm[0] = _warm_value(cls, inner)
            return inner.G

        _nelder_mead(objective, _sph_angles(betas[idx]), xatol=BETA_XATOL, fatol=1e-12, maxiter=200)
        candidates.append((betas[idx], _warm_value(cls, scan[idx])))
        candidates.append((best[1], warm[0]))

    evaluated = []
    for b, warm in candidates:
        fr = make_frame(b)
        evaluated.append((fr, inner_fn(state, fr, fr.circle(n_nodes)[1], warm=warm)))
    evaluated = [(inner.G, fr, inner) for fr, inner in evaluated]
    G_star, frame, inner = min(evaluated, key=lambda e: e[0])
    _, nodes = frame.circle(n_nodes)
    mv = mv_quantities(state, inner.pair)
    node_classes = [classify_omega(mv, s) for s in nodes]
    return OptimizationResult(
        G_star=float(G_star),
        F_star=0.5 * (1.0 + float(G_star)),
        beta_star=frame.beta,
        node_classes=node_classes,
        decoding_params=inner.params,
        decoding=inner.pair,
        decoding_class=cls,
        n_nodes=n_nodes,
        extra={"n_beta": n_beta, "scan_min": float(scan_vals.min()), "scan_max": float(scan_vals.max())},
    )


def optimize_invariant(state: TwoQubitState, n_nodes: int = DEFAULT_NODES,
                       beta_grid: int = DEFAULT_BETA_GRID) -> OptimizationResult:
    return minimize_over_beta(state, ChannelClass.INVARIANT, n_beta=beta_grid, n_nodes=n_nodes)


def mixing_family_states(lam: float, y_norm: float, alphas, beta=Z_HAT, u_hat=(1.0, 0.0, 0.0), x=(0.0, 0.0, 0.0)):
    """States ``rho(x, y_alpha, -lam I)`` with ``y_alpha = |y| (alpha u + sqrt(1 - alpha^2) beta)``."""
    beta = np.asarray(beta, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float)
    out = []
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha={a} outside [0, 1]")
        y = y_norm * (a * u_hat + math.sqrt(1.0 - a * a) * beta)
        out.append(TwoQubitState(np.asarray(x, dtype=float), y, -lam * np.eye(3)))
    return out


def fact1_monotonicity_scan(lam: float, y_norm: float, alphas, n_nodes: int = DEFAULT_NODES,
                            beta=Z_HAT, u_hat=(1.0, 0.0, 0.0), x=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Invariant-class optimum at the fixed plane ``beta`` for each ``alpha``.

    Every state is scored against the union of the decodings found for all
    states, so each entry is a maximum over one common candidate pool.
    """
    states = mixing_family_states(lam, y_norm, alphas, beta, u_hat, x)
    for st in states:
        require_valid(st)
    b = np.asarray(beta, dtype=float)
    u = np.asarray(u_hat, dtype=float)
    if abs(b @ u) > 1e-12:
        raise ValueError("u_hat must be orthogonal to beta")
    frame = Frame(b, u, np.cross(b, u))
    nodes = frame.circle(n_nodes)[1]
    found = [_max_invariant(st, frame, nodes) for st in states]
    th = np.array([[f.params["theta_plus"], f.params["theta_minus"]] for f in found])
    Rp, Rm = _beta_rotations(frame.beta, th[:, 0]), _beta_rotations(frame.beta, th[:, 1])
    zero = np.zeros((len(th), 3))
    return np.array([float(_batch_G(st, Rp, zero, Rm, zero, nodes).max()) for st in states])
