"""Brute-force reference for the averaged fidelity.

Everything here is a plain grid search: decodings come from finite families
of channels, and at every quadrature node the encoding is chosen from a
finite candidate list by direct evaluation of Bob's final Bloch vector.  No
part of the per-node optimum formula is reused, which makes the module a
check on :mod:`rsp.optimizer` rather than a copy of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .bloch import Frame, TwoQubitState, is_bell_diagonal, is_entangled, make_frame, require_valid
from .optimizer import (
    optimize_bistochastic_bell_diagonal,
    optimize_bistochastic_unrestricted,
    separable_optimal_fidelity,
)
from .protocol import (
    ChannelClass,
    DecodingChannel,
    DecodingPair,
    Encoding,
    ExtremalChannelParams,
    extremal_channel,
    validate_channel_cptp,
)

_CHUNK = 64


@dataclass(frozen=True)
class SearchConfig:
    povm_angle_steps: int = 16
    povm_norm_steps: int = 4
    channel_u_steps: int = 8
    channel_w_steps: int = 8
    rotation_steps: int = 4
    beta_steps: int = 8
    n_nodes: int = 64
    seed: int = 0
    naive: bool = False
    general_samples: int = 2048

    def __post_init__(self):
        for name in ("povm_angle_steps", "povm_norm_steps", "channel_u_steps",
                     "channel_w_steps", "rotation_steps", "beta_steps"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2")
        if self.povm_angle_steps % 2 or self.rotation_steps % 2:
            raise ValueError("angle step counts must be even")
        if self.n_nodes < 4:
            raise ValueError("n_nodes must be at least 4")
        if self.general_samples < 0:
            raise ValueError("general_samples must be non-negative")

    def refined(self) -> "SearchConfig":
        """Every grid doubled.  Grids are nested, so the searched sets only grow.

        The quadrature is kept fixed so that results stay comparable.
        """
        return replace(
            self,
            povm_angle_steps=2 * self.povm_angle_steps,
            povm_norm_steps=2 * self.povm_norm_steps,
            channel_u_steps=2 * self.channel_u_steps,
            channel_w_steps=2 * self.channel_w_steps,
            rotation_steps=2 * self.rotation_steps,
            beta_steps=2 * self.beta_steps,
            general_samples=2 * self.general_samples,
        )


@dataclass
class OracleResult:
    G_best: float
    pair: DecodingPair
    n_decodings: int
    n_encodings: int

    @property
    def F_best(self) -> float:
        return 0.5 * (1.0 + self.G_best)


@dataclass
class ClosedFormReport:
    label: str
    oracle_G: float
    closed_G: float
    gap: float
    one_sided: bool
    ladder_gaps: list
    monotone: bool
    exact: bool
    beta: np.ndarray

    @property
    def oracle_F(self) -> float:
        return 0.5 * (1.0 + self.oracle_G)

    @property
    def closed_F(self) -> float:
        return 0.5 * (1.0 + self.closed_G)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def sphere_grid(frame: Frame, steps: int) -> np.ndarray:
    """Directions at polar angles ``2 pi i / steps`` from ``beta`` and azimuths ``2 pi j / steps``.

    Poles appear once.  Doubling ``steps`` gives a superset.
    """
    out = [frame.beta, -frame.beta]
    for i in range(1, steps // 2):
        th = 2.0 * math.pi * i / steps
        for j in range(steps):
            ph = 2.0 * math.pi * j / steps
            out.append(math.cos(th) * frame.beta
                       + math.sin(th) * (math.cos(ph) * frame.e1 + math.sin(ph) * frame.e2))
    return np.array(out)


def rotation_grid(frame: Frame, steps: int) -> np.ndarray:
    """Distinct proper rotations with ZYZ Euler angles on multiples of ``2 pi / steps``.

    The angles refer to the frame ``(e1, e2, beta)``.  With ``steps = 4`` this is
    the 24-element rotation group of the cube.
    """
    ang = 2.0 * math.pi * np.arange(steps) / steps
    mid = ang[ang <= math.pi + 1e-12]
    euler = np.array([(a, b, c) for a in ang for b in mid for c in ang])
    local = Rotation.from_euler("ZYZ", euler).as_matrix()
    basis = np.column_stack([frame.e1, frame.e2, frame.beta])
    lab = basis[None] @ local @ basis.T[None]
    seen, keep = set(), []
    for k, R in enumerate(lab):
        key = tuple(np.round(R, 9).ravel() + 0.0)
        if key not in seen:
            seen.add(key)
            keep.append(k)
    return lab[keep]


def _encoding_candidates(frame: Frame, cfg: SearchConfig):
    """Arrays ``(a_plus, a_minus, a)`` listing the encodings tried at every node."""
    dirs = sphere_grid(frame, cfg.povm_angle_steps)
    if cfg.naive:
        rows = []
        for ap in np.linspace(0.0, 1.0, 2 * cfg.povm_norm_steps + 1):
            amax = min(ap, 1.0 - ap)
            rows.append((ap, np.zeros(3)))
            if amax > 0:
                for frac in np.arange(1, cfg.povm_norm_steps + 1) / cfg.povm_norm_steps:
                    rows.extend((ap, frac * amax * d) for d in dirs)
        ap = np.array([r[0] for r in rows])
        a = np.array([r[1] for r in rows])
    else:
        # a_plus in {0, 1/2, 1}, |a| in {0, min(a_plus, a_minus)}.
        ap = np.concatenate([[1.0, 0.0, 0.5], np.full(len(dirs), 0.5)])
        a = np.vstack([np.zeros((3, 3)), 0.5 * dirs])
    return ap, 1.0 - ap, a


# ---------------------------------------------------------------------------
# Decoding families
# ---------------------------------------------------------------------------

def _invariant_family(frame: Frame, cfg: SearchConfig):
    """Channels ``diag[1, c I + d J]`` in the frame, for ``(c, d)`` on a square grid in the unit disk.

    The entry along ``beta`` and any shift along ``beta`` never meet an
    in-plane target, so they are fixed at 1 and 0.
    """
    F = frame.matrix()
    grid = np.linspace(-1.0, 1.0, cfg.channel_u_steps + 1)
    mats = []
    for c in grid:
        for d in grid:
            A = np.array([[1.0, 0, 0], [0, c, -d], [0, d, c]])
            ch = DecodingChannel(F @ A @ F.T, np.zeros(3), ChannelClass.INVARIANT)
            if validate_channel_cptp(ch).valid:
                mats.append(ch.Tmap)
    mats = np.array(mats)
    idx = np.arange(len(mats))
    ip, im = (g.ravel() for g in np.meshgrid(idx, idx, indexing="ij"))
    zero = np.zeros((len(ip), 3))
    return mats[ip], zero, mats[im], zero


def _bistochastic_family(frame: Frame, cfg: SearchConfig):
    rots = rotation_grid(frame, cfg.rotation_steps)
    idx = np.arange(len(rots))
    ip, im = (g.ravel() for g in np.meshgrid(idx, idx, indexing="ij"))
    zero = np.zeros((len(ip), 3))
    return rots[ip], zero, rots[im], zero


def _random_extremal(seed: int, index: int) -> ExtremalChannelParams:
    # One generator per sample keeps the sample list prefix-stable as it grows.
    rng = np.random.default_rng([seed, index])
    u, w = rng.uniform(0.0, 2.0 * math.pi, size=2)
    O1, O2 = Rotation.random(2, random_state=rng).as_matrix()
    return ExtremalChannelParams(u, w, O1, O2)


def _general_family(frame: Frame, cfg: SearchConfig):
    Tp, vp, Tm, vm = (list(a) for a in _bistochastic_family(frame, cfg))
    # Constant channels (u = w = pi/2 in the extremal form) on a direction grid.
    steps = max(cfg.channel_u_steps, cfg.channel_w_steps)
    dirs = sphere_grid(frame, steps)
    zero = np.zeros((3, 3))
    for dp in dirs:
        for dm in dirs:
            Tp.append(zero)
            vp.append(dp)
            Tm.append(zero)
            vm.append(dm)
    for k in range(cfg.general_samples):
        chp = extremal_channel(_random_extremal(cfg.seed, 2 * k))
        chm = extremal_channel(_random_extremal(cfg.seed, 2 * k + 1))
        Tp.append(chp.Tmap)
        vp.append(chp.v)
        Tm.append(chm.Tmap)
        vm.append(chm.v)
    return tuple(np.array(a) for a in (Tp, vp, Tm, vm))


_FAMILIES = {
    ChannelClass.INVARIANT: _invariant_family,
    ChannelClass.BISTOCHASTIC: _bistochastic_family,
    ChannelClass.GENERAL: _general_family,
}


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _scores(state, Tp, vp, Tm, vm, ap, am, a, nodes):
    """``G`` for each decoding in the batch, best encoding chosen per node."""
    Ta = a @ state.T               # rows are T^T a
    ax = a @ state.x
    p_plus, p_minus = ap + ax, am - ax
    m_plus = ap[:, None] * state.y + Ta     # unnormalized conditional Bloch vectors
    m_minus = am[:, None] * state.y - Ta
    # r[k, e] = T+ m+ + p+ v+ + T- m- + p- v-
    r = (np.einsum("kij,ej->kei", Tp, m_plus) + p_plus[None, :, None] * vp[:, None, :]
         + np.einsum("kij,ej->kei", Tm, m_minus) + p_minus[None, :, None] * vm[:, None, :])
    return (r @ nodes.T).max(axis=1).mean(axis=-1)


def _search(state, frame, family, cfg) -> OracleResult:
    Tp, vp, Tm, vm = family
    ap, am, a = _encoding_candidates(frame, cfg)
    _, nodes = frame.circle(cfg.n_nodes)
    vals = np.concatenate([
        _scores(state, Tp[i:i + _CHUNK], vp[i:i + _CHUNK], Tm[i:i + _CHUNK], vm[i:i + _CHUNK],
                ap, am, a, nodes)
        for i in range(0, len(Tp), _CHUNK)
    ])
    best = int(np.argmax(vals))
    pair = DecodingPair(DecodingChannel(Tp[best], vp[best]), DecodingChannel(Tm[best], vm[best]))
    return OracleResult(float(vals[best]), pair, len(Tp), len(ap))


def brute_force_max_G(state: TwoQubitState, frame: Frame, decoding_class,
                      cfg: SearchConfig = SearchConfig()) -> OracleResult:
    """Largest ``G`` over the class grid of decodings and the per-node encoding grid."""
    require_valid(state)
    cls = ChannelClass(decoding_class)
    return _search(state, frame, _FAMILIES[cls](frame, cfg), cfg)


def brute_force_G_fixed_decoding(state: TwoQubitState, frame: Frame, dec: DecodingPair,
                                 cfg: SearchConfig = SearchConfig()) -> float:
    require_valid(state)
    family = tuple(np.array([m]) for m in (dec.plus.Tmap, dec.plus.v, dec.minus.Tmap, dec.minus.v))
    return _search(state, frame, family, cfg).G_best


def brute_force_min_over_beta(state: TwoQubitState, decoding_class,
                              cfg: SearchConfig = SearchConfig()) -> tuple[float, np.ndarray]:
    """Smallest oracle value over ``beta`` on a half-sphere grid.  Reported only.

    Each entry is a lower bound at its own plane, so the minimum is not a
    bound on the true worst-plane value in either direction.
    """
    ref = Frame(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    betas = [b for b in sphere_grid(ref, cfg.beta_steps) if b[2] > 1e-12 or
             (abs(b[2]) <= 1e-12 and (b[1] > 1e-12 or (abs(b[1]) <= 1e-12 and b[0] > 0)))]
    vals = [brute_force_max_G(state, make_frame(b), decoding_class, cfg).G_best for b in betas]
    k = int(np.argmin(vals))
    return float(vals[k]), np.asarray(betas[k])


# ---------------------------------------------------------------------------
# Random strategies
# ---------------------------------------------------------------------------

def random_encoding(rng: np.random.Generator) -> Encoding:
    ap = rng.uniform()
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    norm = min(ap, 1.0 - ap) * rng.uniform() ** (1.0 / 3.0)
    return Encoding(ap, 1.0 - ap, norm * d)


def random_channel(rng: np.random.Generator, decoding_class, frame: Frame | None = None) -> DecodingChannel:
    """A CPTP channel of the class.

    General: mixture of two random extremal channels.  Bistochastic: rotations
    around a point of the tetrahedron of unital singular values.  Invariant:
    rotation average about ``frame.beta`` of a general channel.
    """
    cls = ChannelClass(decoding_class)
    if cls is ChannelClass.BISTOCHASTIC:
        corners = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
        lam = rng.dirichlet(np.ones(4)) @ corners
        O1, O2 = Rotation.random(2, random_state=rng).as_matrix()
        return DecodingChannel.rotation((O1 * lam) @ O2.T)
    parts = []
    for _ in range(2):
        u, w = rng.uniform(0.0, 2.0 * math.pi, size=2)
        O1, O2 = Rotation.random(2, random_state=rng).as_matrix()
        parts.append(extremal_channel(ExtremalChannelParams(u, w, O1, O2)))
    q = rng.uniform()
    Tmap = q * parts[0].Tmap + (1 - q) * parts[1].Tmap
    v = q * parts[0].v + (1 - q) * parts[1].v
    if cls is ChannelClass.GENERAL:
        return DecodingChannel(Tmap, v)
    if frame is None:
        frame = make_frame(rng.normal(size=3))
    F = frame.matrix()
    A = F.T @ Tmap @ F
    c, d = 0.5 * (A[1, 1] + A[2, 2]), 0.5 * (A[2, 1] - A[1, 2])
    B = np.array([[A[0, 0], 0, 0], [0, c, -d], [0, d, c]])
    return DecodingChannel(F @ B @ F.T, (frame.beta @ v) * frame.beta, ChannelClass.INVARIANT)


def random_strategy_sample(rng_seed: int, decoding_class, frame: Frame | None = None):
    """A random encoding strategy and decoding pair, reproducible from ``rng_seed``.

    The strategy draws its encoding from a generator keyed by the seed and
    the target direction, so it is a fixed function of ``s``.
    """
    rng = np.random.default_rng(rng_seed)
    pair = DecodingPair(random_channel(rng, decoding_class, frame),
                        random_channel(rng, decoding_class, frame))

    def strategy(s):
        key = np.round(np.asarray(s, dtype=float) * 2**20).astype(np.int64) % (2**31)
        return random_encoding(np.random.default_rng([rng_seed, *key.tolist()]))

    return strategy, pair


# ---------------------------------------------------------------------------
# Closed-form comparison
# ---------------------------------------------------------------------------

def discrete_baseline_G(n_nodes: int) -> float:
    """Largest ``mean_k |e . s_k|`` over ``e`` for ``n_nodes`` equally spaced nodes (even count).

    This is the separable optimum for the discretized circle; it tends to
    ``2 / pi`` from above.
    """
    if n_nodes % 2:
        raise ValueError("n_nodes must be even")
    return 2.0 / n_nodes / math.sin(math.pi / n_nodes)


def _closed_form(state: TwoQubitState, cls: ChannelClass, n_nodes: int):
    """``(label, G, beta, exact)`` for the supported pairs."""
    T = state.T
    if cls is ChannelClass.INVARIANT:
        tau = T[0, 0]
        if np.allclose(T, tau * np.eye(3), atol=1e-12):
            y = state.y
            beta = y / np.linalg.norm(y) if np.linalg.norm(y) > 1e-12 else np.array([0.0, 0.0, 1.0])
            return "isotropic/invariant", abs(tau), beta, True
        if is_bell_diagonal(state):
            t = np.diag(T)
            beta = np.eye(3)[int(np.argmax(np.abs(t)))]
            G = 2.0 * optimize_bistochastic_bell_diagonal(*t) - 1.0
            return "bell-diagonal/invariant", G, beta, True
    if cls is ChannelClass.BISTOCHASTIC and is_bell_diagonal(state):
        t = np.diag(T)
        beta = np.eye(3)[int(np.argmax(np.abs(t)))]
        return "bell-diagonal/bistochastic", 2.0 * optimize_bistochastic_unrestricted(*t) - 1.0, beta, True
    if cls is ChannelClass.GENERAL:
        beta = np.array([0.0, 0.0, 1.0])
        if not is_entangled(state):
            return "separable/general", discrete_baseline_G(n_nodes), beta, True
        # Entangled states may beat the baseline; it is only a reference here.
        return "entangled/general", 2.0 * separable_optimal_fidelity() - 1.0, beta, False
    raise ValueError(f"no closed form for class {cls.value} on this state")


def compare_with_closed_form(state: TwoQubitState, decoding_class,
                             cfg: SearchConfig = SearchConfig(), ladder: int = 1) -> ClosedFormReport:
    """Oracle against the analytic value at the analytic worst plane.

    ``ladder`` extra runs each double every grid; the gap sequence is
    reported together with whether it is non-increasing.  For the separable
    General case the reference is the discretized baseline, which bounds
    every protocol on the same nodes.
    """
    require_valid(state)
    cls = ChannelClass(decoding_class)
    label, closed, beta, exact = _closed_form(state, cls, cfg.n_nodes)
    frame = make_frame(beta)
    gaps, values = [], []
    level = cfg
    for _ in range(ladder + 1):
        g = brute_force_max_G(state, frame, cls, level).G_best
        values.append(g)
        gaps.append(closed - g)
        level = level.refined()
    monotone = all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    one_sided = all(v <= closed + 1e-9 for v in values) if exact else True
    return ClosedFormReport(label, values[0], closed, gaps[0], one_sided, gaps, monotone, exact, frame.beta)


# ---------------------------------------------------------------------------
# Quadratic figure of merit for the reflection protocol class
# ---------------------------------------------------------------------------

def reflection_protocol_quadratic(state: TwoQubitState, frame: Frame,
                                  cfg: SearchConfig = SearchConfig()) -> float:
    """Best circle average of ``(s . r)**2`` with projective encodings and decodings ``I`` / ``R_beta(pi)``.

    The second decoding acts as the identity along ``beta`` and as ``-1`` on
    the target plane.  The measurement direction is chosen per node from the
    direction grid, and the nodes are the in-plane grid directions.
    """
    require_valid(state)
    flip = 2.0 * np.outer(frame.beta, frame.beta) - np.eye(3)
    dirs = sphere_grid(frame, cfg.povm_angle_steps)
    a = 0.5 * dirs
    # Both decodings are unital, so only the unnormalized conditional vectors enter.
    m_plus = 0.5 * state.y + a @ state.T
    m_minus = 0.5 * state.y - a @ state.T
    r = m_plus + m_minus @ flip.T
    _, nodes = frame.circle(cfg.povm_angle_steps)
    return float(((r @ nodes.T) ** 2).max(axis=0).mean())


def reflection_protocol_quadratic_min(state: TwoQubitState,
                                      cfg: SearchConfig = SearchConfig()) -> tuple[float, np.ndarray]:
    """Worst plane of :func:`reflection_protocol_quadratic` over a half-sphere grid."""
    ref = Frame(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    betas = [b for b in sphere_grid(ref, cfg.beta_steps) if b[2] >= -1e-12]
    vals = [reflection_protocol_quadratic(state, make_frame(b), cfg) for b in betas]
    k = int(np.argmin(vals))
    return float(vals[k]), np.asarray(betas[k])
