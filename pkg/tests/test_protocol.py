import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from conftest import random_state
from rsp.bloch import I2, PAULI, Frame, TwoQubitState, make_frame, to_density_matrix, werner
from rsp.oracle import random_channel, random_encoding
from rsp.protocol import (
    ChannelClass,
    DecodingChannel,
    DecodingPair,
    Encoding,
    ExtremalChannelParams,
    InvalidChannelError,
    InvalidEncodingError,
    apply_channel,
    average_G,
    baseline_protocol,
    choi_matrix,
    extremal_channel,
    final_bloch,
    outcome_probabilities,
    pointwise_fidelity,
    post_measurement_bloch,
    povm_elements,
    quadratic_fidelity,
    random_guess_protocol,
    require_cptp,
    rotation_about,
    validate_channel_cptp,
)


def bloch_of(op):
    return np.array([np.trace(op @ P).real for P in PAULI])


def apply_via_choi(ch, X):
    """``Lambda(X) = Tr_1[(X^T (x) I) J]``."""
    J = choi_matrix(ch)
    M = (np.kron(X.T, I2) @ J).reshape(2, 2, 2, 2)
    return np.einsum("ijik->jk", M)


def simulate(state, enc, pair):
    """Bob's final Bloch vector from density matrices alone."""
    rho = to_density_matrix(state)
    Mp, Mm = povm_elements(enc)
    out = np.zeros((2, 2), dtype=complex)
    for M, ch in ((Mp, pair.plus), (Mm, pair.minus)):
        bob = np.einsum("ijik->jk", (np.kron(M, I2) @ rho).reshape(2, 2, 2, 2))
        out += apply_via_choi(ch, bob)
    return bloch_of(out)


# -- encodings -------------------------------------------------------------

def test_encoding_constraints():
    Encoding(0.3, 0.7, [0.3, 0, 0])
    with pytest.raises(InvalidEncodingError):
        Encoding(0.3, 0.6, [0, 0, 0])
    with pytest.raises(InvalidEncodingError):
        Encoding(0.3, 0.7, [0.31, 0, 0])
    with pytest.raises(InvalidEncodingError):
        Encoding(1.2, -0.2, [0, 0, 0])


def test_encoding_constructors():
    e = Encoding.von_neumann([0, 0, 3])
    assert np.allclose(e.a, [0, 0, 0.5])
    assert Encoding.trivial(+1).a_plus == 1.0 and Encoding.trivial(-1).a_minus == 1.0


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_povm_is_valid(ap, frac, ph, th):
    d = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    enc = Encoding(ap, 1 - ap, frac * min(ap, 1 - ap) * d)
    Mp, Mm = povm_elements(enc)
    assert np.allclose(Mp + Mm, I2)
    assert np.linalg.eigvalsh(Mp)[0] >= -1e-12
    assert np.linalg.eigvalsh(Mm)[0] >= -1e-12


def test_random_povm_decomposes(rng):
    for _ in range(200):
        A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        P = A @ A.conj().T
        Mp = P / (np.linalg.eigvalsh(P)[-1] * (1 + rng.uniform()))
        ap = np.trace(Mp).real / 2
        enc = Encoding(ap, 1 - ap, bloch_of(Mp) / 2)
        assert np.allclose(povm_elements(enc)[0], Mp)


def test_probabilities_match_density_matrix(rng):
    for _ in range(20):
        s, enc = random_state(rng), random_encoding(rng)
        rho = to_density_matrix(s)
        Mp, _ = povm_elements(enc)
        assert outcome_probabilities(s, enc)[0] == pytest.approx(np.trace(np.kron(Mp, I2) @ rho).real)


def test_post_measurement_matches_density_matrix(rng):
    for _ in range(20):
        s = random_state(rng)
        enc = random_encoding(rng)
        rho = to_density_matrix(s)
        pm = post_measurement_bloch(s, enc)
        for M, n, p in zip(povm_elements(enc), (pm.n_plus, pm.n_minus), (pm.p_plus, pm.p_minus)):
            bob = np.einsum("ijik->jk", (np.kron(M, I2) @ rho).reshape(2, 2, 2, 2))
            assert np.allclose(n, bloch_of(bob) / p, atol=1e-10)


def test_zero_weight_branch():
    pm = post_measurement_bloch(werner(0.3), Encoding.trivial(+1))
    assert pm.n_minus is None and pm.p_minus == 0.0


# -- channels --------------------------------------------------------------

def test_identity_choi_is_maximally_entangled():
    J = choi_matrix(DecodingChannel.identity())
    phi = np.array([1, 0, 0, 1])
    assert np.allclose(J, np.outer(phi, phi))


def test_transpose_is_not_cp():
    ch = DecodingChannel(np.diag([1.0, -1.0, 1.0]), np.zeros(3))
    rep = validate_channel_cptp(ch)
    assert not rep.valid and rep.min_eigenvalue == pytest.approx(-1.0)
    with pytest.raises(InvalidChannelError):
        require_cptp(ch)


def test_shifted_identity_not_cptp():
    assert not validate_channel_cptp(DecodingChannel(np.eye(3), [0, 0, 0.1])).valid


def test_bistochastic_requires_zero_shift():
    with pytest.raises(InvalidChannelError):
        DecodingChannel(np.eye(3) * 0.5, [0, 0, 0.1], ChannelClass.BISTOCHASTIC)


def test_pair_tags_must_agree():
    with pytest.raises(InvalidChannelError):
        DecodingPair(DecodingChannel.identity(), DecodingChannel.constant([0, 0, 1]))


def test_extremal_channels_are_cptp(rng):
    for _ in range(10_000):
        u, w = rng.uniform(0, 2 * math.pi, 2)
        O1, O2 = Rotation.random(2, random_state=rng).as_matrix()
        assert validate_channel_cptp(extremal_channel(ExtremalChannelParams(u, w, O1, O2))).valid


def test_extremal_special_cases():
    eye = np.eye(3)
    ident = extremal_channel(ExtremalChannelParams(0, 0, eye, eye))
    assert np.allclose(ident.Tmap, eye) and np.allclose(ident.v, 0)
    const = extremal_channel(ExtremalChannelParams(math.pi / 2, math.pi / 2, eye, eye))
    assert np.allclose(const.Tmap, 0) and np.allclose(const.v, [0, 0, 1])
    with pytest.raises(ValueError):
        ExtremalChannelParams(0, 0, np.diag([1, 1, -1]), eye)


def test_channel_action_matches_choi(rng):
    for cls in ChannelClass:
        ch = random_channel(rng, cls)
        u = rng.normal(size=3)
        u *= rng.uniform() / np.linalg.norm(u)
        rho = 0.5 * (I2 + sum(u[i] * PAULI[i] for i in range(3)))
        assert np.allclose(bloch_of(apply_via_choi(ch, rho)), apply_channel(ch, u), atol=1e-12)


def test_rotation_about():
    R = rotation_about([0, 0, 2], math.pi / 2)
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0])


# -- pipeline --------------------------------------------------------------

def test_final_bloch_matches_density_matrix_simulation(rng):
    for k in range(60):
        s = random_state(rng)
        cls = list(ChannelClass)[k % 3]
        pair = DecodingPair(random_channel(rng, cls), random_channel(rng, cls))
        enc = random_encoding(rng)
        assert np.allclose(final_bloch(s, enc, pair), simulate(s, enc, pair), atol=1e-12)


def test_final_bloch_is_weighted_sum_of_branches(rng):
    for _ in range(50):
        s, enc = random_state(rng), random_encoding(rng)
        pair = DecodingPair(random_channel(rng, "general"), random_channel(rng, "general"))
        pm = post_measurement_bloch(s, enc)
        expected = (pm.p_plus * apply_channel(pair.plus, pm.n_plus)
                    + pm.p_minus * apply_channel(pair.minus, pm.n_minus))
        assert np.allclose(final_bloch(s, enc, pair), expected, atol=1e-12)


def test_pointwise_fidelity():
    assert pointwise_fidelity([0, 0, 1], [0, 0, 1]) == 1.0
    assert pointwise_fidelity([0, 0, 0], [1, 0, 0]) == 0.5
    with pytest.raises(ValueError):
        pointwise_fidelity([0, 0, 1], [0, 0, 2])


def test_baseline_protocol_value():
    f = make_frame([1, 1, 0])
    strat, pair = baseline_protocol(f)
    G = average_G(werner(0.0), f, strat, pair, 2048)
    assert abs(G - 2 / math.pi) < 2e-6
    assert 0.5 * (1 + G) >= 0.5


def test_invariant_protocol_on_werner():
    # Alice measures along -s, Bob applies the identity or the half turn about beta.
    lam = 0.3
    f = make_frame([0, 0, 1])
    pair = DecodingPair(DecodingChannel.identity(), DecodingChannel.rotation(rotation_about(f.beta, math.pi)))
    G = average_G(werner(lam), f, lambda s: Encoding.von_neumann(-s), pair, 256)
    assert G == pytest.approx(lam, abs=1e-12)


def test_uncorrelated_state_with_unital_decodings_gives_zero(rng):
    f = make_frame([0.3, 0.1, 1])
    s = TwoQubitState([0.2, 0, 0.1], [0, 0, 0], np.zeros((3, 3)))
    strat, pair = random_strategy(rng, "bistochastic")
    assert average_G(s, f, strat, pair, 64) == pytest.approx(0.0, abs=1e-14)


def random_strategy(rng, cls):
    pair = DecodingPair(random_channel(rng, cls), random_channel(rng, cls))
    encs = {}

    def strat(s):
        key = tuple(np.round(s, 12))
        if key not in encs:
            encs[key] = random_encoding(rng)
        return encs[key]

    return strat, pair


def test_quadratic_fidelity_examples():
    f = make_frame([0, 0, 1])
    strat, pair = random_guess_protocol(f)
    assert quadratic_fidelity(werner(0.2), f, strat, pair, 2048) == pytest.approx(0.5, abs=1e-12)
    # Singlet with the Fact-2 protocol reproduces s exactly.
    ident = DecodingPair(DecodingChannel.identity(), DecodingChannel.rotation(rotation_about(f.beta, math.pi)))
    assert quadratic_fidelity(werner(1.0), f, lambda s: Encoding.von_neumann(-s), ident, 64) == pytest.approx(1.0)
    zero = DecodingPair(DecodingChannel(np.zeros((3, 3)), np.zeros(3)), DecodingChannel(np.zeros((3, 3)), np.zeros(3)))
    assert quadratic_fidelity(werner(0.5), f, lambda s: Encoding.trivial(), zero, 64) == 0.0


def test_quadrature_convergence_for_smooth_strategy():
    s = random_state(np.random.default_rng(3))
    f = make_frame([0.2, -0.4, 1])
    pair = DecodingPair(DecodingChannel.identity(), DecodingChannel.rotation(rotation_about([1, 0, 0], 1.0)))

    def strat(t):
        return Encoding(0.5, 0.5, 0.25 * (t + 0.3 * f.beta))

    assert abs(average_G(s, f, strat, pair, 2048) - average_G(s, f, strat, pair, 4096)) < 1e-8


def test_average_G_rotation_covariance(rng):
    s = random_state(rng)
    f = make_frame([0.1, 0.2, 1.0])
    pair = DecodingPair(random_channel(rng, "general"), random_channel(rng, "general"))
    dirs = rng.normal(size=(3, 3))

    def strat(t, R=np.eye(3)):
        return Encoding(0.5, 0.5, 0.4 * R @ (dirs @ (R.T @ t)) / np.linalg.norm(dirs @ (R.T @ t)))

    G0 = average_G(s, f, strat, pair, 128)
    R = rotation_about(f.beta, 0.7)
    # Rotate the whole problem: state, decodings, strategy and frame.
    s2 = TwoQubitState(R @ s.x, R @ s.y, R @ s.T @ R.T)
    pair2 = DecodingPair(DecodingChannel(R @ pair.plus.Tmap @ R.T, R @ pair.plus.v),
                         DecodingChannel(R @ pair.minus.Tmap @ R.T, R @ pair.minus.v))
    f2 = Frame(f.beta, R @ f.e1, R @ f.e2)
    G1 = average_G(s2, f2, lambda t: strat(t, R), pair2, 128)
    assert G1 == pytest.approx(G0, abs=1e-12)


def test_too_few_nodes():
    f = make_frame([0, 0, 1])
    strat, pair = baseline_protocol(f)
    with pytest.raises(ValueError):
        average_G(werner(0.1), f, strat, pair, 2)
