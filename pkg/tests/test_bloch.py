import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_bell_t, random_rho, random_state, state_from_rho
from rsp.bloch import (
    InvalidStateError,
    TwoQubitState,
    bell_diagonal,
    dakic_state,
    dump_state,
    entanglement_threshold,
    geometric_discord_bell_diagonal,
    is_bell_diagonal,
    is_entangled,
    is_separable_bell_diagonal,
    load_state,
    make_frame,
    partial_transpose,
    ppt_min_eigenvalue,
    require_valid,
    to_density_matrix,
    validate_state,
    werner,
)

unit = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_density_matrix_round_trip(rng):
    for _ in range(20):
        rho = random_rho(rng)
        back = to_density_matrix(state_from_rho(rho))
        assert np.allclose(back, rho, atol=1e-12)


def test_density_matrix_trace_and_hermitian(rng):
    rho = to_density_matrix(random_state(rng))
    assert np.isclose(np.trace(rho).real, 1.0)
    assert np.allclose(rho, rho.conj().T)


def test_singlet_has_minus_identity_correlations():
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    s = state_from_rho(np.outer(psi, psi))
    assert np.allclose(s.T, -np.eye(3))
    assert np.allclose(s.x, 0) and np.allclose(s.y, 0)


def test_werner_validity_range():
    assert validate_state(werner(1.0)).valid
    assert validate_state(werner(-1 / 3)).valid
    assert not validate_state(werner(1.1)).valid
    with pytest.raises(InvalidStateError):
        require_valid(werner(-0.5))


def test_state_report_fields():
    rep = validate_state(dakic_state(0.2, 0.4))
    assert rep.valid
    assert rep.local_norms == pytest.approx((0.4, 0.4))
    assert rep.min_eigenvalue >= -1e-12  # t = (1 - lam) / 2 sits on the boundary


def test_validate_rejects_bad_tol():
    with pytest.raises(ValueError):
        validate_state(werner(0.1), tol=0)


def test_shape_errors():
    with pytest.raises(ValueError):
        TwoQubitState([0, 0], [0, 0, 0], np.eye(3))
    with pytest.raises(ValueError):
        TwoQubitState([0, 0, 0], [0, 0, 0], np.eye(2))
    with pytest.raises(ValueError):
        TwoQubitState([0, 0, np.nan], [0, 0, 0], np.eye(3))


def test_arrays_are_read_only():
    s = werner(0.2)
    with pytest.raises(ValueError):
        s.T[0, 0] = 1.0


def test_reference_bell_diagonal_examples():
    eps = 0.04
    T1 = bell_diagonal(-1 / 3, -1 / 3, -1 / 3)
    T2 = bell_diagonal(-1 / 3 - 2 * eps, -1 / 3 + eps / 2, -1 / 3 + eps / 2)
    assert not is_entangled(T1)
    assert is_entangled(T2)
    with pytest.raises(InvalidStateError):
        bell_diagonal(1, 1, 1)


def test_partial_transpose_is_involution(rng):
    rho = random_rho(rng)
    assert np.allclose(partial_transpose(partial_transpose(rho)), rho)


def test_ppt_matches_sum_rule(rng):
    for _ in range(500):
        t = random_bell_t(rng)
        assert is_entangled(bell_diagonal(*t)) != is_separable_bell_diagonal(*t)


def test_singlet_entangled_product_not():
    assert is_entangled(werner(1.0))
    assert not is_entangled(TwoQubitState([0, 0, 0.5], [0.3, 0, 0], np.outer([0, 0, 0.5], [0.3, 0, 0])))
    assert ppt_min_eigenvalue(werner(1.0)) == pytest.approx(-0.5)


def test_entanglement_threshold():
    lam = 0.2
    tc = entanglement_threshold(lam)
    assert tc == pytest.approx(0.5 * np.sqrt(1 - 0.4 - 0.12))
    assert not is_entangled(dakic_state(lam, tc - 1e-3))
    assert is_entangled(dakic_state(lam, tc + 1e-3))
    assert is_entangled(dakic_state(0.2, 0.4))
    assert entanglement_threshold(1 / 3) == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(ValueError):
        entanglement_threshold(0.5)


def test_discord_of_werner_third():
    assert geometric_discord_bell_diagonal(-1 / 3, -1 / 3, -1 / 3) == pytest.approx(1 / 18)
    # Only the two smallest magnitudes count.
    assert geometric_discord_bell_diagonal(0.1, -0.2, 0.6) == pytest.approx(0.25 * (0.01 + 0.04))


def test_is_bell_diagonal():
    assert is_bell_diagonal(werner(0.3))
    assert not is_bell_diagonal(dakic_state(0.2, 0.1))


@given(unit)
def test_make_frame_is_right_handed_orthonormal(v):
    f = make_frame(v)
    F = f.matrix()
    assert np.allclose(F.T @ F, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(F), 1.0)
    assert np.allclose(np.cross(f.beta, f.e1), f.e2)
    assert np.allclose(f.beta, np.asarray(v) / np.linalg.norm(v))


def test_make_frame_conventions():
    f = make_frame([0, 0, 2])
    assert np.allclose(f.e1, [1, 0, 0]) and np.allclose(f.e2, [0, 1, 0])
    with pytest.raises(ValueError):
        make_frame([0, 0, 0])


def test_circle_nodes():
    f = make_frame([1, 2, 3])
    phi, s = f.circle(16)
    assert phi.shape == (16,) and s.shape == (16, 3)
    assert np.allclose(np.linalg.norm(s, axis=1), 1)
    assert np.allclose(s @ f.beta, 0)
    assert np.allclose(s[0], f.e1)


def test_json_round_trip(tmp_path):
    s = dakic_state(0.2, 0.4)
    path = tmp_path / "s.json"
    dump_state(s, path)
    back = load_state(path)
    assert np.array_equal(back.T, s.T) and np.array_equal(back.y, s.y)
    assert json.loads(path.read_text())["x"] == [0.0, 0.0, 0.4]


def test_load_state_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"x": [0, 0, 0], "y": [0, 0, 0]}')
    with pytest.raises(ValueError, match="'T'"):
        load_state(p)
    p.write_text("[1, 2]")
    with pytest.raises(ValueError):
        load_state(p)
