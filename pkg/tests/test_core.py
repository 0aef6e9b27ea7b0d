import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from recoilfree.core import (
    PAULIS, SIGMA_PLUS, annihilation, build_operators, joint_blocks, kron, matrix_exponential,
    partial_trace_motion, projective_infidelity, rot_zxz, rx, ry, rz,
)
from recoilfree.errors import InconsistentStateError, InvalidDimensionError

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def test_pauli_algebra():
    X, Y, Z = PAULIS[1:]
    assert np.allclose(X @ Y, 1j * Z)
    assert np.allclose(SIGMA_PLUS + SIGMA_PLUS.conj().T, X)


def test_kron_ordering_puts_qubit_slow():
    n = 3
    op = kron(SIGMA_PLUS, np.eye(n))
    # |q=0, m=1> -> |q=1, m=1>
    v = np.zeros(2 * n)
    v[1] = 1
    assert np.argmax(np.abs(op @ v)) == n + 1


def test_joint_blocks_reads_motional_matrix_elements(rng):
    A = rng.standard_normal((2, 2))
    M = rng.standard_normal((4, 4))
    U4 = joint_blocks(np.kron(A, M))
    assert np.allclose(U4[:, 2, :, 1], A * M[2, 1])


@given(angles, angles, angles)
def test_rot_zxz_composition(a, t, b):
    assert np.allclose(rot_zxz(a, t, b), rz(b) @ rx(t) @ rz(a))


@given(angles)
def test_ry_from_x_and_z(theta):
    assert projective_infidelity(ry(theta), rx(-math.pi / 2) @ rz(theta) @ rx(math.pi / 2)) < 1e-12


@given(angles, st.floats(0, 2 * math.pi))
def test_projective_infidelity_ignores_global_phase(theta, phase):
    U = rx(theta)
    assert projective_infidelity(U, np.exp(1j * phase) * U) < 1e-12


def test_projective_infidelity_of_orthogonal_gates():
    assert projective_infidelity(np.eye(2), PAULIS[1]) == pytest.approx(1.0)


def test_annihilation_matrix_elements():
    a = annihilation(5)
    assert np.allclose(a @ a.conj().T - a.conj().T @ a, np.diag([1, 1, 1, 1, -4]))
    with pytest.raises(InvalidDimensionError):
        annihilation(1)


def test_displacement_is_unitary_and_matches_expm():
    ops = build_operators(10, 0.3)
    D = ops.displacement
    assert np.allclose(D @ D.conj().T, np.eye(10), atol=1e-13)
    assert np.allclose(D, scipy.linalg.expm(0.3j * (ops.a + ops.a_dag)), atol=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_matrix_exponential_agrees_with_pade(seed):
    r = np.random.default_rng(seed)
    A = r.standard_normal((6, 6)) + 1j * r.standard_normal((6, 6))
    H = A + A.conj().T
    assert np.allclose(matrix_exponential(H, -0.7j), scipy.linalg.expm(-0.7j * H), atol=1e-11)
    assert np.allclose(matrix_exponential(A, 0.3), scipy.linalg.expm(0.3 * A), atol=1e-11)


def test_matrix_exponential_rejects_non_square():
    with pytest.raises(InvalidDimensionError):
        matrix_exponential(np.zeros((2, 3)))


def test_partial_trace_motion():
    psi_q = np.array([1, 1j]) / math.sqrt(2)
    psi_m = np.array([0, 1, 0])
    psi = np.kron(psi_q, psi_m)
    rho = partial_trace_motion(np.outer(psi, psi.conj()))
    assert np.allclose(rho, np.outer(psi_q, psi_q.conj()))
    with pytest.raises(InconsistentStateError):
        partial_trace_motion(2 * np.outer(psi, psi.conj()))
    with pytest.raises(InvalidDimensionError):
        partial_trace_motion(np.eye(5) / 5)
