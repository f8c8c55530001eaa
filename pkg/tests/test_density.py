import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmaxent import (DensityOperator, MatrixFormatError, dephase, eigh, entropy, is_density,
                     random_density, random_unitary, read_matrix, shannon, tsallis,
                     write_matrix)
from qmaxent.density import degenerate_groups, parse_matrix

from conftest import builtin_functionals

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


def test_eigh_examples():
    w, _ = eigh(np.eye(4))
    assert np.allclose(w, 1.0)
    w, V = eigh(np.diag([1.0, 3.0]))
    assert np.allclose(w, [3.0, 1.0])
    assert np.allclose(np.abs(V), [[0, 1], [1, 0]])
    w, _ = eigh(PAULI_X)
    assert np.allclose(w, [1.0, -1.0], atol=1e-15)


def test_eigh_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eigh(np.array([[0, 1], [0, 0]], dtype=complex))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_eigh_reconstructs(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = G + G.conj().T
    w, V = eigh(H)
    assert np.all(np.diff(w) <= 0)
    assert np.linalg.norm(V @ np.diag(w) @ V.conj().T - H) <= 1e-9
    assert np.max(np.abs(V.conj().T @ V - np.eye(n))) <= 1e-10


def test_degenerate_groups():
    assert degenerate_groups([3.0, 3.0 + 1e-12, 2.0, 1.0, 1.0 - 5e-10]) == [[0, 1], [2], [3, 4]]


# ---------------------------------------------------------------------------
# entropy


def test_pure_state_has_zero_entropy(functional):
    psi = random_unitary(4, 3)[:, 0]
    rho = DensityOperator.from_matrix(np.outer(psi, psi.conj()))
    assert abs(entropy(rho, functional)) <= 1e-12


def test_uniform_examples():
    rho = DensityOperator.from_matrix(np.eye(4) / 4)
    assert entropy(rho, tsallis(2.0)) == pytest.approx(0.75, abs=1e-14)
    assert entropy(rho, shannon()) == pytest.approx(math.log(4), abs=1e-14)


def test_uniform_state_is_maximal(functional):
    top = 4 * float(functional(0.25))
    for seed in range(50):
        assert entropy(random_density(4, seed), functional) <= top + 1e-12


def test_entropy_accepts_raw_matrix():
    assert entropy(np.eye(2) / 2, shannon()) == pytest.approx(math.log(2))


@pytest.mark.parametrize("seed", range(20))
def test_unitary_invariance(seed, functional):
    rho = random_density(4, seed)
    U = random_unitary(4, seed + 1000)
    rotated = DensityOperator.from_matrix(U @ rho.matrix @ U.conj().T)
    assert entropy(rotated, functional) == pytest.approx(entropy(rho, functional), abs=1e-10)


# ---------------------------------------------------------------------------
# dephasing


def test_dephase_fixed_point():
    rho = DensityOperator.from_matrix(np.diag([0.5, 0.3, 0.2]).astype(complex))
    out = dephase(rho, np.eye(3))
    assert np.allclose(out.matrix, rho.matrix, atol=1e-15)


def test_dephase_preserves_trace():
    for seed in range(20):
        out = dephase(random_density(4, seed), random_unitary(4, seed + 7))
        assert out.trace == pytest.approx(1.0, abs=1e-12)
        assert is_density(out.matrix)


def test_dephase_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        dephase(random_density(2, 0), np.array([[1, 1], [0, 1]], dtype=complex))


def test_dephase_shape_mismatch():
    with pytest.raises(ValueError):
        dephase(random_density(2, 0), np.eye(3))


# ---------------------------------------------------------------------------
# generators and validation


def test_random_density_one_dimensional():
    assert np.allclose(random_density(1, 5).matrix, [[1.0]])


def test_random_density_deterministic():
    a, b = random_density(4, 42), random_density(4, 42)
    assert np.array_equal(a.matrix, b.matrix)


def test_random_density_rejects_zero():
    with pytest.raises(ValueError):
        random_density(0, 1)


def test_random_density_self_check():
    assert all(is_density(random_density(4, s).matrix) for s in range(1000))


def test_random_unitary_is_unitary():
    U = random_unitary(5, 9)
    assert np.max(np.abs(U.conj().T @ U - np.eye(5))) <= 1e-12


@pytest.mark.parametrize("M, expected", [
    (np.eye(4) / 4, True),
    (np.diag([1.5, -0.5]), False),
    (np.diag([0.6, 0.6]), False),
    (np.array([[0.5, 0.5], [0.0, 0.5]]), False),
])
def test_is_density_examples(M, expected):
    assert is_density(M) is expected


def test_from_matrix_validates():
    with pytest.raises(ValueError):
        DensityOperator.from_matrix(np.diag([0.6, 0.6]))
    with pytest.raises(ValueError):
        DensityOperator.from_matrix(np.diag([1.5, -0.5]))


def test_spectrum_invariants():
    for seed in range(50):
        rho = random_density(5, seed)
        assert np.all(rho.spectrum >= 0)
        assert np.all(np.diff(rho.spectrum) <= 0)
        assert rho.spectrum.sum() == pytest.approx(1.0, abs=1e-10)
        V = rho.eigenbasis
        assert np.max(np.abs(V.conj().T @ V - np.eye(5))) <= 1e-10


def test_tiny_eigenvalues_clamped():
    rho = DensityOperator.from_matrix(np.diag([1.0, 1e-14, 0.0]))
    assert rho.spectrum[1] == 0.0
    assert entropy(rho, shannon()) == 0.0


# ---------------------------------------------------------------------------
# text format


def test_matrix_roundtrip(tmp_path):
    M = random_density(3, 11).matrix
    path = tmp_path / "m.txt"
    write_matrix(path, M)
    assert np.array_equal(read_matrix(path), M)


def test_parse_accepts_comments_and_reals():
    M = parse_matrix(["# a comment", "", "1 0,1", "0,-1 2"])
    assert np.array_equal(M, np.array([[1, 1j], [-1j, 2]]))


@pytest.mark.parametrize("lines, fragment", [
    (["1 0", "0 x"], "row 2"),
    (["1 0", "0 1 2"], "row 2"),
    (["1 0 0", "0 1 0"], "not square"),
    (["# nothing"], "no matrix"),
])
def test_parse_errors_name_the_problem(lines, fragment):
    with pytest.raises(MatrixFormatError, match=fragment):
        parse_matrix(lines)
