"""Tensor-core unit tests, including frozen analytic reference values."""

import numpy as np
import pytest

from triqed.tensor import (
    Channel,
    DensityMatrix,
    HilbertSpace,
    OperatorMatrix,
    SiteIndex,
    SiteKind,
    StateVector,
    basis_vector,
    dag,
    embed,
    embed_product,
    expectation,
    kron_all,
    partial_trace,
    partial_transpose,
    trace_distance,
)

NUM = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def random_density(rng, dim, rank=None):
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return m / m.trace()


def test_site_index_positions():
    assert SiteIndex(SiteKind.FIELD, Channel.A).position == 0
    assert SiteIndex(SiteKind.FIELD, Channel.C).position == 2
    assert SiteIndex(SiteKind.CAVITY, Channel.A).position == 3
    assert SiteIndex(SiteKind.ATOM, Channel.B).position == 7
    positions = [
        SiteIndex(kind, ch).position for kind in SiteKind for ch in Channel
    ]
    assert positions == list(range(9))


def test_space_dims():
    space = HilbertSpace.nine_qubits()
    assert space.total_dim == 512
    assert space.n_sites == 9
    assert space.dim_before(3) == 8
    assert space.dim_after(3) == 32
    with pytest.raises(ValueError):
        HilbertSpace(())
    with pytest.raises(ValueError):
        HilbertSpace((2, 0))


def test_basis_vector_bit_layout():
    space = HilbertSpace.nine_qubits()
    occ = [0] * 9
    occ[3] = 1
    vec = basis_vector(space, occ)
    assert vec[2 ** (8 - 3)] == 1.0
    assert np.count_nonzero(vec) == 1
    mixed_dims = HilbertSpace((2, 3, 2))
    v = basis_vector(mixed_dims, (1, 2, 0))
    assert v[(1 * 3 + 2) * 2 + 0] == 1.0


def test_state_and_density_validation():
    space = HilbertSpace.qubits(1)
    with pytest.raises(ValueError):
        StateVector(space, np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        DensityMatrix(space, np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(ValueError):
        DensityMatrix(space, np.array([[0.9, 0.0], [0.0, 0.9]]))
    rho = DensityMatrix(space, np.array([[0.5, 0.5], [0.5, 0.5]]))
    rho.check_positive()
    bad = DensityMatrix(space, np.array([[1.2, 0.0], [0.0, -0.2]]))
    with pytest.raises(ValueError):
        bad.check_positive()


def test_density_matrix_is_frozen():
    space = HilbertSpace.qubits(1)
    rho = DensityMatrix(space, np.eye(2) / 2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 9.0


def test_embed_number_operator():
    space = HilbertSpace.qubits(2)
    n0 = embed(NUM, 0, space)
    assert np.allclose(np.diag(n0), [0, 0, 1, 1])
    n1 = embed(NUM, 1, space)
    assert np.allclose(np.diag(n1), [0, 1, 0, 1])


def test_embed_product_matches_matmul():
    rng = np.random.default_rng(11)
    space = HilbertSpace.qubits(4)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    b = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    direct = embed_product({1: a, 3: b}, space)
    assert np.allclose(direct, embed(a, 1, space) @ embed(b, 3, space))


def test_embed_shape_check():
    space = HilbertSpace((2, 3))
    with pytest.raises(ValueError):
        embed(NUM, 1, space)


def test_partial_trace_w_state_two_qubit_marginal():
    # Reduced two-qubit state of |W> = (|001>+|010>+|100>)/sqrt(3):
    # (1/3)|00><00| + (2/3)|psi+><psi+| with psi+ = (|01>+|10>)/sqrt(2).
    space = HilbertSpace.qubits(3)
    w = np.zeros(8, dtype=complex)
    w[[1, 2, 4]] = 1.0 / np.sqrt(3.0)
    rho = DensityMatrix(space, np.outer(w, w.conj()))
    red = partial_trace(rho, keep=(0, 1))
    expected = np.zeros((4, 4), dtype=complex)
    expected[0, 0] = 1.0 / 3.0
    for i in (1, 2):
        for j in (1, 2):
            expected[i, j] = 1.0 / 3.0
    assert np.allclose(red.matrix, expected, atol=1e-14)


def test_partial_trace_keep_order_is_canonical():
    rng = np.random.default_rng(5)
    space = HilbertSpace.qubits(3)
    rho = random_density(rng, 8)
    a = partial_trace(rho, keep=(2, 0), space=space)
    b = partial_trace(rho, keep=(0, 2), space=space)
    assert np.allclose(a.matrix, b.matrix)
    assert a.space.local_dims == (2, 2)


def test_partial_trace_properties_random():
    rng = np.random.default_rng(7)
    space = HilbertSpace((2, 3, 2, 2))
    for _ in range(20):
        rho = random_density(rng, space.total_dim, rank=3)
        red = partial_trace(rho, keep=(1, 3), space=space)
        assert abs(red.matrix.trace() - 1.0) < 1e-12
        assert np.abs(red.matrix - red.matrix.conj().T).max() < 1e-12
        # Tracing in two stages agrees with one stage.
        stage = partial_trace(rho, keep=(0, 1, 3), space=space)
        two = partial_trace(stage, keep=(1, 2))
        assert np.allclose(two.matrix, red.matrix)


def test_partial_trace_of_product_state():
    rng = np.random.default_rng(3)
    space = HilbertSpace.qubits(2)
    a = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    a /= np.linalg.norm(a)
    b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    b /= np.linalg.norm(b)
    psi = np.kron(a, b)
    red = partial_trace(np.outer(psi, psi.conj()), keep=(0,), space=space)
    assert np.allclose(red.matrix, np.outer(a, a.conj()))


def test_partial_transpose_bell_spectrum():
    # PT of a Bell pair has eigenvalues (-1/2, 1/2, 1/2, 1/2).
    space = HilbertSpace.qubits(2)
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0)
    rho = np.outer(bell, bell)
    pt = partial_transpose(rho, sites=(0,), space=space)
    w = np.linalg.eigvalsh(pt.matrix)
    assert np.allclose(sorted(w), [-0.5, 0.5, 0.5, 0.5], atol=1e-14)


def test_partial_transpose_involution_and_full_transpose():
    rng = np.random.default_rng(13)
    space = HilbertSpace.qubits(3)
    rho = random_density(rng, 8)
    pt = partial_transpose(rho, sites=(1,), space=space)
    back = partial_transpose(pt, sites=(1,))
    assert np.allclose(back.matrix, rho)
    full = partial_transpose(rho, sites=(0, 1, 2), space=space)
    assert np.allclose(full.matrix, rho.T)
    assert abs(pt.matrix.trace() - 1.0) < 1e-12


def test_partial_transpose_site_validation():
    space = HilbertSpace.qubits(2)
    rho = np.eye(4) / 4
    with pytest.raises(ValueError):
        partial_transpose(rho, sites=(0, 0), space=space)
    with pytest.raises(ValueError):
        partial_transpose(rho, sites=(5,), space=space)


def test_expectation_pure_and_mixed_agree():
    rng = np.random.default_rng(17)
    space = HilbertSpace.qubits(2)
    psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    psi /= np.linalg.norm(psi)
    op = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    sv = StateVector(space, psi)
    dm = sv.density_matrix()
    assert np.isclose(expectation(op, sv), expectation(op, dm))
    n0 = embed(NUM, 0, space)
    assert np.isclose(
        expectation(n0, sv), abs(psi[2]) ** 2 + abs(psi[3]) ** 2
    )


def test_trace_distance_extremes():
    e0 = np.array([1.0, 0.0])
    e1 = np.array([0.0, 1.0])
    r0 = np.outer(e0, e0)
    r1 = np.outer(e1, e1)
    assert np.isclose(trace_distance(r0, r1), 1.0)
    assert np.isclose(trace_distance(r0, r0), 0.0)
    plus = np.full((2, 2), 0.5)
    assert np.isclose(trace_distance(r0, plus), 0.5 * np.sqrt(2.0))


def test_dag_and_kron_all():
    rng = np.random.default_rng(23)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    assert np.allclose(dag(a), a.conj().T)
    b = rng.standard_normal((3, 3))
    assert np.allclose(kron_all([a, b]), np.kron(a, b))
