import numpy as np
import pytest

from linbias import tensors
from linbias.tensors import (DataTensor, Dataset, build_conv_tensor,
                             build_diag_tensor, build_fc_tensor,
                             convolutional_network, custom_network,
                             diagonal_network, direct_forward,
                             fc_weight_matrices, forward,
                             fully_connected_network, linear_coefficients,
                             multilinear_mul, singular_residual)


def test_data_tensor_validation():
    t = DataTensor(np.ones((2, 3)))
    assert t.shape == (2, 3)
    assert t.order == 2
    with pytest.raises(ValueError):
        DataTensor(np.zeros((10 ** 4, 10 ** 4)))


def test_multilinear_mul_matrix_modes():
    A = np.arange(6.0).reshape(2, 3)
    B1 = np.eye(2)
    B2 = np.eye(3)
    out = multilinear_mul(A, [B1, B2])
    assert np.allclose(out.array, A)


def test_multilinear_mul_vector_contraction():
    A = np.arange(6.0).reshape(2, 3)
    u = np.array([1.0, 2.0])
    v = np.array([1.0, 0.0, -1.0])
    out = multilinear_mul(A, [u, v])
    assert isinstance(out, float)
    assert abs(out - u @ A @ v) <= 1e-14


def test_multilinear_mul_partial_contraction():
    A = np.arange(24.0).reshape(2, 3, 4)
    u = np.array([1.0, -1.0])
    out = multilinear_mul(A, [u, None, None])
    assert out.shape == (3, 4)
    assert np.allclose(out.array, A[0] - A[1])
    # contracting all but one mode leaves an order-1 tensor
    v = np.ones(3)
    out2 = multilinear_mul(A, [u, v, None])
    assert out2.shape == (4,)


def test_multilinear_mul_rejects_mismatch():
    A = np.ones((2, 2))
    with pytest.raises(ValueError):
        multilinear_mul(A, [np.ones(3), np.ones(2)])
    with pytest.raises(ValueError):
        multilinear_mul(A, [np.ones(2)])


def test_build_diag_tensor():
    x = np.array([1.0, 2.0, 3.0])
    T = build_diag_tensor(x, 3)
    assert T.shape == (3, 3, 3)
    for j in range(3):
        assert T.array[j, j, j] == x[j]
    assert np.count_nonzero(T.array) == 3


def test_build_conv_tensor_entries():
    x = np.array([5.0, 7.0, 9.0])
    T = build_conv_tensor(x, [3, 3])
    for j1 in range(3):
        for j2 in range(3):
            assert T.array[j1, j2] == x[(j1 + j2) % 3]


def test_build_conv_tensor_small_filters():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    T = build_conv_tensor(x, [2, 4])
    assert T.shape == (2, 4)
    assert T.array[1, 3] == x[(1 + 3) % 4]
    with pytest.raises(ValueError):
        build_conv_tensor(x, [2, 3])  # last filter must be full length
    with pytest.raises(ValueError):
        build_conv_tensor(x, [5, 4])


def test_build_fc_tensor_two_layer_is_kron():
    x = np.array([2.0, 3.0])
    T = build_fc_tensor(x, [2, 2])
    assert T.shape == (4, 2)
    assert np.allclose(T.array, np.kron(np.eye(2), x.reshape(2, 1)))


def test_build_fc_tensor_three_layer_shape():
    x = np.array([1.0, 2.0])
    T = build_fc_tensor(x, [2, 3, 2])
    assert T.shape == (6, 6, 2)


def test_fc_forward_equals_matrix_chain():
    rng = np.random.default_rng(3)
    widths = [3, 2, 2]
    net = fully_connected_network(widths)
    params = [rng.standard_normal(n) for n in net.param_shapes]
    net = net.with_params(params)
    x = rng.standard_normal(3)
    mats, w_last = fc_weight_matrices(net)
    expected = x @ mats[0] @ mats[1] @ w_last
    assert abs(forward(net, x) - expected) <= 1e-12 * (1.0 + abs(expected))


def test_forward_matches_direct_reference():
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 1000:
        arch = rng.choice(["diagonal", "convolutional", "fully_connected"])
        d = int(rng.integers(1, 7))
        L = int(rng.integers(2, 5))
        if arch == "diagonal":
            net = diagonal_network(d, L)
            dims = None
        elif arch == "convolutional":
            sizes = [int(rng.integers(1, d + 1)) for _ in range(L - 1)] + [d]
            net = convolutional_network(d, sizes)
            dims = None
        else:
            widths = [d] + [int(rng.integers(1, 4)) for _ in range(L - 1)]
            net = fully_connected_network(widths)
            dims = net.dims
        params = [rng.standard_normal(n) for n in net.param_shapes]
        net = net.with_params(params)
        x = rng.standard_normal(d)
        f = forward(net, x)
        ref = direct_forward(net.arch, params, x, dims)
        assert abs(f - ref) <= 1e-12 * (1.0 + abs(ref))
        checked += 1


def test_linear_coefficients():
    net = diagonal_network(3, 2, params=[np.array([1.0, 2.0, 3.0]),
                                         np.array([4.0, 5.0, 6.0])])
    beta = linear_coefficients(net)
    assert np.allclose(beta, [4.0, 10.0, 18.0])
    x = np.array([1.0, -1.0, 0.5])
    assert abs(forward(net, x) - x @ beta) <= 1e-12


def test_custom_network():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    net = custom_network(2, lambda x: DataTensor(np.outer(A @ x, [1.0, 0.0])),
                         [np.ones(2), np.ones(2)])
    x = np.array([1.0, 1.0])
    assert abs(forward(net, x) - np.sum(A @ x)) <= 1e-12


def test_network_param_shape_mismatch():
    with pytest.raises(ValueError):
        diagonal_network(2, 2, params=[np.ones(3), np.ones(2)])


def test_singular_residual_matrix_case():
    A = DataTensor(np.diag([3.0, 1.0]))
    e1 = np.array([1.0, 0.0])
    res = singular_residual(A, [e1, e1], 3.0)
    assert np.allclose(res, [0.0, 0.0], atol=1e-14)
    res = singular_residual(A, [e1, e1], 1.0)
    assert np.allclose(res, [2.0, 2.0])


def test_singular_residual_order3():
    arr = np.zeros((2, 2, 2))
    arr[0, 0, 0] = 2.0
    A = DataTensor(arr)
    e1 = np.array([1.0, 0.0])
    res = singular_residual(A, [e1, e1, e1], 2.0)
    assert np.allclose(res, np.zeros(3), atol=1e-14)


def test_singular_residual_requires_unit_vectors():
    A = DataTensor(np.eye(2))
    with pytest.raises(ValueError):
        singular_residual(A, [np.array([2.0, 0.0]), np.array([1.0, 0.0])], 1.0)


def test_dataset_validation():
    ds = Dataset(X=np.array([[1.0, 2.0]]), y=np.array([1.0]),
                 task="classification")
    assert ds.n == 1 and ds.d == 2
    assert ds.margin is not None and ds.margin > 0
    with pytest.raises(ValueError):
        Dataset(X=np.array([[1.0, 2.0]]), y=np.array([2.0]),
                task="classification")
    with pytest.raises(ValueError):
        Dataset(X=np.array([[1.0, 2.0], [2.0, 4.0]]), y=np.array([1.0, 1.0]),
                task="regression")
    with pytest.raises(ValueError):
        Dataset(X=np.array([[1.0, 2.0]]), y=np.array([1.0]), task="ranking")


def test_dataset_inseparable_rejected():
    X = np.array([[1.0, 0.0], [1.0, 1e-8]])
    y = np.array([1.0, -1.0])
    with pytest.raises(Exception):
        Dataset(X=X, y=y, task="classification")
