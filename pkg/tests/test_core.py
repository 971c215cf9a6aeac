"""Convolution substrate: shapes, adjointness, dense equivalence, norms."""

import numpy as np
import pytest

from qreg import rng
from qreg.core import (
    ConvOperator,
    InteriorConvOperator,
    as_bank,
    as_signal,
    convolve,
    operator_norm,
)
from qreg.errors import DimensionError

from oracles import conv_full_brute, dense_operator_matrix


def test_identity_kernel_probe():
    # size-1 kernels are admitted by raw convolve for exactly this probe
    np.testing.assert_array_equal(convolve([1.0, 2.0, 3.0], [1.0]), [1.0, 2.0, 3.0])


def test_step_edge_response():
    u = np.array([0, 0, 1, 1, 1, 0, 0.0])
    out = convolve(u, [1.0, -1.0])
    nonzero = out[out != 0]
    assert sorted(nonzero.tolist()) == [-1.0, 1.0]
    np.testing.assert_allclose(out, conv_full_brute(u, [1.0, -1.0])[:, 0])


def test_constant_image_diagonal_kernel():
    u = np.full((6, 5), 3.0)
    h = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    out = convolve(u, h)
    assert out.shape == (7, 6)
    np.testing.assert_allclose(out, conv_full_brute(u, h), atol=1e-13)
    # interior cancels exactly; only the padding ring responds
    assert np.abs(out[1:6, 1:5]).max() == 0.0


def test_output_shape_full_extent():
    out = convolve(np.ones((5, 4)), np.ones((2, 3)))
    assert out.shape == (6, 6)


def test_bilinearity_machine_precision():
    u = rng.gaussian(1, 20).reshape(10, 2)
    h1 = rng.gaussian(2, 6).reshape(3, 2)
    h2 = rng.gaussian(3, 6).reshape(3, 2)
    lhs = convolve(u, 2.5 * h1 - 1.25 * h2)
    rhs = 2.5 * convolve(u, h1) - 1.25 * convolve(u, h2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_convolution_commutes_with_shift():
    for trial in range(10):
        base = rng.gaussian(11 + trial, 6)
        shift = 1 + trial % 4
        u = np.zeros(16)
        u[2:8] = base
        v = np.zeros(16)
        v[2 + shift:8 + shift] = base
        h = rng.gaussian(40 + trial, 3)
        np.testing.assert_allclose(
            np.roll(convolve(u, h), shift), convolve(v, h), atol=1e-12
        )
    # 2-D variant with content away from the padded border
    patch = rng.gaussian(60, 9).reshape(3, 3)
    a = np.zeros((10, 10))
    a[1:4, 1:4] = patch
    b = np.zeros((10, 10))
    b[3:6, 4:7] = patch  # shifted by (2, 3)
    k2 = rng.gaussian(61, 4).reshape(2, 2)
    np.testing.assert_allclose(
        np.roll(convolve(a, k2), (2, 3), axis=(0, 1)), convolve(b, k2), atol=1e-12
    )


def test_signal_validation():
    with pytest.raises(DimensionError):
        as_signal(np.zeros((0, 3)))
    with pytest.raises(DimensionError):
        as_signal(np.array([1.0, np.nan]))
    with pytest.raises(DimensionError):
        as_signal(np.zeros((2, 2, 2)))


def test_bank_validation():
    with pytest.raises(DimensionError):
        as_bank(np.ones((1, 1, 1)))  # single-tap filters are inadmissible
    bank = as_bank(np.ones((2, 2)))
    assert bank.shape == (1, 2, 2)


def test_operator_shape_checks():
    op = ConvOperator(np.ones(5), (2, 1))
    with pytest.raises(DimensionError):
        op.apply(np.ones((3, 1)))
    with pytest.raises(DimensionError):
        op.adjoint(np.ones((4, 1)))


def test_adjoint_zero_maps_to_zero_kernel():
    op = ConvOperator(rng.gaussian(5, 6), (3, 1))
    np.testing.assert_array_equal(op.adjoint(np.zeros(op.out_shape)), np.zeros((3, 1)))


def test_adjoint_identity_against_dense_transpose():
    op = ConvOperator(rng.gaussian(9, 5), (3, 1))
    dense = dense_operator_matrix(op)
    h = rng.gaussian(10, 3).reshape(3, 1)
    y = rng.gaussian(11, op.out_shape[0]).reshape(op.out_shape)
    lhs = float(np.vdot(op.apply(h), y))
    rhs = float(np.vdot(h, op.adjoint(y)))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
    np.testing.assert_allclose(op.adjoint(y).ravel(), dense.T @ y.ravel(), atol=1e-12)


def test_impulse_adjoint_is_leading_window():
    u = np.zeros(6)
    u[0] = 1.0
    op = ConvOperator(u, (3, 1))
    y = rng.gaussian(13, op.out_shape[0]).reshape(op.out_shape)
    np.testing.assert_allclose(op.adjoint(y), y[:3], atol=1e-14)


def test_adjointness_200_random_triples():
    worst = 0.0
    for trial in range(200):
        if trial % 2 == 0:
            m, p = 5 + trial % 9, 2 + trial % 3
            u = rng.gaussian(3 * trial, m)
            shape = (p, 1)
        else:
            r, c = 4 + trial % 5, 4 + (trial // 2) % 5
            u = rng.gaussian(3 * trial, r * c).reshape(r, c)
            shape = (2 + trial % 2, 2 + (trial // 3) % 3)
        op = ConvOperator(u, shape)
        h = rng.gaussian(3 * trial + 1, shape[0] * shape[1]).reshape(shape)
        y = rng.gaussian(3 * trial + 2, op.out_shape[0] * op.out_shape[1]).reshape(
            op.out_shape
        )
        err = abs(float(np.vdot(op.apply(h), y)) - float(np.vdot(h, op.adjoint(y))))
        bound = 1e-10 * np.linalg.norm(h) * np.linalg.norm(y)
        worst = max(worst, err / max(bound, 1e-300))
        assert err <= bound
    assert worst < 1.0


def test_dense_equivalence_small_instances():
    for trial in range(40):
        m = 3 + trial % 4
        c = 1 + trial % 3
        if m * c > 12:
            c = 1
        u = rng.gaussian(100 + trial, m * c).reshape(m, c)
        p = 2 + trial % 2
        q = 1 if c == 1 else 2
        if p * q > 4:
            p, q = 2, 2
        op = ConvOperator(u, (p, q))
        dense = dense_operator_matrix(op)
        h = rng.gaussian(200 + trial, p * q).reshape(p, q)
        np.testing.assert_allclose(
            op.apply(h).ravel(), dense @ h.ravel(), atol=1e-13
        )
        np.testing.assert_allclose(
            op.apply(h), conv_full_brute(u, h), atol=1e-13
        )


def test_operator_norm_impulse_embedding():
    u = np.zeros(8)
    u[3] = 1.0
    assert operator_norm([ConvOperator(u, (3, 1))]) == pytest.approx(1.0, rel=1e-6)


def test_operator_norm_matches_dense_svd():
    op = ConvOperator(np.array([1.0, 1.0]), (2, 1))
    dense = dense_operator_matrix(op)
    expected = np.linalg.svd(dense, compute_uv=False)[0]
    assert operator_norm([op]) == pytest.approx(expected, rel=1e-6)
    # stacked: sqrt of the top eigenvalue of the summed normal matrices
    op2 = ConvOperator(np.array([0.5, -1.0, 2.0]), (2, 1))
    d2 = dense_operator_matrix(op2)
    expected2 = np.sqrt(
        np.linalg.eigvalsh(dense.T @ dense + d2.T @ d2)[-1]
    )
    assert operator_norm([op, op2]) == pytest.approx(expected2, rel=1e-5)


def test_operator_norm_homogeneity():
    u = rng.gaussian(42, 10)
    n1 = operator_norm([ConvOperator(u, (3, 1))])
    n2 = operator_norm([ConvOperator(2.0 * u, (3, 1))])
    assert n2 == pytest.approx(2.0 * n1, rel=1e-6)


def test_operator_norm_zero_signal():
    assert operator_norm([ConvOperator(np.zeros(5), (2, 1))]) == 0.0


def test_interior_operator_adjoint_and_nullspace():
    h = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    op = InteriorConvOperator(h, (6, 6))
    u = rng.gaussian(77, 36).reshape(6, 6)
    y = rng.gaussian(78, 25).reshape(5, 5)
    lhs = float(np.vdot(op.apply(u), y))
    rhs = float(np.vdot(u, op.adjoint(y)))
    assert abs(lhs - rhs) <= 1e-12
    stripes = np.tile(np.array([1.0, 1.0, 0.0] * 2), (6, 1))
    assert np.abs(op.apply(stripes)).max() == 0.0
    # interior response equals the cropped full response
    full = convolve(u, h)
    np.testing.assert_allclose(op.apply(u), full[1:6, 1:6], atol=1e-13)
