import numpy as np
import pytest

from echoray import sh_eval, sh_eval_batch
from echoray.hoa import acn_index


def closed_form_n3d(d):
    """Directly coded real SH polynomials, N3D, ACN order, degrees 0..3.

    Written out from the standard Cartesian expressions, independent of the
    recurrence implementation.
    """
    x, y, z = d
    s2, s3, s5, s6, s7, s10, s15 = map(
        np.sqrt, (2.0, 3.0, 5.0, 6.0, 7.0, 10.0, 15.0))
    out = np.empty(16)
    out[0] = 1.0
    # degree 1
    out[1] = s3 * y
    out[2] = s3 * z
    out[3] = s3 * x
    # degree 2
    out[4] = s15 * x * y
    out[5] = s15 * y * z
    out[6] = s5 * 0.5 * (3 * z * z - 1)
    out[7] = s15 * x * z
    out[8] = s15 * 0.5 * (x * x - y * y)
    # degree 3
    out[9] = s7 * np.sqrt(5.0 / 8.0) * y * (3 * x * x - y * y)
    out[10] = s7 * s15 * x * y * z
    out[11] = s7 * np.sqrt(3.0 / 8.0) * y * (5 * z * z - 1)
    out[12] = s7 * 0.5 * z * (5 * z * z - 3)
    out[13] = s7 * np.sqrt(3.0 / 8.0) * x * (5 * z * z - 1)
    out[14] = s7 * s15 * 0.5 * z * (x * x - y * y)
    out[15] = s7 * np.sqrt(5.0 / 8.0) * x * (x * x - 3 * y * y)
    return out


def random_directions(n, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def test_order0_is_constant():
    for d in ([0, 0, 1], [1, 0, 0], [0.6, 0.0, 0.8]):
        np.testing.assert_allclose(sh_eval(d, 0, "SN3D"), [1.0])


def test_degree1_closed_forms():
    np.testing.assert_allclose(
        sh_eval([0, 0, 1], 1, "SN3D"), [1, 0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(
        sh_eval([1, 0, 0], 1, "N3D"), [1, 0, 0, np.sqrt(3)], atol=1e-15)


def test_recurrence_matches_closed_form_l3():
    dirs = random_directions(1000, seed=42)
    got = sh_eval_batch(dirs, 3, "N3D")
    for i, d in enumerate(dirs):
        np.testing.assert_allclose(got[i], closed_form_n3d(d), atol=1e-12)


def test_addition_theorem_all_degrees():
    dirs = np.vstack([
        random_directions(1000, seed=7),
        [[0, 0, 1], [0, 0, -1], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]],
    ])
    Y = sh_eval_batch(dirs, 9, "N3D")
    for l in range(10):
        chans = [acn_index(l, m) for m in range(-l, l + 1)]
        s = np.sum(Y[:, chans] ** 2, axis=1)
        np.testing.assert_allclose(s, 2 * l + 1, atol=1e-10)


def test_sn3d_is_n3d_scaled():
    dirs = random_directions(100, seed=3)
    n3d = sh_eval_batch(dirs, 9, "N3D")
    sn3d = sh_eval_batch(dirs, 9, "SN3D")
    for l in range(10):
        for m in range(-l, l + 1):
            c = acn_index(l, m)
            np.testing.assert_array_equal(sn3d[:, c], n3d[:, c] / np.sqrt(2 * l + 1))


def test_degreewise_bound():
    dirs = np.vstack([
        random_directions(2000, seed=9),
        [[0, 0, 1], [0, 0, -1], [1, 0, 0], [0, 1, 0]],
    ])
    Y = sh_eval_batch(dirs, 9, "N3D")
    for l in range(10):
        chans = [acn_index(l, m) for m in range(-l, l + 1)]
        assert np.max(np.abs(Y[:, chans])) <= np.sqrt(2 * l + 1) + 1e-9


def test_orthonormality_monte_carlo_small():
    # quick version; the acceptance suite runs the full 1e6-sample check
    dirs = random_directions(200_000, seed=1)
    Y = sh_eval_batch(dirs, 9, "N3D")
    gram = (Y.T @ Y) / dirs.shape[0]
    np.testing.assert_allclose(gram, np.eye(100), atol=0.05)


def test_batch_contract():
    empty = sh_eval_batch(np.zeros((0, 3)), 4)
    assert empty.shape == (0, 25)

    d = np.array([[0.0, 0.6, 0.8]] * 5)
    Y = sh_eval_batch(d, 9)
    assert Y.flags["C_CONTIGUOUS"]
    for i in range(1, 5):
        np.testing.assert_array_equal(Y[i], Y[0])


def test_input_validation():
    with pytest.raises(ValueError, match="order"):
        sh_eval([0, 0, 1], 10)
    with pytest.raises(ValueError, match="row 2"):
        sh_eval_batch(np.array([[0, 0, 1], [1, 0, 0], [0.5, 0, 0]]), 2)
    # small deviation from unit length is renormalized
    got = sh_eval([0, 0, 1.0005], 1, "SN3D")
    np.testing.assert_allclose(got, [1, 0, 1, 0], atol=1e-12)
