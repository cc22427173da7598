import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from visreg import conv_core, tikhonov, visloss
from visreg.conv_core import RelKernel
from visreg.tikhonov import SparseMat
from visreg.verification import rel_error

LAP = conv_core.laplacian()


def dense_gamma_oracle(shape, count, ker):
    """Column j is the response to the j-th unit weight, via the brute-force convolution."""
    h, w = shape
    n = count * h * w
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        slabs = e.reshape(count, h, w)
        cols.append(np.concatenate([conv_core.conv_brute_oracle(s, ker).ravel() for s in slabs]))
    return np.stack(cols, axis=1)


def test_sparsemat_validation():
    with pytest.raises(ValueError):
        SparseMat(2, 2, np.array([0, 1, 2]), np.array([0, 5]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SparseMat(1, 3, np.array([0, 2]), np.array([2, 1]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SparseMat(1, 3, np.array([0, 1]), np.array([1]), np.array([0.0]))


def test_from_triplets_sorts_and_drops_zeros():
    m = SparseMat.from_triplets(2, 3, [1, 0, 0, 1], [2, 1, 0, 0], [5.0, 0.0, 3.0, 4.0])
    assert m.nnz == 3
    assert m.row(0) == [(0, 3.0)]
    assert m.row(1) == [(0, 4.0), (2, 5.0)]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), r=st.integers(1, 8), c=st.integers(1, 8))
def test_matvec_against_scipy(seed, r, c):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((r, c)) * (rng.random((r, c)) < 0.4)
    rows, cols = np.nonzero(dense)
    m = SparseMat.from_triplets(r, c, rows, cols, dense[rows, cols])
    ref = sp.csr_matrix(dense)
    x, y = rng.standard_normal(c), rng.standard_normal(r)
    assert np.allclose(m.matvec(x), ref @ x, rtol=0, atol=1e-12)
    assert np.allclose(m.rmatvec(y), ref.T @ y, rtol=0, atol=1e-12)
    assert np.array_equal(m.toarray(), dense)


def test_matvec_dimension_mismatch():
    m = SparseMat.from_triplets(2, 3, [0], [0], [1.0])
    with pytest.raises(ValueError):
        m.matvec(np.zeros(2))
    with pytest.raises(ValueError):
        m.rmatvec(np.zeros(3))


@pytest.mark.parametrize("shape,count,k", [((3, 3), 1, 1), ((4, 6), 2, 1), ((5, 5), 3, 2), ((2, 7), 1, 2)])
def test_gamma_matches_dense_oracle(rng, shape, count, k):
    ker = RelKernel(rng.standard_normal((2 * k + 1, 2 * k + 1)))
    g = tikhonov.build_gamma(shape, count, ker)
    assert np.allclose(g.toarray(), dense_gamma_oracle(shape, count, ker), rtol=0, atol=1e-14)
    assert g.nnz <= g.n_rows * ker.size ** 2


def test_gamma_block_diagonal(rng):
    g = tikhonov.build_gamma((4, 4), 3, LAP).toarray()
    for a in range(3):
        for b in range(3):
            if a != b:
                assert not g[16 * a:16 * a + 16, 16 * b:16 * b + 16].any()


def test_identity_kernel_gives_identity():
    g = tikhonov.build_gamma((3, 4), 2, RelKernel(np.ones((1, 1))))
    assert np.array_equal(g.toarray(), np.eye(24))


def test_quadratic_and_gradient(rng):
    slabs = rng.standard_normal((3, 6, 5))
    g = tikhonov.gamma_for(slabs, LAP)
    ref = visloss.vl_model(slabs, LAP, 2)
    assert abs(tikhonov.gamma_quadratic(g, slabs) - ref) / ref <= 1e-12
    assert rel_error(tikhonov.gamma_gradient(g, slabs),
                     visloss.grad_vl_model(slabs, LAP, 2).ravel()) <= 1e-12


def test_stats():
    g = tikhonov.build_gamma((3, 3), 1, LAP)
    # 4 corners see 4 entries, 4 edges 6, the centre 9
    assert tikhonov.gamma_stats(g)["nnz"] == 4 * 4 + 4 * 6 + 9
    assert tikhonov.gamma_stats(g)["density"] == pytest.approx(49 / 81)


def test_triplets_roundtrip(tmp_path, rng):
    g = tikhonov.gamma_for(rng.standard_normal((2, 4, 4)), RelKernel(rng.standard_normal((3, 3))))
    path = tmp_path / "gamma.txt"
    tikhonov.write_triplets(g, path)
    back = tikhonov.read_triplets(path)
    assert back == g
    assert path.read_text().startswith(f"# {g.n_rows} {g.n_cols} {g.nnz}\n")


def test_flip_mutation_is_caught(monkeypatch):
    """Dropping the kernel flip in the gradient must fail the Tikhonov gradient suite."""
    from visreg import verification

    assert verification.run_all(names=["tikhonov_gradient"])[0].passed
    monkeypatch.setattr(conv_core, "flip", lambda ker: ker)
    assert not verification.run_all(names=["tikhonov_gradient"])[0].passed
