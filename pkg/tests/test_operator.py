import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from conetomo import CurveProfile, ScanGeometry, adjoint, build_system_matrix, forward, operator_norm
from conetomo.errors import DimensionMismatchError, DomainError, GridFormatError
from conetomo.operator import SystemMatrix, load_matrix, save_matrix
from conetomo.phantoms import PhantomSpec, rasterize

COMPTON = CurveProfile.compton()
BRAGG = CurveProfile.bragg()


@pytest.fixture(scope="module")
def ex1_small():
    geom = ScanGeometry(a=0.01, b=2.83, c=2.0, nx=32, ny=32, nE=32, nx0=64)
    return build_system_matrix(COMPTON, geom)


def single_bin(E, extent=(-1, 1, 0, 2), h_q=None, n=64):
    # one sinogram bin centred on (E, 0)
    return ScanGeometry(a=E - 0.25, b=E + 0.25, c=0.5, image_extent=extent,
                        nx=n, ny=n, nE=1, nx0=1, h_q=h_q)


def test_constant_image_compton():
    for h in (None, 1 / 256, 1 / 512):
        geom = single_bin(1.0, h_q=h)
        M = build_system_matrix(COMPTON, geom)
        val = forward(M, geom.image(np.ones(64 * 64))).values[0, 0]
        assert val == pytest.approx(2 * math.sqrt(2), rel=1e-12)


def bragg_arc_oracle(E, x0, extent):
    """Arc length of both Bragg branches inside the box, by adaptive quadrature."""
    x1_min, x1_max, x2_min, x2_max = extent
    total = 0.0
    for omega in (-1, 1):
        lo = max(0.0, (x1_min - x0) if omega > 0 else (x0 - x1_max))
        hi = (x1_max - x0) if omega > 0 else (x0 - x1_min)
        if x2_max / E < 1.0:
            hi = min(hi, brentq(lambda r: E * r / math.sqrt(r * r + 1) - x2_max, 0, 1e3, xtol=1e-15))
        if hi > lo:
            amp = lambda r: math.sqrt(1 + (E * (r * r + 1) ** -1.5) ** 2)
            total += quad(amp, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return total


def test_midpoint_rule_converges_at_second_order():
    extent = (-1, 1, 0, 1)
    geom0 = ScanGeometry(a=2.0, b=3.0, c=0.5, image_extent=extent, nx=32, ny=32, nE=4, nx0=5)
    sino = geom0.sinogram()
    E, X0 = np.meshgrid(sino.E_centers(), sino.x0_centers(), indexing="ij")
    oracle = np.array([bragg_arc_oracle(e, x, extent) for e, x in zip(E.ravel(), X0.ravel())])
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
        geom = ScanGeometry(**{**geom0.__dict__, "h_q": h})
        M = build_system_matrix(BRAGG, geom)
        errs.append(np.max(np.abs(M.matrix @ np.ones(32 * 32) - oracle)))
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(3)]
    assert errs[-1] < 1e-4
    assert min(rates) > 1.9


def test_zero_image(ex1_small):
    s = forward(ex1_small, ex1_small.geom.image())
    assert not s.values.any()


def test_entries_nonnegative(ex1_small):
    assert ex1_small.matrix.data.min() > 0


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1))
def test_adjoint_identity(ex1_small, seed):
    rng = np.random.default_rng(seed)
    M = ex1_small
    f = M.geom.image(rng.standard_normal(32 * 32))
    s = M.geom.sinogram(rng.standard_normal(32 * 64))
    Mf = forward(M, f)
    lhs = float(np.vdot(Mf.values, s.values))
    rhs = float(np.vdot(f.values, adjoint(M, s).values))
    assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(Mf.values) * np.linalg.norm(s.values)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(ex1_small, seed, a, b):
    rng = np.random.default_rng(seed)
    M = ex1_small
    f, g = rng.standard_normal((2, 32 * 32))
    Mf = forward(M, M.geom.image(f)).values
    Mg = forward(M, M.geom.image(g)).values
    lhs = forward(M, M.geom.image(a * f + b * g)).values
    scale = abs(a) * np.abs(Mf).max() + abs(b) * np.abs(Mg).max()
    np.testing.assert_allclose(lhs, a * Mf + b * Mg, rtol=0, atol=1e-12 * scale + 1e-300)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1))
def test_positivity(ex1_small, seed):
    f = np.random.default_rng(seed).random(32 * 32)
    assert forward(ex1_small, ex1_small.geom.image(f)).values.min() >= 0


def test_branch_symmetry(ex1_small):
    # a phantom even about x1 = 0 gives data even about x0 = 0
    f = rasterize(PhantomSpec.disc(0, 1, 0.4), ex1_small.geom)
    s = forward(ex1_small, f).values
    np.testing.assert_allclose(s, s[:, ::-1], atol=1e-12 * s.max())


def test_adjoint_zero(ex1_small):
    assert not adjoint(ex1_small, ex1_small.geom.sinogram()).values.any()


@pytest.mark.parametrize("row", [5 * 64 + 20, 17 * 64 + 33, 30 * 64 + 50])
def test_one_hot_backprojection_on_curve(ex1_small, row):
    M = ex1_small
    sino = M.geom.sinogram()
    s = np.zeros(M.shape[0])
    s[row] = 1.0
    img = adjoint(M, M.geom.sinogram(s))
    iy, ix = np.nonzero(img.values)
    assert iy.size > 0
    E = sino.E_centers()[row // 64]
    x0 = sino.x0_centers()[row % 64]
    X1, X2 = img.meshgrid()
    t = np.linspace(0, 4.0, 40001)
    curve = np.concatenate([np.c_[x0 - t, E * t], np.c_[x0 + t, E * t]])
    pts = np.c_[X1[iy, ix], X2[iy, ix]]
    dist = np.min(np.hypot(pts[:, None, 0] - curve[None, :, 0], pts[:, None, 1] - curve[None, :, 1]), axis=1)
    pixel = 2 / 32
    assert dist.max() <= math.sqrt(2) * pixel + 1e-9


def test_dimension_checks(ex1_small):
    with pytest.raises(DimensionMismatchError):
        forward(ex1_small, ScanGeometry(a=0.01, b=2.83, c=2.0, nx=8, ny=8).image())
    with pytest.raises(DimensionMismatchError):
        adjoint(ex1_small, ScanGeometry(a=0.01, b=2.83, c=2.0, nE=8, nx0=8).sinogram())


def test_thread_count_does_not_change_matrix(monkeypatch):
    import conetomo.operator as op

    monkeypatch.setattr(op, "_CHUNK_NODES", 20000)
    geom = ScanGeometry(a=0.01, b=2.83, c=2.0, nx=24, ny=24, nE=20, nx0=40)
    A = build_system_matrix(BRAGG, geom, threads=1).matrix
    B = build_system_matrix(BRAGG, geom, threads=3).matrix
    monkeypatch.setattr(op, "_CHUNK_NODES", 10**9)
    C = build_system_matrix(BRAGG, geom, threads=1).matrix
    for X in (B, C):
        assert np.array_equal(A.indptr, X.indptr)
        assert np.array_equal(A.indices, X.indices)
        assert np.array_equal(A.data, X.data)


def test_monomial_alias_is_bit_identical():
    geom = ScanGeometry(a=0.01, b=2.83, c=2.0, nx=16, ny=16, nE=16, nx0=32)
    A = build_system_matrix(COMPTON, geom).matrix
    B = build_system_matrix(CurveProfile.monomial(1.0), geom).matrix
    assert (A != B).nnz == 0


def test_sublinear_monomial_weight_is_finite():
    geom = ScanGeometry(a=0.01, b=2.83, c=2.0, nx=16, ny=16, nE=16, nx0=32)
    M = build_system_matrix(CurveProfile.monomial(0.5), geom)
    assert np.all(np.isfinite(M.matrix.data))


def test_matrix_cache(tmp_path, ex1_small):
    path = tmp_path / "m.crm"
    save_matrix(ex1_small, path)
    back = load_matrix(path, COMPTON, ex1_small.geom)
    assert (back.matrix != ex1_small.matrix).nnz == 0
    with pytest.raises(GridFormatError):
        load_matrix(path, BRAGG, ex1_small.geom)


def test_operator_norm_known_singular_values():
    rng = np.random.default_rng(1)
    U, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    V, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    svals = np.r_[3.0, 2.0, np.linspace(1.5, 0.1, 28)]
    A = U[:, :30] @ np.diag(svals) @ V.T
    est, hist = operator_norm(sp.csr_matrix(A), 50, history=True)
    assert est == pytest.approx(3.0, rel=0.01)
    assert np.all(np.diff(hist) >= -1e-12)


def test_operator_norm_zero_matrix():
    assert operator_norm(sp.csr_matrix((5, 4)), 20) == 0.0
    with pytest.raises(DomainError):
        operator_norm(sp.csr_matrix(np.eye(3)), 5)


def test_operator_norm_nondecreasing(ex1_small):
    _, hist = operator_norm(ex1_small, 30, history=True)
    assert np.all(np.diff(hist) >= -1e-12 * hist[-1])
