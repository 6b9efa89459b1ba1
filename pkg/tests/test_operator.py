import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridgesolve.frame import CoeffVector, FrameSpec, analyze_dense, frame_layout, synthesize
from ridgesolve.operator import (
    CompressedMatrix,
    OperatorMatrix,
    TransportProblem,
    budget,
    coarse,
    coefficient_image,
    measure_p_sparsity_dense,
    power_norm,
    rhs_truncate,
    schur_bound,
    tiles_overlap_matrix,
    transport_symbol,
    zero_pattern,
)

SMALL = FrameSpec(16, 3)
PROB = TransportProblem((0.6, 0.8), 2.0)


@pytest.fixture(scope="module")
def dense_F():
    return OperatorMatrix(SMALL, PROB, "F").dense()


@pytest.fixture(scope="module")
def dense_P():
    return OperatorMatrix(SMALL, PROB, "P").dense()


def _atoms(spec, problem):
    """Dense matrix of all atoms on the grid (columns)."""
    lay = frame_layout(spec)
    cols = []
    for i in range(lay.total):
        e = np.zeros(lay.total, complex)
        e[i] = 1.0
        cols.append(synthesize(spec, e, real=False).ravel())
    return np.array(cols).T


def _spectral_transport(spec, problem, u):
    # independent spectral discretisation of s . grad u + gamma u
    N = spec.grid_size
    k = 2j * np.pi * np.fft.fftfreq(N, spec.period / N)
    uh = np.fft.fft2(u)
    du1 = np.fft.ifft2(k[:, None] * uh)
    du2 = np.fft.ifft2(k[None, :] * uh)
    return problem.s[0] * du1 + problem.s[1] * du2 + problem.gamma * u


def test_transport_symbol():
    assert transport_symbol(TransportProblem(), np.zeros(2)) == 8.0
    p = TransportProblem((1.0, 0.0), 1.0)
    assert transport_symbol(p, np.array([1.0, 0.0])) == pytest.approx(1 + 2j * np.pi)
    from ridgesolve.operator import grid_symbol

    assert np.abs(grid_symbol(SMALL, PROB)).min() >= PROB.gamma - 1e-12


def test_problem_validation():
    with pytest.raises(ValueError):
        TransportProblem((1.0, 1.0))
    with pytest.raises(ValueError):
        TransportProblem(gamma=0.0)
    with pytest.raises(ValueError):
        TransportProblem(kappa0=-np.ones((4, 4)))
    with pytest.raises(ValueError):
        OperatorMatrix(SMALL, PROB, "Q")


def test_entries_against_grid_quadrature(dense_F):
    lay = frame_layout(SMALL)
    Phi = _atoms(SMALL, PROB)
    w = PROB.preconditioner.weights(SMALL)
    rng = np.random.default_rng(0)
    F = OperatorMatrix(SMALL, PROB, "F")
    h2 = SMALL.h**2
    for _ in range(30):
        i, k = rng.integers(lay.total, size=2)
        Ai = _spectral_transport(SMALL, PROB, Phi[:, i].reshape(16, 16))
        Ak = _spectral_transport(SMALL, PROB, Phi[:, k].reshape(16, 16))
        ref = h2 * np.vdot(Ai, Ak) / (w[i] * w[k])
        assert F.entry(int(i), int(k)) == pytest.approx(ref, abs=1e-8)
        assert dense_F[i, k] == pytest.approx(ref, abs=1e-8)


def test_far_scales_vanish(dense_F):
    j = frame_layout(SMALL).scale_of
    far = np.abs(j[:, None] - j[None, :]) >= 2
    assert np.max(np.abs(dense_F[far])) == 0.0


def test_diagonal_and_hermitian(dense_F):
    assert np.allclose(dense_F, dense_F.conj().T, atol=1e-13)
    d = np.diag(dense_F)
    assert np.all(np.abs(d.imag) < 1e-13)
    w = PROB.preconditioner.weights(SMALL)
    Phi = _atoms(SMALL, PROB)
    n2 = SMALL.h**2 * np.sum(np.abs(Phi) ** 2, 0)
    assert np.all(d.real >= PROB.gamma**2 * n2 / w**2 - 1e-12)
    assert np.all(d.real > 0)


def test_positive_semidefinite(dense_F):
    assert np.linalg.eigvalsh(dense_F).min() > -1e-10


def test_projector_entries(dense_P):
    w = PROB.preconditioner.weights(SMALL)
    Phi = _atoms(SMALL, PROB)
    gram = SMALL.h**2 * Phi.conj().T @ Phi
    assert np.allclose(dense_P, w[:, None] * gram / w[None, :], atol=1e-12)
    assert np.allclose(np.diag(dense_P), np.diag(gram))
    ov = tiles_overlap_matrix(SMALL)
    lay = frame_layout(SMALL)
    t = lay.tile_of
    assert np.all(dense_P[~ov[t][:, t]] == 0)


@given(st.integers(0, 2**31))
@settings(max_examples=10, deadline=None)
def test_projector_fixes_coefficient_images(seed):
    spec = FrameSpec(32, 3)
    P = OperatorMatrix(spec, PROB, "P")
    f = np.random.default_rng(seed).standard_normal((32, 32))
    c = coefficient_image(spec, PROB, f)
    assert np.linalg.norm(P.matvec(c) - c) <= 1e-9 * np.linalg.norm(c)


@given(st.integers(0, 2**31))
@settings(max_examples=10, deadline=None)
def test_quadratic_form_nonnegative(seed):
    spec = FrameSpec(32, 3)
    F = OperatorMatrix(spec, PROB, "F")
    rng = np.random.default_rng(seed)
    c = np.zeros(F.size, complex)
    idx = rng.choice(F.size, 40, replace=False)
    c[idx] = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    assert np.vdot(c, F.matvec(c)).real >= -1e-12


def test_range_projection():
    spec = FrameSpec(32, 3)
    F = OperatorMatrix(spec, PROB, "F")
    rng = np.random.default_rng(1)
    c = rng.standard_normal(F.size) + 0j
    p = F.range_project(c)
    assert np.allclose(F.range_project(p), p, atol=1e-10)
    assert np.allclose(F.matvec(c - p), 0, atol=1e-10)
    # eigenvalues of F on its range are the symbol spectrum
    lam = F.symbol_spectrum()
    assert np.vdot(p, F.matvec(p)).real / np.vdot(p, p).real <= lam.max() + 1e-9


def test_columns(dense_F):
    F = OperatorMatrix(SMALL, PROB, "F")
    pred, _ = zero_pattern(SMALL)
    lay = F.layout
    for k in range(0, F.size, 97):
        rows, vals = F.column(k)
        ref = np.flatnonzero(np.abs(dense_F[:, k]) > 1e-14)
        assert set(ref) <= set(rows.tolist())
        assert np.allclose(vals, dense_F[rows, k], atol=1e-12)
        assert np.all(pred[lay.tile_of[rows], lay.tile_of[k]])
        again = F.column(k)
        assert again[0] is rows and again[1] is vals
    P = OperatorMatrix(SMALL, PROB, "P")
    rows, _ = P.column(0)
    assert 0 < rows.size < P.size


def test_zero_pattern_exhaustive(dense_F):
    F = OperatorMatrix(SMALL, PROB, "F")
    pred, nz = zero_pattern(SMALL, F)
    ov = tiles_overlap_matrix(SMALL)
    assert np.all(nz <= ov) and np.all(ov <= pred)
    # overlapping pairs only differ where the window product is below rounding
    assert (ov & ~nz).sum() <= 0.05 * ov.sum()


def test_budget_and_compression_levels():
    assert budget(1) == 2
    assert [budget(k) for k in range(1, 9)] == [2, 1, 1, 1, 2, 2, 3, 4]
    with pytest.raises(ValueError):
        CompressedMatrix(OperatorMatrix(SMALL, PROB), 0)


def test_compression_full_budget_is_exact():
    F = OperatorMatrix(SMALL, PROB, "F")
    k = F.templates.kmax
    C = CompressedMatrix(F, k)
    rng = np.random.default_rng(2)
    c = rng.standard_normal(F.size) + 0j
    assert np.allclose(C.matvec(c), F.matvec(c), atol=1e-9)
    assert C.error_bound() <= 1e-8 * F.norm_bound()


def test_compression_keeps_largest_entries():
    F = OperatorMatrix(SMALL, PROB, "F")
    C = CompressedMatrix(F, 1)
    for k in (0, 100, 1000):
        rows, vals = C.column(k)
        assert rows.size <= 2
        full = np.sort(np.abs(F.column(k)[1]))[::-1]
        assert np.allclose(np.sort(np.abs(vals))[::-1], full[: rows.size])


def test_compression_error_bound_dominates_estimate():
    F = OperatorMatrix(FrameSpec(32, 3), PROB, "F")
    for k in (3, 8, 12):
        C = CompressedMatrix(F, k)
        assert C.error_estimate(steps=20) <= C.error_bound() * (1 + 1e-9)


def test_apply_matches_exact_product():
    spec = FrameSpec(32, 4)
    F = OperatorMatrix(spec, PROB, "F")
    rng = np.random.default_rng(3)
    c = np.zeros(F.size, complex)
    idx = rng.choice(F.size, 300, replace=False)
    c[idx] = rng.standard_normal(300) * 2.0 ** -rng.integers(0, 12, 300)
    cv = CoeffVector.from_dense(c)
    exact = F.matvec(c)
    for eps in (1e-1, 1e-3, 1e-6):
        for method in ("templates", "exact", "auto"):
            out = F.apply(cv, eps, method=method)
            assert np.linalg.norm(out.dense() - exact) <= eps


def test_apply_edge_cases():
    F = OperatorMatrix(SMALL, PROB, "F")
    assert F.apply(CoeffVector.zeros(F.size), 1e-3).nnz == 0
    c = CoeffVector([0, 5], [1.0, 2.0], F.size)
    big = F.apply(c, 1e6)
    assert np.linalg.norm(big.dense() - F.matvec(c)) <= 1e6
    with pytest.raises(ValueError):
        F.apply(c, 0.0)


def test_p_sparsity_and_schur_examples():
    assert measure_p_sparsity_dense(np.eye(5), 0.5) == pytest.approx(1.0)
    assert measure_p_sparsity_dense(np.diag([2.0, 2.0]), 0.7) == pytest.approx(2.0)
    assert schur_bound(np.eye(4)) == 1.0
    assert schur_bound(np.ones((2, 2))) == pytest.approx(2.0)
    rng = np.random.default_rng(4)
    for _ in range(5):
        A = rng.standard_normal((30, 20))
        est = power_norm(A.__matmul__, 20, A.T.__matmul__, dtype=float)
        assert schur_bound(A) >= est
        assert est == pytest.approx(np.linalg.norm(A, 2), rel=1e-3)


def test_p_sparsity_matches_dense(dense_F):
    F = OperatorMatrix(SMALL, PROB, "F")
    for p in (0.5, 0.8, 1.0):
        assert F.p_sparsity(p) == pytest.approx(measure_p_sparsity_dense(dense_F, p), rel=1e-9)
    lay = F.layout
    sec = lay.scale_of <= 2
    assert F.p_sparsity(0.8, max_scale=2) == pytest.approx(
        measure_p_sparsity_dense(dense_F[np.ix_(sec, sec)], 0.8), rel=1e-9
    )
    with pytest.raises(ValueError):
        F.p_sparsity(1.5)
    assert schur_bound(dense_F) == pytest.approx(F.norm_bound(), rel=1e-9)
    assert F.norm_bound() >= np.linalg.norm(dense_F, 2)


def test_gaussian_kappa_off_tile_decay():
    spec = FrameSpec(64, 5, period=1.0)
    x = np.arange(64) / 64
    X, Y = np.meshgrid(x, x, indexing="ij")
    k0 = 2 * np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.02)
    F = OperatorMatrix(spec, TransportProblem((1.0, 0.0), 8.0, kappa0=k0), "F")
    lay = F.layout
    best = np.zeros(5)
    for td in lay.tiles:
        if td.j > 1:
            continue
        e = np.zeros(F.size, complex)
        e[td.offset + td.size // 2] = 1.0
        col = np.abs(F.matvec(e))
        for d in range(5):
            m = np.abs(lay.scale_of - td.j) == d
            best[d] = max(best[d], col[m].max())
    assert best[2] > best[3] > best[4]


def test_coarse_and_rhs():
    f = CoeffVector([0, 1], [3.0, 1.0], 4)
    out = rhs_truncate(f, 1.0)
    assert out.nnz == 1 and out.values[0] == 3.0
    assert rhs_truncate(f, 10.0).nnz == 0
    assert coarse(f, 0.0) is f
    assert coarse(f, 10.0).nnz == 0


@given(st.integers(0, 2**31), st.floats(0.01, 0.99))
@settings(max_examples=50, deadline=None)
def test_coarse_against_sort_oracle(seed, frac):
    rng = np.random.default_rng(seed)
    n = 500
    v = rng.standard_normal(n) * np.exp(3 * rng.standard_normal(n))
    c = CoeffVector(np.arange(n), v, n)
    eps = frac * c.norm()
    out = coarse(c, eps)
    dropped = np.sqrt(max(c.norm() ** 2 - out.norm() ** 2, 0.0))
    assert dropped <= eps * (1 + 1e-12)
    mag2 = np.sort(v**2)[::-1]
    tail = np.sqrt(np.maximum(c.norm() ** 2 - np.cumsum(mag2), 0.0))
    nmin = int(np.argmax(tail <= eps)) + 1
    assert out.nnz <= 2 * nmin


def test_export_section(tmp_path):
    F = OperatorMatrix(SMALL, PROB, "F")
    p = tmp_path / "sec.txt"
    F.export_section(p, [0, 1, 2], [0, 1])
    lines = [l for l in p.read_text().splitlines() if not l.startswith("#")]
    D = F.dense()
    for line in lines:
        r, c, re, im = line.split()
        assert complex(float(re), float(im)) == pytest.approx(D[int(r), int(c)], abs=1e-12)


def test_analyze_and_coefficient_image_agree():
    f = np.random.default_rng(5).standard_normal((16, 16))
    w = PROB.preconditioner.weights(SMALL)
    assert np.allclose(coefficient_image(SMALL, PROB, f), w * analyze_dense(SMALL, f))
