import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridgesolve.frame import (
    CoeffVector,
    FrameIndex,
    FrameSpec,
    Preconditioner,
    analyze,
    analyze_dense,
    apply_weights,
    enumerate_indices,
    frame_bounds_estimate,
    frame_layout,
    l2_norm,
    partition_of_unity_error,
    read_coefficients,
    synthesize,
    write_coefficients,
)
from ridgesolve.windows import Tile

SPEC = FrameSpec(64, 4)


def test_spec_validation():
    with pytest.raises(ValueError):
        FrameSpec(60, 2)
    with pytest.raises(ValueError):
        FrameSpec(32, 5)
    with pytest.raises(ValueError):
        FrameSpec(32, 2, period=-1.0)
    assert FrameSpec(256, 5).period == 4.0


def test_tile_counts():
    assert len(enumerate_indices(FrameSpec(8, 0))) == 1
    assert len(enumerate_indices(FrameSpec(64, 3))) == 57
    tiles = [t for t, _ in enumerate_indices(SPEC)]
    assert sum(t.j == 0 for t in tiles) == 1
    for j in range(1, 5):
        assert sum(t.j == j for t in tiles) == 2 ** (j + 2)


@pytest.mark.parametrize("spec", [FrameSpec(32, 2), FrameSpec(64, 4), FrameSpec(128, 5, period=1.0)])
def test_partition_of_unity_on_grid(spec):
    assert partition_of_unity_error(spec) < 1e-12


def test_analyze_zero_and_empty_synthesis():
    assert analyze(SPEC, np.zeros((64, 64))).nnz == 0
    total = frame_layout(SPEC).total
    assert np.all(synthesize(SPEC, CoeffVector.zeros(total)) == 0)


def test_size_mismatch():
    with pytest.raises(ValueError):
        analyze(SPEC, np.zeros((32, 32)))
    with pytest.raises(ValueError):
        synthesize(SPEC, CoeffVector.zeros(5))


@given(st.integers(0, 2**31))
@settings(max_examples=15, deadline=None)
def test_parseval_and_roundtrip(seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((64, 64))
    c = analyze_dense(SPEC, f)
    assert abs(np.vdot(c, c).real / l2_norm(SPEC, f) ** 2 - 1) < 1e-10
    g = synthesize(SPEC, c)
    assert np.linalg.norm(g - f) / np.linalg.norm(f) < 1e-10


def test_complex_roundtrip():
    rng = np.random.default_rng(1)
    f = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    spec = FrameSpec(32, 2)
    g = synthesize(spec, analyze(spec, f))
    assert np.allclose(g, f, atol=1e-12)


def test_atom_norms_and_self_coefficient():
    lay = frame_layout(SPEC)
    rng = np.random.default_rng(2)
    for i in rng.choice(lay.total, 25, replace=False):
        e = np.zeros(lay.total)
        e[i] = 1.0
        phi = synthesize(SPEC, e, real=False)
        n2 = l2_norm(SPEC, phi) ** 2
        assert n2 <= 1 + 1e-12
        c = analyze_dense(SPEC, phi)
        assert c[i].real == pytest.approx(n2, abs=1e-12)
        assert np.vdot(c, c).real == pytest.approx(n2, rel=1e-10)


def test_frame_bounds():
    lo, hi = frame_bounds_estimate(SPEC, trials=12)
    assert 1 - 1e-8 <= lo <= hi <= 1 + 1e-8
    with pytest.raises(ValueError):
        frame_bounds_estimate(SPEC, trials=3)


def test_constant_is_lowpass_only():
    lay = frame_layout(SPEC)
    c = analyze_dense(SPEC, np.ones((64, 64)))
    t0 = lay.tiles[0]
    assert t0.tile.j == 0
    rest = np.delete(c, np.arange(t0.offset, t0.offset + t0.size))
    assert np.max(np.abs(rest)) < 1e-12


def test_translation_covariance():
    lay = frame_layout(SPEC)
    rng = np.random.default_rng(3)
    f = rng.standard_normal((64, 64))
    c = analyze_dense(SPEC, f)
    for td in lay.tiles[::7]:
        M1, M2 = td.shape
        g = np.roll(f, (64 // M1, 64 // M2), axis=(0, 1))
        cg = analyze_dense(SPEC, g)
        a = c[td.offset : td.offset + td.size].reshape(M1, M2)
        b = cg[td.offset : td.offset + td.size].reshape(M1, M2)
        assert np.allclose(b, np.roll(a, (1, 1), axis=(0, 1)), atol=1e-12)


def test_index_roundtrip():
    lay = frame_layout(SPEC)
    for i in (0, 5, lay.total // 2, lay.total - 1):
        lam = lay.frame_index(i)
        assert lay.index_of(lam) == i
    with pytest.raises(IndexError):
        lay.index_of(FrameIndex(0, 0, 0, 10**6, 0))


def test_weights():
    pre = Preconditioner((1.0, 0.0))
    assert pre.weight(3, np.array([0.0, 1.0])) == 1.0
    assert pre.weight(3, np.array([1.0, 0.0])) == 9.0
    assert 1.0 <= pre.weight(0, np.array([0.6, 0.8])) <= 2.0
    lay = frame_layout(SPEC)
    w = pre.weights(SPEC)
    j = lay.scale_of
    assert np.all(w >= 1) and np.all(w <= 1 + 2.0**j)
    with pytest.raises(ValueError):
        Preconditioner((1.0, 1.0))


def test_apply_weights_inverse_pair():
    pre = Preconditioner((0.6, 0.8))
    c = analyze(SPEC, np.random.default_rng(4).standard_normal((64, 64)))
    back = apply_weights(pre, SPEC, apply_weights(pre, SPEC, c, 1), -1)
    assert np.allclose(back.values, c.values)
    assert apply_weights(pre, SPEC, CoeffVector.zeros(c.size), 1).nnz == 0
    with pytest.raises(ValueError):
        apply_weights(pre, SPEC, c, 2)


def test_single_aligned_coefficient_scaled_by_nine():
    spec = FrameSpec(32, 3)
    lay = frame_layout(spec)
    # no shear tile is centred on slope 0, so take s along the tile centre
    td = next(t for t in lay.tiles if t.tile == Tile(3, 0, 0))
    pre = Preconditioner(tuple(td.direction))
    c = CoeffVector([td.offset], [1.0], lay.total)
    assert apply_weights(pre, spec, c, 1).values[0] == pytest.approx(9.0)


def test_coefficient_file_roundtrip(tmp_path):
    c = analyze(SPEC, np.random.default_rng(5).standard_normal((64, 64)))
    c = CoeffVector(c.index[::50], c.values[::50], c.size)
    p = tmp_path / "c.txt"
    write_coefficients(p, SPEC, c, s=(0.6, 0.8))
    spec, d, header = read_coefficients(p)
    assert spec == SPEC
    assert header["s"] == [0.6, 0.8]
    assert np.array_equal(d.index, c.index)
    assert np.array_equal(d.values, c.values)


def test_norm_equivalence_band():
    """||W G f|| / ||f||_{H^1} stays in a fixed band as J grows."""
    ratios = []
    for J in range(3, 7):
        N = 4 * 2 ** (J + 1)
        spec = FrameSpec(N, J, period=1.0)
        x = np.arange(N) / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        f = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.02)
        w = Preconditioner((1.0, 0.0)).weights(spec)
        c = analyze_dense(spec, f) * w
        k = np.fft.fftfreq(N, 1.0 / N)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        fh = np.fft.fft2(f) / N**2
        hs = np.sqrt(np.sum((1 + np.abs(K1)) ** 2 * np.abs(fh) ** 2))
        ratios.append(np.linalg.norm(c) / hs)
    assert max(ratios) / min(ratios) < 2.0
