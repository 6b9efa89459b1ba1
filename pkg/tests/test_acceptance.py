"""End-to-end acceptance checks at their frozen thresholds.

Each test prints one ``criterion N: PASS|FAIL ...`` line (also collected in
the terminal summary) before asserting.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ridgesolve import calculus as C
from ridgesolve import geometry as G
from ridgesolve.frame import FrameSpec, analyze, analyze_dense, frame_layout, l2_norm, partition_of_unity_error, synthesize
from ridgesolve.operator import OperatorMatrix, TransportProblem, coefficient_image, zero_pattern
from ridgesolve.reference import (
    BOX_DIRECTION,
    fourier_direct_solve,
    fourier_nterm_curve,
    gallery,
    localization_report,
    near_fraction,
    nterm_curve,
)
from ridgesolve.solver import SolverConfig, SolverDivergence, estimate_spectrum, reconstruct_solution, solve


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_parseval():
    t = time.perf_counter()
    spec = FrameSpec(256, 5)
    rng = np.random.default_rng(0)
    energy = rt = 0.0
    for _ in range(20):
        f = rng.standard_normal((256, 256))
        c = analyze(spec, f)
        nf = l2_norm(spec, f) ** 2
        energy = max(energy, abs(np.sum(np.abs(c.values) ** 2) - nf) / nf)
        rt = max(rt, np.linalg.norm(synthesize(spec, c) - f) / np.linalg.norm(f))
    dt = time.perf_counter() - t
    ok = energy <= 1e-10 and rt <= 1e-10 and dt < 60
    report(1, ok, f"energy {energy:.2e}, roundtrip {rt:.2e}, {dt:.1f}s")


def test_criterion_2_partition_of_unity():
    err = partition_of_unity_error(FrameSpec(512, 7))
    report(2, err <= 1e-10, f"max |sum psi^2 - 1| {err:.2e} on 512^2")


def test_criterion_3_uniform_conditioning():
    t = time.perf_counter()
    prob = TransportProblem((1.0, 0.0), 8.0)
    rho = {True: [], False: []}
    for J in (3, 4, 5, 6):
        spec = FrameSpec(4 * 2 ** (J + 1), J)
        for weighted in (True, False):
            F = OperatorMatrix(spec, prob, "F", weighted=weighted)
            P = OperatorMatrix(spec, prob, "P", weighted=weighted)
            rho[weighted].append(estimate_spectrum(F, P)[1])
    dt = time.perf_counter() - t
    w = np.array(rho[True])
    spread = (w.max() - w.min()) / w.min()
    # contraction gap 1 - rho is what degrades without the weights
    gap = 1 - np.array(rho[False])
    degrade = gap[0] / gap[-1]
    ok = spread < 0.25 and degrade >= 2 and dt < 600
    report(
        3,
        ok,
        f"rho J=3..6 {np.round(w, 3).tolist()} spread {spread:.1%}; "
        f"W=Id 1-rho {np.round(gap, 4).tolist()} drops {degrade:.1f}x; {dt:.0f}s",
    )


def test_criterion_4_sparsity():
    # zero pattern: every tile pair the predicate rules out is exactly zero
    spec3 = FrameSpec(16, 3)
    F3 = OperatorMatrix(spec3, TransportProblem(BOX_DIRECTION, 8.0))
    pred, nz = zero_pattern(spec3, F3)
    D = F3.dense()
    lay = frame_layout(spec3)
    leak = 0.0
    for a, ta in enumerate(lay.tiles):
        for b, tb in enumerate(lay.tiles):
            if not pred[a, b]:
                blk = D[ta.offset : ta.offset + ta.size, tb.offset : tb.offset + tb.size]
                leak = max(leak, float(np.abs(blk).max()))
    pattern_ok = leak == 0.0 and np.all(nz <= pred)

    F5 = OperatorMatrix(FrameSpec(256, 5), TransportProblem(BOX_DIRECTION, 8.0))
    ps = [F5.p_sparsity(0.8, m) for m in (3, 4, 5)]
    growth = max(b / a - 1 for a, b in zip(ps, ps[1:]))
    sparsity_ok = growth < 0.10

    F = OperatorMatrix(FrameSpec(64, 5), TransportProblem(BOX_DIRECTION, 8.0))
    k = np.arange(1, 9)
    est = np.array([F.compress(int(i)).error_estimate(steps=20) for i in k])
    scaled = est * 2.0 ** (0.25 * k)
    slope = np.polyfit(k, np.log2(est), 1)[0]
    # C_k 2^{k/4} bounded: the fitted decay of C_k must reach 2^{-k/4}
    comp_ok = slope <= -0.25

    report(
        4,
        pattern_ok and sparsity_ok and comp_ok,
        f"zero pattern {'ok' if pattern_ok else 'broken'} (max leak {leak:.1e}, "
        f"{int(nz.sum())} nonzero of {int(pred.sum())} admitted pairs); "
        f"p-sparsity J=3..5 {np.round(ps, 1).tolist()} growth {growth:.1%}; "
        f"C_k 2^(k/4) {np.round(scaled, 3).tolist()} log2-slope {slope:.3f}",
    )


def _gauss_setup(N, J):
    spec = FrameSpec(N, J)
    prob = gallery("gaussian", spec).problem
    F = OperatorMatrix(spec, prob, "F")
    P = OperatorMatrix(spec, prob, "P")
    return spec, prob, F, P, estimate_spectrum(F, P)


def test_criterion_5_solver_correctness():
    t = time.perf_counter()
    spec, prob, F, P, (alpha, rho, nP, info) = _gauss_setup(256, 5)
    exact = fourier_direct_solve(prob, spec)
    errs, supports = [], []
    for eps in (1e-3, 1e-4):
        cfg = SolverConfig(eps=eps, alpha=alpha, rho=rho, norm_P=nP, lambda_min=info["lambda_min"])
        u, log = solve(prob, spec, cfg, F, P)
        errs.append(l2_norm(spec, reconstruct_solution(spec, prob, u) - exact))
        supports.append(u.nnz)
    dt = time.perf_counter() - t
    ok = errs[0] <= 1e-3 and errs[1] <= 1e-4 and supports[1] <= 8 * supports[0] and dt < 900
    report(
        5,
        ok,
        f"grid error {errs[0]:.2e} (eps 1e-3), {errs[1]:.2e} (eps 1e-4); "
        f"support {supports[0]} -> {supports[1]} ({supports[1] / supports[0]:.2f}x); {dt:.0f}s",
    )


def test_criterion_6_projection_necessity():
    spec, prob, F, P, (alpha, rho, nP, info) = _gauss_setup(512, 6)
    ref = coefficient_image(spec, prob, fourier_direct_solve(prob, spec))
    eps = 1e-5
    base = SolverConfig(eps=eps, alpha=alpha, rho=rho, norm_P=nP, lambda_min=info["lambda_min"])
    best = {}
    outer = None
    for proj in (True, False):
        cfg = SolverConfig(
            eps=eps,
            alpha=alpha,
            rho=rho,
            norm_P=nP,
            lambda_min=info["lambda_min"],
            projection=proj,
            inner_steps=base.inner_steps,
            max_outer_iterations=outer or 200,
        )
        try:
            _, log = solve(prob, spec, cfg, F, P, reference=ref)
        except SolverDivergence as e:
            log = e.log
        outer = outer or len(log)
        best[proj] = float(np.nanmin(log.error))
    ratio = best[False] / best[True]
    report(
        6,
        ratio >= 10,
        f"best coefficient error with projection {best[True]:.2e}, without {best[False]:.2e} "
        f"({ratio:.0f}x; K={base.inner_steps}, {outer} outer steps)",
    )


def test_criterion_7_nterm():
    spec = FrameSpec(2048, 5)
    b = gallery("box_gaussian", spec)
    u = fourier_direct_solve(b.problem, spec)
    Ns = np.unique(np.geomspace(100, 10000, 9).astype(int))
    ridge = nterm_curve(spec, u, Ns, b.problem).fit_exponent()
    four = fourier_nterm_curve(u, Ns).fit_exponent()
    report(
        7,
        ridge >= 1.0 and ridge - four >= 0.4,
        f"ridgelet exponent {ridge:.3f}, Fourier {four:.3f}, gap {ridge - four:.3f}",
    )


def test_criterion_8_localisation():
    spec = FrameSpec(2048, 10)
    b = gallery("box_gaussian", spec)
    c = analyze_dense(spec, fourier_direct_solve(b.problem, spec))
    rep = localization_report(spec, c, 10000, b.lines)
    del c
    frac = near_fraction(rep, 7)
    counts = " ".join(f"j{r['j']}:{r['count']}/{r['reference_count']}" for r in rep)
    report(8, frac >= 0.70, f"near fraction at j>=7 {frac:.1%}; counts/reference {counts}")


def test_criterion_9_identities_and_geometry():
    rng = np.random.default_rng(9)
    failures = []

    bad = 0
    for _ in range(50):
        d, n = int(rng.integers(1, 4)), int(rng.integers(0, 4))
        f, g = C.MultiPoly.random(d, 3, rng), C.MultiPoly.random(d, 3, rng)
        bad += C.iterated_laplacian_product(f, g, n) != C.direct_laplacian_product(f, g, n)
    if bad:
        failures.append(f"product rule {bad}/50")

    tri = all(a == b for a, b in (C.trinomial_factorial_identity(n) for n in range(9)))
    tri = tri and all(
        a == b for n in range(9) for a, b in (C.binomial_trinomial_identity(n, ell) for ell in range(2 * n + 1))
    )
    if not (tri and C.trinomial_pascal_holds(8)):
        failures.append("trinomial")

    for _ in range(10):
        f, g = C.MultiPoly.random(2, 3, rng), C.MultiPoly.random(2, 3, rng)
        if not C.laplacian_product_bound_check(f, g, 2, rng.uniform(-1, 1, (20, 2)))[0]:
            failures.append("product bound")
            break

    N = 256
    bf, bg = C.bump(N, (0.5, 0.5), 0.4), C.bump(N, (0.3, 0.6), 0.25)
    for U in (np.eye(2), C.shear_matrix(3, 2), C.shear_matrix(5, -7)):
        for a in ((0, 0), (1, 0), (0, 1), (1, 1), (2, 2)):
            if not C.conv_derivative_bound_check(bf, bg, U, a, samples=500)[0]:
                failures.append(f"convolution bound {a}")

    # geometry
    x, y = rng.standard_normal((2, 5000, 3))
    x /= np.linalg.norm(x, axis=1)[:, None]
    y /= np.linalg.norm(y, axis=1)[:, None]
    e, dg = np.linalg.norm(x - y, axis=1), G.geodesic_distance(x, y)
    if not (np.all(e <= dg + 1e-12) and np.all(dg <= np.pi / 2 * e + 1e-12)):
        failures.append("metric equivalence")

    for d, alpha in ((2, 2.0**-5), (3, 0.5), (3, 0.25)):
        cov = G.build_covering(d, alpha)
        pts = rng.standard_normal((20000, d))
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        gap = G.geodesic_distance(pts[:, None, :], cov.array()[None]).min(1).max()
        sep = G.geodesic_distance(cov.array()[:, None, :], cov.array()[None])
        np.fill_diagonal(sep, np.inf)
        if gap >= alpha:
            failures.append(f"covering d={d} alpha={alpha}")
        if sep.min() < 2 * alpha / 3:
            failures.append(f"1/3-disjointness d={d} alpha={alpha}")

    for _ in range(500):
        j = int(rng.integers(0, 12))
        s_tile, s = rng.standard_normal((2, 2))
        s_tile /= np.linalg.norm(s_tile)
        s /= np.linalg.norm(s)
        if np.linalg.norm(np.linalg.solve(G.u_matrix(j, s_tile), s)) > G.tile_weight(j, s, s_tile) + 1e-9:
            failures.append("inverse estimate")
            break

    spec = FrameSpec(128, 5)
    worst = 0.0
    for td in frame_layout(spec).tiles:
        if td.j == 0:
            continue
        U = G.u_matrix(td.j, td.direction)
        k = np.stack(np.unravel_index(td.fidx[td.values > 0], (128, 128)), 1)
        k = np.where(k >= 64, k - 128, k) / spec.period
        k = k * np.sign(k @ td.direction)[:, None]
        worst = max(worst, float(np.max(np.linalg.norm(k @ U, axis=1))))
    if worst > 5.0:
        failures.append(f"pullback radius {worst:.2f}")

    report(
        9,
        not failures,
        f"calculus and geometry checks; pullback radius {worst:.3f}"
        + (f"; failed: {', '.join(failures)}" if failures else ""),
    )


if __name__ == "__main__":
    pytest.main([__file__, "-s", "-q"])
