import math

import numpy as np
import pytest

from heisenbeta import beta, core, graphs
from heisenbeta.beta import AffineOnPw, QuasiBox, VerticalPlane
from heisenbeta.fields import BoxField
from heisenbeta.graphs import GraphFamilySpec, IntrinsicGraph


from functools import cache


@cache
def plane_graph(seed=3, lam=0.4, n=2, res=8):
    spec = GraphFamilySpec("vertical-plane", n=n, lam=lam, seed=seed, resolution=res)
    return graphs.make_family(spec)


@cache
def bump_graph(sigma=0.5, amp=None, lam=0.4, n=2, halfwidth=4.0, res=32,
               horizontal=False):
    """Bump with controllable support, amplitude tuned for the cone by hand."""
    lo = np.array([-halfwidth] * (2 * n - 1) + [-halfwidth**2])
    amp = amp if amp is not None else 0.3 * sigma

    def f(p):
        if horizontal:  # smooth: no z-kink at the origin
            rho_sq = (p[:, : 2 * n - 1] ** 2).sum(axis=1)
        else:
            rho_sq = core.gauge_norm(graphs.v0_embed(p, n)) ** 2
        return amp * np.exp(-rho_sq / sigma**2)

    fld = BoxField.from_callable(f, lo, -lo, res)
    G = IntrinsicGraph(core.basis_vector("Y", n, n), fld, lam, graphs.default_lambda_prime(lam))
    assert graphs.check_cone_condition(G, trials=4000, seed=99).passed
    return G


def gauge_distance_oracle(p, plane, seed=0):
    """Brute-force min of gauge_dist(p, q) over the vertical plane."""
    from scipy.optimize import minimize

    n = core.group_index(p)
    nu = plane.normal
    _, _, vt = np.linalg.svd(nu[None, :], full_matrices=True)
    V = vt[1:]  # spanning directions of the hyperplane
    u0 = plane.offset * nu

    def target(params):
        q = core.lift_pi(u0 + params[:-1] @ V, params[-1])
        return core.gauge_dist(p, q)

    start = np.append(V @ (core.project_pi(p) - u0), core.zpart(p))
    best = minimize(target, start, method="Nelder-Mead",
                    options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000}).fun
    rng = np.random.default_rng(seed)
    for _ in range(8):
        jitter = start + rng.standard_normal(2 * n) * max(1.0, np.abs(start).max())
        trial = minimize(target, jitter, method="Nelder-Mead",
                         options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000}).fun
        best = min(best, trial)
    return best


class TestDistToVerticalPlane:
    def test_point_on_plane(self):
        L = VerticalPlane(np.array([1.0, 0.0, 0.0, 0.0]), 2.0)
        p = core.hpoint([2.0, 1.0], [3.0, -1.0], 7.0)
        assert beta.dist_to_vertical_plane(p, L) == 0.0

    def test_axis_plane_n1(self):
        L = VerticalPlane(np.array([1.0, 0.0]), 0.0)
        p = core.hpoint([3.0], [0.0], 7.0)
        assert beta.dist_to_vertical_plane(p, L) == pytest.approx(3.0)

    def test_dilation_covariance(self):
        L = VerticalPlane(np.array([0.6, -0.8]), 0.5)
        p = core.hpoint([1.2], [-0.4], 0.9)
        L2 = VerticalPlane(L.normal, 2.0 * L.offset)
        d1 = beta.dist_to_vertical_plane(p, L)
        d2 = beta.dist_to_vertical_plane(core.dilate(2.0, p), L2)
        assert d2 == pytest.approx(2.0 * d1)

    def test_matches_gauge_minimization_oracle(self):
        rng = np.random.default_rng(11)
        for i in range(50):
            n = rng.integers(1, 3)
            nu = rng.standard_normal(2 * n)
            L = VerticalPlane(nu, rng.standard_normal())
            p = core.hpoint(
                rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal()
            )
            closed = beta.dist_to_vertical_plane(p, L)
            if closed < 0.1:  # relative comparison needs separation
                p = core.group_mul(p, core.lift_pi(L.normal * 0.5, 0.0))
                closed = beta.dist_to_vertical_plane(p, L)
            brute = gauge_distance_oracle(p, L, seed=i)
            assert abs(brute - closed) / closed < 1e-3


class TestQuasiBox:
    def test_membership_is_exact_box(self):
        Q = QuasiBox(core.basis_vector("Y", 2, 2), core.identity(2), 2.0)
        # chart points with coordinates on the boundary are members
        pts = Q.chart_point(
            np.array([1.0, -1.0, 0.0]),
            np.array([[0.0, 0.0], [0.6, 0.8], [0.0, 0.0]]),
            np.array([0.3, -0.2, 1.0]),
        )
        assert Q.contains(pts).all()
        outside = Q.chart_point(np.array([1.2]), np.array([[0.0, 0.0]]), np.array([0.0]))
        assert not Q.contains(outside).any()

    def test_quasinorm_scales_with_radius(self):
        w = core.horizontal_direction(core.hpoint([0.2, 0.1], [0.0, 1.0], 0.0))
        g = core.hpoint([0.5, -1.0], [2.0, 0.3], 1.5)
        Q1 = QuasiBox(w, g, 1.0)
        Q3 = QuasiBox(w, g, 3.0)
        pts = Q1.chart_point(
            np.array([0.9, 0.5]), np.array([[0.1, 0.2], [0.0, 0.0]]), np.array([0.4, -0.9])
        )
        assert np.allclose(Q3.quasinorm(pts), Q1.quasinorm(pts) / 3.0)

    def test_uniform_points_inside(self):
        Q = QuasiBox(core.basis_vector("Y", 2, 2), core.hpoint([1.0, 0.0], [0.5, 2.0], -1.0), 0.7)
        pts = Q.uniform_points(500, np.random.default_rng(0))
        assert Q.contains(pts).all()
        assert np.allclose(core.yn(pts), 0.0, atol=1e-12)

    def test_slice_translate_identity(self):
        # Q(g,r) cut by a P_w coset is a left-translate of the model slab
        rng = np.random.default_rng(5)
        n = 2
        for trial in range(100):
            w = core.horizontal_direction(
                core.hpoint(0.3 * rng.standard_normal(2),
                            np.append(0.3 * rng.standard_normal(1), 1.0), 0.0)
            )
            g = core.hpoint(rng.standard_normal(2), rng.standard_normal(2), rng.standard_normal())
            r = float(rng.uniform(0.3, 3.0))
            s = float(rng.uniform(-1.0, 1.0))
            Q = QuasiBox(w, g, r)
            p = rng.uniform(-0.7, 0.7, size=(8, 2))
            keep = (p**2).sum(axis=1) <= 1.0
            bprime = Q.chart_point(np.full(keep.sum(), s), p[keep], rng.uniform(-1, 1, keep.sum()))
            # bprime are points of Pi_w(g delta_r(D_s-slab)); rebuild the raw slab
            alpha = -core.yn(g)
            raw = core.group_mul(core.group_mul(core.group_inv(g), bprime),
                                 core.dilate(-alpha, w))
            omega = core.symplectic_form(core.project_pi(w), Q._nu)
            zshift = alpha * (r * s) * (-omega)
            ustar = core.group_mul(
                g, core.group_mul(core.hpoint([0.0, 0.0], [0.0, 0.0], zshift),
                                  core.dilate(alpha, w))
            )
            translated = core.group_mul(ustar, raw)
            assert np.max(np.abs(translated - bprime)) < 1e-9


class TestBetaNumber:
    def test_plane_beta_is_float_noise(self):
        G = plane_graph()
        x = G.psi(np.zeros(4))
        est = beta.beta_number(G, x, 1.0, samples=1500, seed=1)
        assert est.value <= max(3.0 * est.stderr, 1e-9)

    def test_scale_invariance_under_doubling(self):
        G = bump_graph(sigma=1.5, res=16)
        x = G.psi(np.array([0.2, 0.1, -0.3, 0.4]))
        est1 = beta.beta_number(G, x, 1.0, samples=1500, seed=7)
        est2 = beta.beta_number(
            graphs.dilate_graph(G, 2.0), core.dilate(2.0, x), 2.0, samples=1500, seed=7
        )
        tol = 2.0 * math.hypot(est1.stderr, est2.stderr)
        assert abs(est1.value - est2.value) <= max(tol, 1e-12)

    def test_plane_normal_dilation_covariant(self):
        G = bump_graph(sigma=1.5, res=16)
        x = G.psi(np.zeros(4))
        e1 = beta.beta_number(G, x, 1.0, samples=1500, seed=3)
        e2 = beta.beta_number(graphs.dilate_graph(G, 2.0), core.dilate(2.0, x), 2.0,
                              samples=1500, seed=3)
        dot = abs(e1.best_plane.normal @ e2.best_plane.normal)
        assert dot > 1 - 1e-6

    def test_bump_scales(self):
        # beta at the bump scale dominates beta far above it
        G = bump_graph(sigma=0.35, res=32)
        x = G.psi(np.zeros(4))
        near = beta.beta_number(G, x, 0.6, samples=3000, seed=5)
        far = beta.beta_number(G, x, 3.2, samples=3000, seed=6)
        assert far.value < near.value

    def test_too_few_samples_raises(self):
        # tiny domain, huge ball: the graph portion is starved
        lo = np.array([-0.2, -0.2, -0.2, -0.04])
        fld = BoxField(lo, -lo, np.zeros((8, 8, 8, 8)))
        G = IntrinsicGraph(core.basis_vector("Y", 2, 2), fld, 0.3, 0.72)
        with pytest.raises(ValueError, match="samples"):
            beta.beta_number(G, core.identity(2), 5.0, samples=200, seed=2,
                             max_proposal_factor=20)

    def test_ahlfors_regularity(self):
        G = plane_graph(seed=9)
        x = G.psi(np.zeros(4))
        ratios = []
        for r in (0.25, 0.5, 1.0, 2.0):
            m = beta.graph_ball_measure(G, x, r, samples=3000, seed=4)
            ratios.append(m / r**5)
        assert max(ratios) / min(ratios) < 4.0


class TestAffineFits:
    def _graph_and_box(self, seed=3, r=1.5):
        G = plane_graph(seed=seed)
        x = G.psi(np.zeros(4))
        return G, QuasiBox(G.w, x, r)

    def test_affine_recovery(self):
        n = 2
        coef = np.array([0.3, -0.2, 0.15])
        G, Q = self._graph_and_box()

        def f(coords):
            return coords[:, : 2 * n - 1] @ coef + 0.4

        fit = beta.best_affine_fit(f, Q)
        assert fit.residual < 1e-10
        assert np.allclose(fit.coef, coef, atol=1e-10)
        assert fit.const == pytest.approx(0.4, abs=1e-10)

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(21)
        G, _ = self._graph_and_box()
        for i in range(50):
            x = G.psi(rng.uniform(-1, 1, size=4))
            Q = QuasiBox(G.w, x, float(rng.uniform(0.5, 2.0)))
            target = rng.standard_normal(4)

            def f(coords):
                return np.tanh(coords @ target)

            fit = beta.best_affine_fit(f, Q, nodes_per_axis=8)
            P = core.plane_p_w(Q.w)
            pts, _, cell = beta._chart_nodes(Q, P, 8)
            vals = f(graphs.v0_coords(pts))
            design = beta._affine_design(pts)
            sol = np.linalg.solve(design.T @ design, design.T @ vals)
            resid = math.sqrt(cell * float(((vals - design @ sol) ** 2).sum()))
            assert abs(resid - fit.residual) <= 1e-9 * max(1.0, resid)
            assert np.allclose(sol[:-1], fit.coef, atol=1e-8)

    def test_z_coordinate_residual_positive(self):
        G, Q = self._graph_and_box()
        fit = beta.best_affine_fit(lambda c: c[:, -1], Q)
        assert fit.residual > 1e-3

    def test_shift_covariance(self):
        G, Q = self._graph_and_box()
        shift = graphs.v0_embed(np.array([0.4, -0.2, 0.3, 0.8]), 2)

        def f(coords):
            return np.sin(coords @ np.array([0.5, 1.0, -0.7, 0.2]))

        def f_shifted(coords):
            moved = core.group_mul(shift, graphs.v0_embed(coords, 2))
            return f(graphs.v0_coords(moved))

        Q_shift = QuasiBox(Q.w, core.group_mul(core.group_inv(shift), Q.center), Q.radius)
        fit = beta.best_affine_fit(f, Q)
        fit_shift = beta.best_affine_fit(f_shifted, Q_shift)
        assert abs(fit.residual - fit_shift.residual) < 1e-10


class TestSliceAffineFits:
    def _box(self, r=1.5):
        G = plane_graph()
        return QuasiBox(G.w, G.psi(np.zeros(4)), r)

    def test_affine_input(self):
        Q = self._box()
        fit = beta.best_slice_affine_fit(lambda c: c @ np.array([0.2, -0.1, 0.4, 0.0]) + 1.0, Q)
        assert fit.residual < 1e-10

    def test_slice_affine_but_not_affine(self):
        Q = self._box()

        def f(coords):
            # affine on each x_2 = const coset with varying coefficients
            return np.sin(3.0 * coords[:, 1]) * coords[:, 0] + np.cos(coords[:, 1])

        sfit = beta.best_slice_affine_fit(f, Q)
        afit = beta.best_affine_fit(f, Q)
        assert sfit.residual < 1e-9
        assert afit.residual > 1e-2

    def test_class_nesting_monotonicity(self):
        Q = self._box()
        rng = np.random.default_rng(33)
        target = rng.standard_normal(4)

        def f(coords):
            return np.tanh(coords @ target) + 0.3 * coords[:, 0] ** 2

        aff = beta.best_affine_fit(f, Q).residual
        saff = beta.best_slice_affine_fit(f, Q).residual
        vert = beta.best_vertical_fit(f, Q)
        assert saff <= aff + 1e-12
        assert vert <= saff + 1e-12


class TestSwitchAffine:
    def _commuting_pair(self, rng, scale=0.15):
        # directions commute iff their difference is Omega-orthogonal to
        # w, so perturb along the C_w basis
        w = core.horizontal_direction(
            core.hpoint([scale * rng.standard_normal(), 0.0],
                        [scale * rng.standard_normal(), 1.0], 0.0)
        )
        C = core.plane_p_w(w).horizontal
        t = scale * rng.standard_normal(len(C))
        w2 = core.horizontal_direction(core.lift_pi(core.project_pi(w) + t @ C))
        assert abs(core.zpart(core.commutator(w, w2))) < 1e-12
        return w, w2

    def test_same_direction_identity(self):
        T = AffineOnPw(np.array([0.1, 0.0, -0.2, 0.0]), 0.7)
        w = core.basis_vector("Y", 2, 2)
        res = beta.switch_affine(T, w, w)
        assert np.allclose(res.T_prime.a, T.a)
        assert res.T_prime.b == pytest.approx(T.b)
        assert res.max_defect < 1e-12

    def test_constant_T(self):
        rng = np.random.default_rng(3)
        w, w2 = self._commuting_pair(rng)
        T = AffineOnPw(np.zeros(4), 1.3)
        res = beta.switch_affine(T, w, w2)
        assert res.T_prime.b == pytest.approx(1.3)
        # float z-rounding enters the gauge through a 4th root
        assert res.max_coord_defect < 1e-13
        assert res.max_defect < 1e-7

    def test_random_admissible(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            w, w2 = self._commuting_pair(rng)
            a = 0.5 * rng.standard_normal(4)
            T = AffineOnPw(a, rng.standard_normal())
            if np.linalg.norm(core.project_pi(w) - core.project_pi(w2)) * T.lip(core.plane_p_w(w)) >= 0.45:
                continue
            res = beta.switch_affine(T, w, w2, grid=5)
            assert res.max_coord_defect < 1e-12
            assert res.max_defect < 1e-7
            assert res.lip_after < 2.0 * max(res.lip_before, 1e-12) + 1e-12

    def test_exact_mode_identical_graphs(self):
        # over exact rationals the two parametrizations agree identically
        rng = np.random.default_rng(23)
        for _ in range(3):
            w, w2 = self._commuting_pair(rng)
            T = AffineOnPw(0.4 * rng.standard_normal(4), rng.standard_normal())
            if np.linalg.norm(core.project_pi(w) - core.project_pi(w2)) * T.lip(core.plane_p_w(w)) >= 0.45:
                continue
            res = beta.switch_affine(T, w, w2, grid=4, exact=True)
            assert res.max_defect == 0.0
            assert res.max_coord_defect == 0.0

    def test_noncommuting_rejected(self):
        w = core.basis_vector("Y", 2, 2)
        w2 = core.horizontal_direction(core.hpoint([0.0, 0.3], [0.0, 1.0], 0.0))
        with pytest.raises(ValueError, match="commute"):
            beta.switch_affine(AffineOnPw(np.zeros(4), 0.0), w, w2)


class TestSaffCompare:
    def test_vertical_plane_both_tiny(self):
        G = plane_graph(seed=31)
        x = G.psi(np.zeros(4))
        w2 = core.horizontal_direction(core.hpoint([0.05, 0.0], [0.02, 1.0], 0.0))
        rep = beta.saff_compare(G, w2, x, 0.8, c=2.0)
        assert rep.left < 1e-6 and rep.right < 1e-6

    def test_bump_ratio_stable_under_refinement(self):
        G = bump_graph(sigma=1.2, amp=0.35, res=16, horizontal=True)
        G32 = bump_graph(sigma=1.2, amp=0.35, res=32, horizontal=True)
        x = G.psi(np.zeros(4))
        w2 = core.horizontal_direction(core.hpoint([0.05, 0.0], [0.02, 1.0], 0.0))
        r1 = beta.saff_compare(G, w2, x, 0.8, c=2.0)
        r2 = beta.saff_compare(G32, w2, x, 0.8, c=2.0)
        assert r1.ratio > 0 and r2.ratio > 0
        assert abs(r1.ratio - r2.ratio) <= 0.2 * max(r1.ratio, r2.ratio)

    def test_enlarging_c_never_shrinks_right_side(self):
        G = bump_graph(sigma=1.2, res=16)
        x = G.psi(np.zeros(4))
        P = core.plane_p_w(G.w)
        small = beta.best_slice_affine_fit(G.field, QuasiBox(G.w, x, 1.0), P).residual
        large = beta.best_slice_affine_fit(G.field, QuasiBox(G.w, x, 1.5), P).residual
        assert large >= small * (1.0 - 0.05)


class TestLipOfBestFit:
    def _quasiball(self, n=2):
        h = np.array([1.0, 1.0, 1.0, 1.0, 0.25])
        return beta.BoxQuasiball(core.hpoint([0.3, -0.2], [0.1, 0.5], 0.2), h)

    def test_affine_ratio_one(self):
        # the fit recovers f exactly; the sampled Lip of f approaches
        # ||a|| from below, so the ratio sits just above 1
        U = self._quasiball()
        a = np.array([0.4, -0.3, 0.2, 0.6])

        def f(pts):
            return core.project_pi(pts) @ a + 0.3

        ratio = beta.lip_of_best_fit(f, U, samples=4000, seed=1)
        assert 1.0 - 1e-9 <= ratio <= 1.10

    def test_constant_is_zero(self):
        U = self._quasiball()
        assert beta.lip_of_best_fit(lambda p: np.full(len(p), 2.2), U) == 0.0

    def test_quasiball_witness(self):
        U = self._quasiball()
        assert U.inner_radius == pytest.approx(1.0)
        assert U.mu == pytest.approx(core.gauge_norm(U.halfwidths))

    def test_random_fields_bounded_and_stable(self):
        U = self._quasiball()
        rng = np.random.default_rng(7)

        def make_field(i):
            coarse = rng.standard_normal((3, 3, 3, 3, 3))
            lo = -U.halfwidths * 1.01
            fld = BoxField(lo, -lo, coarse)

            def f(pts, fld=fld):
                offs = core.group_mul(core.group_inv(U.center), pts)
                return fld(offs)

            return f

        fields = [make_field(i) for i in range(25)]
        small = max(
            beta.lip_of_best_fit(f, U, samples=2000, seed=100 + i)
            for i, f in enumerate(fields)
        )
        big = max(
            beta.lip_of_best_fit(f, U, samples=4000, seed=500 + i)
            for i, f in enumerate(fields)
        )
        assert small < 10.0 and big < 10.0
        assert abs(big - small) <= 0.5 * max(big, small)


class TestBetaVsParametric:
    def test_vertical_plane_reports_zero(self):
        G = plane_graph(seed=41)
        x = G.psi(np.zeros(4))
        rep = beta.beta_vs_parametric(G, x, 0.8, c=2.0, samples=1200, seed=3)
        assert rep.ratio == 0.0
        assert not rep.flagged

    def test_bump_sweep_finite_and_sample_stable(self):
        G = bump_graph(sigma=1.2, amp=0.35, res=16, horizontal=True)
        rng = np.random.default_rng(17)
        ratios = []
        for i in range(6):
            x = G.psi(rng.uniform(-0.8, 0.8, size=4))
            for r in (0.5, 1.0):
                rep = beta.beta_vs_parametric(G, x, r, c=2.0, samples=1200, seed=50 + i)
                assert np.isfinite(rep.ratio)
                ratios.append(rep.ratio)
        x = G.psi(np.zeros(4))
        a = beta.beta_vs_parametric(G, x, 1.0, c=2.0, samples=1200, seed=5)
        b = beta.beta_vs_parametric(G, x, 1.0, c=2.0, samples=2400, seed=6)
        assert abs(a.ratio - b.ratio) <= 0.2 * max(a.ratio, b.ratio)
        assert max(ratios) < 50.0

    def test_dilation_invariance(self):
        G = bump_graph(sigma=1.2, amp=0.35, res=16, horizontal=True)
        x = G.psi(np.zeros(4))
        a = beta.beta_vs_parametric(G, x, 0.8, c=2.0, samples=1500, seed=9)
        b = beta.beta_vs_parametric(
            graphs.dilate_graph(G, 2.0), core.dilate(2.0, x), 1.6,
            c=2.0, samples=1500, seed=9,
        )
        tol = 2.0 * math.hypot(a.beta_stderr, b.beta_stderr) / max(a.parametric, 1e-12)
        assert abs(a.ratio - b.ratio) <= max(tol, 0.05 * max(a.ratio, b.ratio))


class TestDegenerateBeta:
    def test_flat_graph_returns_exact_zero(self):
        lo = np.array([-2.0, -2.0, -2.0, -4.0])
        fld = BoxField(lo, -lo, np.zeros((8, 8, 8, 8)))
        G = IntrinsicGraph(core.basis_vector("Y", 2, 2), fld, 0.3, 0.72)
        est = beta.beta_number(G, core.identity(2), 0.5, samples=300, seed=1)
        assert est.value == 0.0
        assert est.stderr == 0.0
        # the exact containing plane has normal along y_2
        assert abs(est.best_plane.normal[3]) > 1 - 1e-9

    def test_json_record(self):
        est = beta.BetaEstimate(0.5, beta.VerticalPlane(np.array([1.0, 0.0]), 0.3), 100, 0.01)
        doc = est.to_json_dict(x=core.identity(1), r=2.0)
        assert set(doc) == {"beta", "stderr", "plane", "samples", "x", "r"}
        assert doc["plane"]["offset"] == 0.3


class TestMeasureComparability:
    def test_pushforward_density_bounded_and_stable(self):
        # density of Pi_w' o Psi_w against Lebesgue on V_0 via FD Jacobians
        densities = []
        for res in (8, 16):
            G = bump_graph(sigma=1.2, amp=0.35, res=res, horizontal=True)
            w2 = core.horizontal_direction(core.hpoint([0.15, 0.0], [0.1, 1.0], 0.0))
            rng = np.random.default_rng(5)
            dets = []
            for _ in range(20):
                v = rng.uniform(G.field.lo / 2, G.field.hi / 2)
                eps = 1e-5

                def phi(cc):
                    return graphs.v0_coords(core.project_along(w2, G.psi(cc)))

                jac = np.zeros((4, 4))
                for j in range(4):
                    e = np.zeros(4)
                    e[j] = eps
                    jac[:, j] = (phi(v + e) - phi(v - e)) / (2 * eps)
                dets.append(abs(np.linalg.det(jac)))
            densities.append((min(dets), max(dets)))
        for lo_d, hi_d in densities:
            assert 1.0 / 4.0 < lo_d and hi_d < 4.0
        # stability of the envelope under refinement
        assert abs(densities[0][1] - densities[1][1]) < 0.5 * densities[1][1]
