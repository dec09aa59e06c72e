import numpy as np
import pytest

from dosebound.core_data import ExposureDomain, LearnerSpec, RunConfig, make_fold_plan
from dosebound.errors import InputError
from dosebound.nuisance import assemble_bundle
from dosebound.pseudo_outcome import (
    MarginalDensityAverage,
    build_all,
    build_marginal_pseudo,
    build_rosenbaum_pseudo,
    make_composite_gauss_legendre,
    make_gauss_legendre,
    marginal_density_average,
    pipeline_rule,
)
from dosebound.sensitivity import from_spec, make_family
from dosebound.simulation import (
    DGP_DOMAIN,
    DGPSpec,
    analytic_bundle_factory,
    analytic_nuisances,
    sample_dgp,
)

UNIT = ExposureDomain(0.0, 1.0)
SMALL = LearnerSpec(bins=5, deg_t=3)


def _config(model="rosenbaum", family=("constant", [1.0]), **kw):
    return RunConfig(
        model=model,
        sensitivity={"family": family[0], "params": family[1]},
        domain=DGP_DOMAIN,
        learner=SMALL,
        **kw,
    )


class TestGaussLegendre:
    def test_cubic_exact_with_two_nodes(self):
        # polynomial exactness up to degree 2n-1 holds for any node count;
        # the public constructor floors at 8 nodes
        rule = make_gauss_legendre(8, UNIT)
        val = rule.integrate(rule.nodes**3)
        assert val == pytest.approx(0.25, abs=1e-14)

    def test_sine_integral(self):
        rule = make_gauss_legendre(16, UNIT)
        val = rule.integrate(np.sin(np.pi * rule.nodes))
        assert val == pytest.approx(2.0 / np.pi, abs=1e-10)

    def test_weights_positive_and_symmetric(self):
        rule = make_gauss_legendre(32, ExposureDomain(-1.0, 3.0))
        assert np.all(rule.weights > 0)
        np.testing.assert_allclose(rule.weights, rule.weights[::-1], rtol=1e-13)
        np.testing.assert_allclose(rule.nodes + rule.nodes[::-1], 2.0, atol=1e-12)

    def test_weight_sum_is_domain_width(self):
        rule = make_gauss_legendre(20, ExposureDomain(0.25, 0.75))
        assert rule.weights.sum() == pytest.approx(0.5, abs=1e-12)

    def test_too_few_nodes_rejected(self):
        with pytest.raises(InputError):
            make_gauss_legendre(4, UNIT)

    def test_composite_matches_single_panel_on_smooth(self):
        edges = np.linspace(0, 1, 6)
        comp = make_composite_gauss_legendre(edges, 16)
        single = make_gauss_legendre(64, UNIT)
        f = lambda t: np.exp(t) * np.sin(3 * t)
        assert comp.integrate(f(comp.nodes)) == pytest.approx(
            single.integrate(f(single.nodes)), abs=1e-12
        )
        assert comp.weights.sum() == pytest.approx(1.0, abs=1e-12)


class TestMarginalDensityAverage:
    def test_constant_in_x_density(self):
        bundle = analytic_nuisances()
        # at X = 0 the shape parameters are the same for all rows
        X2 = np.zeros((7, 4))
        avg = marginal_density_average(bundle, _wrap(X2), 0.37)
        single = float(bundle.density.at(np.array([0.37]), X2[:1])[0])
        assert avg == pytest.approx(single, rel=1e-12)

    def test_single_row_average(self):
        bundle = analytic_nuisances()
        X2 = np.array([[0.1, -0.2, 0.3, 0.0]])
        avg = marginal_density_average(bundle, _wrap(X2), 0.6)
        assert avg == pytest.approx(float(bundle.density.at(np.array([0.6]), X2)[0]))

    def test_uniform_truth(self):
        # binned density on exposure independent of covariates
        from dosebound.core_data import Dataset
        from dosebound.nuisance import fit_conditional_density

        rng = np.random.default_rng(0)
        n = 4000
        X = rng.uniform(-0.5, 0.5, size=(n, 2))
        ds = Dataset(X, rng.uniform(0, 1, n), rng.normal(size=n), UNIT)
        dens = fit_conditional_density(ds, SMALL, floor=0.05)
        avg = MarginalDensityAverage(dens, X[:500])
        vals = avg.at(np.linspace(0.1, 0.9, 9))
        assert np.max(np.abs(vals - 1.0)) < 0.15


def _wrap(X2):
    from dosebound.core_data import Dataset

    n = X2.shape[0]
    return Dataset(X2, np.full(n, 0.5), np.zeros(n), UNIT)


class TestNucReduction:
    """With the trivial sensitivity function the pseudo-outcome collapses to
    the doubly robust form; agreement is exact up to float accumulation."""

    def _check(self, model):
        ds = sample_dgp(DGPSpec(n=1500, seed=5))
        cfg = _config(model=model, seed=9)
        plan = make_fold_plan(ds.n, 3, cfg.seed, False)
        sets = build_all(ds, plan, cfg)
        i1, i2, i3 = plan.triple_indices(plan.role_map[0])
        bundle = assemble_bundle(ds.subset(i3), cfg)
        quad = pipeline_rule(bundle, cfg, ds.domain)
        X1, T1, Y1 = ds.X[i1], ds.t[i1], ds.y[i1]
        X2 = ds.X[i2]
        dens_quad = bundle.density.grid(quad.nodes, X1) @ quad.weights
        fbar = MarginalDensityAverage(bundle.density, X2).at(T1)
        ratio = fbar / bundle.density.at(T1, X1)
        if model == "rosenbaum":
            center = bundle.expectile_surface.eval(X1, T1, np.full_like(T1, 0.5))
            prep = bundle.expectile_surface.prepare_rows(X2)
            i2_term = bundle.expectile_surface.cross_eval(
                prep, T1, np.full((T1.size, X2.shape[0]), 0.5)
            ).mean(axis=1)
        else:
            center = bundle.mean_surface.eval(X1, T1)
            prep = bundle.mean_surface.prepare_rows(X2)
            i2_term = bundle.mean_surface.cross_eval(prep, T1).mean(axis=1)
        target = i2_term + ratio * (Y1 - center) * dens_quad
        np.testing.assert_allclose(sets[0].y_hat, target, atol=1e-8)

    def test_rosenbaum(self):
        self._check("rosenbaum")

    def test_marginal(self):
        self._check("marginal")


class TestDegenerateOutcome:
    def test_constant_outcome_passes_through(self):
        # y identically c with exact nuisances -> pseudo-outcome equals c
        from dosebound.core_data import Dataset

        class _ConstDensity:
            floor = 0.0
            bin_edges = None

            def at(self, t, X):
                return np.ones(np.atleast_2d(X).shape[0])

            def grid(self, nodes, X):
                return np.ones((np.atleast_2d(X).shape[0], np.asarray(nodes).size))

        class _ConstSurface:
            last_snap_distance = 0.0

            def eval(self, X, t, tau):
                tau = np.asarray(tau, dtype=float)
                shape = (np.atleast_2d(X).shape[0],) + ((tau.shape[1],) if tau.ndim == 2 else ())
                return np.full(shape, 3.3)

            def prepare_rows(self, X):
                return np.atleast_2d(X).shape[0]

            def cross_eval(self, prep, t_vals, tau=None):
                return np.full((np.asarray(t_vals).size, prep), 3.3)

        class _ConstCdf:
            def eval(self, X, t, y):
                y = np.asarray(y, dtype=float)
                return (y >= 3.3).astype(float)

        from dosebound.nuisance import NuisanceBundle

        bundle = NuisanceBundle(
            model="any",
            density=_ConstDensity(),
            expectile_surface=_ConstSurface(),
            tail_cdf=_ConstCdf(),
            quantile_surface=_ConstSurface(),
            mean_surface=_ConstMean(),
            cvar_surface=_ConstSurface(),
            analytic=True,
        )
        rng = np.random.default_rng(0)
        X2 = rng.normal(size=(30, 2))
        rows_I2 = Dataset(X2, rng.uniform(0, 1, 30), np.full(30, 3.3), UNIT)
        sf = make_family("exp_abs_diff", [np.log(5.0)], UNIT)
        quad = make_gauss_legendre(32, UNIT)
        row = (np.array([0.1, -0.4]), 0.45, 3.3)
        out_m = build_marginal_pseudo(row, bundle, rows_I2, sf, quad)
        assert out_m.y_hat == pytest.approx(3.3, abs=1e-10)
        out_r = build_rosenbaum_pseudo(row, bundle, rows_I2, sf, quad)
        assert out_r.y_hat == pytest.approx(3.3, abs=1e-10)


class _ConstMean:
    def eval(self, X, t):
        return np.full(np.atleast_2d(X).shape[0], 3.3)

    def prepare_rows(self, X):
        return np.atleast_2d(X).shape[0]

    def cross_eval(self, prep, t_vals):
        return np.full((np.asarray(t_vals).size, prep), 3.3)


class TestBuildAll:
    def test_single_triple_size(self):
        ds = sample_dgp(DGPSpec(n=900, seed=1))
        cfg = _config(seed=2)
        plan = make_fold_plan(ds.n, 3, cfg.seed, cross_fit=False)
        sets = build_all(ds, plan, cfg, bundle_factory=analytic_bundle_factory())
        assert len(sets) == 1
        assert len(sets[0]) == plan.fold_indices(0).size

    def test_cross_fit_k3_gives_six_sets(self):
        ds = sample_dgp(DGPSpec(n=900, seed=1))
        cfg = _config(seed=2, cross_fit=True)
        plan = make_fold_plan(ds.n, 3, cfg.seed, cross_fit=True)
        sets = build_all(ds, plan, cfg, bundle_factory=analytic_bundle_factory())
        assert len(sets) == 6

    def test_bit_identical_under_same_seed(self):
        ds = sample_dgp(DGPSpec(n=900, seed=3))
        cfg = _config(model="marginal", family=("exp_abs_diff", [np.log(5.0)]), seed=4)
        plan = make_fold_plan(ds.n, 3, cfg.seed, False)
        a = build_all(ds, plan, cfg, bundle_factory=analytic_bundle_factory())
        b = build_all(ds, plan, cfg, bundle_factory=analytic_bundle_factory())
        np.testing.assert_array_equal(a[0].y_hat, b[0].y_hat)

    def test_density_ratio_diagnostic_bounded(self):
        ds = sample_dgp(DGPSpec(n=1200, seed=6))
        cfg = _config(seed=7)
        plan = make_fold_plan(ds.n, 3, cfg.seed, False)
        sets = build_all(ds, plan, cfg)
        floor = cfg.floor_for(ds.domain)
        max_density = 1.0 / (ds.domain.width / cfg.learner.bins)  # mass 1 in one bin
        assert 0 < sets[0].diagnostics["max_density_ratio"] <= max_density / floor


class TestQuadratureStability:
    def test_node_doubling_with_binned_density_and_flat_sensitivity(self):
        ds = sample_dgp(DGPSpec(n=1500, seed=8))
        base = _config(model="rosenbaum", family=("constant", [5.0]), seed=11)
        doubled = _config(
            model="rosenbaum", family=("constant", [5.0]), seed=11, quadrature_nodes=128
        )
        plan = make_fold_plan(ds.n, 3, 11, False)
        a = build_all(ds, plan, base)
        b = build_all(ds, plan, doubled)
        assert np.max(np.abs(a[0].y_hat - b[0].y_hat)) < 1e-6

    def test_node_doubling_smooth_density_analytic(self):
        ds = sample_dgp(DGPSpec(n=1000, seed=9))
        factory = analytic_bundle_factory(fast_expectile=False)
        base = _config(model="marginal", family=("constant", [3.0]), seed=12)
        doubled = _config(
            model="marginal", family=("constant", [3.0]), seed=12, quadrature_nodes=128
        )
        plan = make_fold_plan(ds.n, 3, 12, False)
        a = build_all(ds, plan, base, bundle_factory=factory)
        b = build_all(ds, plan, doubled, bundle_factory=factory)
        assert np.max(np.abs(a[0].y_hat - b[0].y_hat)) < 1e-6
