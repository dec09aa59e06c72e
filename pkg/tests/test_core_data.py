import numpy as np
import pytest

from dosebound.core_data import (
    BasisSpec,
    Dataset,
    ExposureDomain,
    LearnerSpec,
    RunConfig,
    make_fold_plan,
    negate_outcomes,
)
from dosebound.errors import ConfigurationError, InputError

DOM = ExposureDomain(0.0, 1.0)


def _toy(n=40, p=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, p)), rng.uniform(0, 1, n), rng.normal(size=n), DOM)


class TestExposureDomain:
    def test_rejects_empty_interval(self):
        with pytest.raises(ConfigurationError):
            ExposureDomain(1.0, 1.0)

    def test_rejects_infinite(self):
        with pytest.raises(ConfigurationError):
            ExposureDomain(0.0, np.inf)


class TestDataset:
    def test_rejects_exposure_outside_domain(self):
        with pytest.raises(InputError):
            Dataset(np.zeros((3, 1)), [0.1, 0.5, 1.2], [0.0, 0.0, 0.0], DOM)

    def test_rejects_nonfinite(self):
        with pytest.raises(InputError):
            Dataset(np.zeros((2, 1)), [0.1, 0.2], [np.nan, 0.0], DOM)

    def test_csv_round_trip(self, tmp_path):
        ds = _toy(25, 3)
        path = tmp_path / "d.csv"
        ds.to_csv(path)
        back = Dataset.from_csv(path, DOM)
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.t, ds.t)
        np.testing.assert_array_equal(back.y, ds.y)

    def test_csv_schema_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,t,y\n1,2,0.5,0.1\n")
        with pytest.raises(InputError):
            Dataset.from_csv(path, DOM)


class TestNegateOutcomes:
    def test_sign_flip(self):
        ds = Dataset(np.zeros((3, 1)), [0.1, 0.2, 0.3], [1.0, -2.0, 0.0], DOM)
        np.testing.assert_array_equal(negate_outcomes(ds).y, [-1.0, 2.0, 0.0])

    def test_involution(self):
        ds = _toy()
        back = negate_outcomes(negate_outcomes(ds))
        np.testing.assert_array_equal(back.y, ds.y)
        np.testing.assert_array_equal(back.X, ds.X)


class TestMakeFoldPlan:
    def test_too_small_is_rejected(self):
        # n = 9 with K = 3 fails the 10-per-fold floor
        with pytest.raises(ConfigurationError):
            make_fold_plan(9, 3, seed=0, cross_fit=False)

    def test_k_below_three_is_rejected(self):
        with pytest.raises(ConfigurationError):
            make_fold_plan(300, 2, seed=0)

    def test_balanced_single_triple(self):
        plan = make_fold_plan(300, 3, seed=7, cross_fit=False)
        sizes = [plan.fold_indices(f).size for f in range(3)]
        assert sizes == [100, 100, 100]
        assert len(plan.role_map) == 1

    def test_cross_fit_enumerates_ordered_pairs(self):
        plan = make_fold_plan(300, 4, seed=7, cross_fit=True)
        assert len(plan.role_map) == 12  # K(K-1)
        pairs = {(t.i2_fold, t.i3_fold) for t in plan.role_map}
        assert len(pairs) == 12
        for t in plan.role_map:
            assert t.i2_fold != t.i3_fold
            roles = set(t.i1_folds) | {t.i2_fold, t.i3_fold}
            assert roles == {0, 1, 2, 3}

    def test_partition_and_balance(self):
        plan = make_fold_plan(101, 4, seed=3)
        sizes = np.bincount(plan.assignment, minlength=4)
        assert sizes.sum() == 101
        assert sizes.max() - sizes.min() <= 1

    def test_reproducible(self):
        a = make_fold_plan(150, 5, seed=11, cross_fit=True)
        b = make_fold_plan(150, 5, seed=11, cross_fit=True)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        assert a.role_map == b.role_map

    def test_seed_changes_assignment(self):
        a = make_fold_plan(150, 3, seed=1)
        b = make_fold_plan(150, 3, seed=2)
        assert not np.array_equal(a.assignment, b.assignment)


class TestRunConfig:
    def test_json_round_trip(self):
        cfg = RunConfig(
            model="marginal",
            side="upper",
            sensitivity={"family": "exp_abs_diff", "params": [1.6094]},
            basis=BasisSpec("legendre", 7),
            quadrature_nodes=32,
            density_floor=0.04,
            seed=5,
            alpha=0.1,
            domain=ExposureDomain(0.01, 0.99),
            K=4,
            cross_fit=True,
            learner=LearnerSpec(bins=8),
        )
        back = RunConfig.from_json(cfg.to_json())
        assert back == cfg

    def test_rejects_bad_alpha(self):
        with pytest.raises(ConfigurationError):
            RunConfig(alpha=1.5)

    def test_rejects_few_quadrature_nodes(self):
        with pytest.raises(ConfigurationError):
            RunConfig(quadrature_nodes=4)

    def test_rejects_nonpositive_floor(self):
        with pytest.raises(ConfigurationError):
            RunConfig(density_floor=0.0)

    def test_rejects_unknown_model(self):
        with pytest.raises(ConfigurationError):
            RunConfig(model="parametric")

    def test_default_floor_scales_with_domain(self):
        cfg = RunConfig()
        assert cfg.floor_for(ExposureDomain(0.0, 2.0)) == pytest.approx(0.025)

    def test_learner_grid_contract(self):
        with pytest.raises(ConfigurationError):
            LearnerSpec(tau_points=10)
        with pytest.raises(ConfigurationError):
            LearnerSpec(bins=3)
