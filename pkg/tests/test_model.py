import numpy as np
import pytest

from contrastfx.errors import DomainError, ValidationError
from contrastfx.model import (
    Dataset,
    ScenarioSpec,
    VFunction,
    VKind,
    expit,
    exposure_location,
    exposure_rate,
    m_prime_true,
    m_true,
    simulate_scenario,
    substream,
    v_eval,
)

IDENTITY = VFunction(VKind.IDENTITY)
RECIPROCAL = VFunction(VKind.RECIPROCAL)
THRESHOLD3 = VFunction(VKind.THRESHOLD, 3.0)


class TestVFunction:
    def test_identity_passthrough(self):
        assert v_eval(IDENTITY, 2.0) == 2.0

    def test_reciprocal_value(self):
        assert v_eval(RECIPROCAL, 4.0) == 0.25

    def test_threshold_below_cut(self):
        assert v_eval(THRESHOLD3, 2.5) == 0.0

    def test_threshold_above_cut(self):
        assert v_eval(THRESHOLD3, 3.5) == 1.0

    def test_reciprocal_rejects_zero(self):
        with pytest.raises(DomainError):
            v_eval(RECIPROCAL, 0.0)

    def test_vectorized_evaluation(self):
        x = np.array([1.0, 2.5, 4.0])
        np.testing.assert_allclose(v_eval(RECIPROCAL, x), 1.0 / x)
        np.testing.assert_allclose(v_eval(THRESHOLD3, x), [0.0, 0.0, 1.0])

    def test_threshold_requires_cut_point(self):
        with pytest.raises(ValidationError):
            VFunction(VKind.THRESHOLD)
        with pytest.raises(ValidationError):
            VFunction(VKind.THRESHOLD, np.inf)

    def test_non_threshold_rejects_cut_point(self):
        with pytest.raises(ValidationError):
            VFunction(VKind.IDENTITY, 1.0)


class TestDataset:
    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            Dataset(y=np.zeros(3), x=np.zeros(4), z=np.zeros((3, 1)))

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            Dataset(y=np.array([1.0, np.nan]), x=np.zeros(2), z=np.zeros((2, 1)))

    def test_csv_round_trip_exact(self, tmp_path):
        data = simulate_scenario(ScenarioSpec(outcome_id=2, exposure_id=1), 50, seed=3)
        path = tmp_path / "d.csv"
        data.to_csv(path)
        back = Dataset.from_csv(path)
        np.testing.assert_array_equal(back.y, data.y)
        np.testing.assert_array_equal(back.x, data.x)
        np.testing.assert_array_equal(back.z, data.z)

    def test_csv_header_contract(self, tmp_path):
        data = simulate_scenario(ScenarioSpec(outcome_id=1, exposure_id=1), 5, seed=0)
        path = tmp_path / "d.csv"
        data.to_csv(path)
        assert path.read_text().splitlines()[0] == "y,x,z1"

    def test_csv_schema_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValidationError):
            Dataset.from_csv(path)


class TestScenarioSpec:
    def test_id_ranges_enforced(self):
        with pytest.raises(ValidationError):
            ScenarioSpec(outcome_id=4, exposure_id=1)
        with pytest.raises(ValidationError):
            ScenarioSpec(outcome_id=1, exposure_id=3)

    def test_all_six_construct(self):
        specs = {
            ScenarioSpec(outcome_id=o, exposure_id=e) for o in (1, 2, 3) for e in (1, 2)
        }
        assert len(specs) == 6


class TestResponseSurfaces:
    def test_outcome1_midpoint(self):
        spec = ScenarioSpec(outcome_id=1, exposure_id=1)
        assert m_true(spec, 2.5, 0.0) == 0.5

    def test_outcome2_value_at_vanishing_factor(self):
        spec = ScenarioSpec(outcome_id=2, exposure_id=1)
        assert m_true(spec, 3.0, 0.0) == 3.0

    def test_outcome2_slope_at_three(self):
        # central finite difference of the surface itself
        spec = ScenarioSpec(outcome_id=2, exposure_id=1)
        h = 1e-6
        fd = (m_true(spec, 3.0 + h, 0.0) - m_true(spec, 3.0 - h, 0.0)) / (2 * h)
        assert m_prime_true(spec, 3.0, 0.0) == pytest.approx(0.0, abs=1e-6)
        assert fd == pytest.approx(0.0, abs=1e-6)

    def test_outcome3_adds_exposure_term_above_z_one(self):
        s2 = ScenarioSpec(outcome_id=2, exposure_id=1)
        s3 = ScenarioSpec(outcome_id=3, exposure_id=1)
        x = 2.7
        assert m_true(s3, x, 2.0) == pytest.approx(m_true(s2, x, 2.0) + 0.2 * x)
        assert m_true(s3, x, 0.5) == m_true(s2, x, 0.5)
        assert m_prime_true(s3, x, 2.0) == pytest.approx(m_prime_true(s2, x, 2.0) + 0.2)

    @pytest.mark.parametrize("outcome", [1, 2, 3])
    def test_slope_matches_finite_difference_on_grid(self, outcome):
        spec = ScenarioSpec(outcome_id=outcome, exposure_id=1)
        xs = np.linspace(0.5, 6.0, 23)
        h = 1e-6
        for z in (-1.5, 0.0, 0.7, 1.2):
            fd = (m_true(spec, xs + h, z) - m_true(spec, xs - h, z)) / (2 * h)
            exact = m_prime_true(spec, xs, z)
            scale = np.maximum(np.abs(exact), 1.0)
            assert np.max(np.abs(fd - exact) / scale) < 1e-5

    def test_expit_stable_in_far_tails(self):
        assert expit(800.0) == 1.0
        assert expit(-800.0) == 0.0
        assert expit(0.0) == 0.5
        assert 0.0 < expit(-35.0) < 1e-14


class TestSimulation:
    def test_same_seed_bit_identical(self):
        spec = ScenarioSpec(outcome_id=2, exposure_id=2)
        a = simulate_scenario(spec, 500, seed=9)
        b = simulate_scenario(spec, 500, seed=9)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.z, b.z)

    def test_different_seeds_differ(self):
        spec = ScenarioSpec(outcome_id=2, exposure_id=2)
        a = simulate_scenario(spec, 500, seed=9)
        b = simulate_scenario(spec, 500, seed=10)
        assert not np.array_equal(a.x, b.x)

    def test_gamma_exposure_positive(self):
        data = simulate_scenario(ScenarioSpec(outcome_id=2, exposure_id=2), 20000, seed=1)
        assert np.all(data.x > 0.0)

    def test_binary_outcome_support(self):
        data = simulate_scenario(ScenarioSpec(outcome_id=1, exposure_id=1), 5000, seed=2)
        assert set(np.unique(data.y)) <= {0.0, 1.0}

    def test_normal_exposure_mean(self):
        # E{4 + 0.2(Z + Z^2)} = 4.2; exposure sd ~ sqrt(1 + 0.2^2 Var(Z+Z^2))
        data = simulate_scenario(ScenarioSpec(outcome_id=1, exposure_id=1), 10**6, seed=4)
        assert data.x.mean() == pytest.approx(4.2, abs=0.01)

    def test_gamma_exposure_conditional_moments(self):
        # shape 5 and rate 2.5(1+z^2): E(X|Z=z) = 2/(1+z^2)
        data = simulate_scenario(ScenarioSpec(outcome_id=2, exposure_id=2), 10**6, seed=5)
        z = data.z[:, 0]
        band = np.abs(z) < 0.1
        cond_mean = data.x[band].mean()
        expected = np.mean(5.0 / exposure_rate(z[band]))
        se = data.x[band].std() / np.sqrt(band.sum())
        assert cond_mean == pytest.approx(expected, abs=3 * se)

    def test_outcome_noise_is_unit_variance(self):
        spec = ScenarioSpec(outcome_id=2, exposure_id=1)
        data = simulate_scenario(spec, 10**6, seed=6)
        resid = data.y - m_true(spec, data.x, data.z[:, 0])
        assert resid.mean() == pytest.approx(0.0, abs=3e-3)
        assert resid.std() == pytest.approx(1.0, abs=3e-3)

    def test_adding_outcome_does_not_move_exposure_draws(self):
        # substreams keyed per column: outcome id never perturbs x or z
        base = simulate_scenario(ScenarioSpec(outcome_id=1, exposure_id=1), 300, seed=11)
        other = simulate_scenario(ScenarioSpec(outcome_id=3, exposure_id=1), 300, seed=11)
        np.testing.assert_array_equal(base.x, other.x)
        np.testing.assert_array_equal(base.z, other.z)

    def test_location_and_rate_helpers(self):
        z = np.array([0.0, 1.0, -2.0])
        np.testing.assert_allclose(exposure_location(z), 4.0 + 0.2 * (z + z**2))
        np.testing.assert_allclose(exposure_rate(z), 2.5 * (1.0 + z**2))

    def test_substream_determinism_and_separation(self):
        a = substream(3, 1, 2).standard_normal(5)
        b = substream(3, 1, 2).standard_normal(5)
        c = substream(3, 2, 1).standard_normal(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_n_must_be_positive(self):
        with pytest.raises(ValidationError):
            simulate_scenario(ScenarioSpec(outcome_id=1, exposure_id=1), 0, seed=0)
