import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leapborrow import (
    Dataset,
    DrawsMatrix,
    HistoricalDataset,
    LeapConfig,
    NormalGammaPrior,
    PartitionAssignment,
    PoissonGammaPrior,
    ValidationError,
    class_counts,
    validate_config,
)


class TestDataset:
    def test_empty_outcome_rejected(self):
        with pytest.raises(ValidationError, match="n >= 1"):
            Dataset(y=np.array([]))

    def test_bad_treatment_indicator(self):
        with pytest.raises(ValidationError, match="0 or 1"):
            Dataset(y=np.array([1.0, 2.0]), z=np.array([0.0, 2.0]))

    def test_rank_deficient_design_rejected(self):
        X = np.column_stack([np.ones(5), np.ones(5)])
        with pytest.raises(ValidationError, match="rank deficient"):
            Dataset(y=np.zeros(5), X=X)

    def test_nearly_collinear_design_rejected(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=8)
        X = np.column_stack([c, c * (1 + 1e-12)])
        with pytest.raises(ValidationError):
            Dataset(y=np.zeros(8), X=X)

    def test_effective_design_appends_treatment(self):
        d = Dataset(
            y=np.arange(4.0),
            z=np.array([0.0, 1.0, 0.0, 1.0]),
            X=np.column_stack([np.ones(4), np.arange(4.0)]),
        )
        assert d.effective_design().shape == (4, 3)
        assert np.array_equal(d.effective_design()[:, 2], d.z)

    def test_arrays_frozen(self):
        d = Dataset(y=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            d.y[0] = 5.0


class TestClassCounts:
    def test_all_first_class(self):
        assert class_counts(PartitionAssignment(np.array([1, 1, 1])), 2).tolist() == [3, 0]

    def test_mixed(self):
        assert class_counts(PartitionAssignment(np.array([1, 2, 1])), 2).tolist() == [2, 1]

    def test_three_components(self):
        assert class_counts(PartitionAssignment(np.array([2, 2, 2])), 3).tolist() == [0, 3, 0]

    def test_out_of_range_label(self):
        with pytest.raises(ValidationError, match="out of range"):
            class_counts(PartitionAssignment(np.array([1, 3])), 2)

    @given(
        st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=30),
    )
    @settings(max_examples=100, deadline=None)
    def test_counts_partition_the_subjects(self, labels):
        counts = class_counts(PartitionAssignment(np.array(labels)), 4)
        assert counts.sum() == len(labels)
        assert np.all(counts >= 0)


def _poisson_cfg(alpha=(0.5, 0.5), a=0.0, b=1.0, priors=None):
    priors = priors or (PoissonGammaPrior(0.1, 0.1), PoissonGammaPrior(0.1, 0.1))
    return LeapConfig(
        K=2, alpha0=np.array(alpha), component_priors=priors,
        model_kind="poisson", trunc_a=a, trunc_b=b,
    )


class TestValidateConfig:
    def test_clean_linear_config_ok(self):
        p = 2
        ng = NormalGammaPrior(np.zeros(p), np.eye(p), 1.0, 1.0)
        cfg = LeapConfig(
            K=2, alpha0=np.array([0.5, 0.5]), component_priors=(ng, ng),
            model_kind="normal_linear",
        )
        X = np.column_stack([np.ones(6), np.arange(6.0)])
        data = Dataset(y=np.zeros(6), X=X)
        hist = HistoricalDataset(y0=np.zeros(3), X0=np.column_stack([np.ones(3), np.arange(3.0)]))
        report = validate_config(cfg, data, hist)
        assert report.ok
        assert report.warnings == ()

    def test_improper_second_component(self):
        ng1 = NormalGammaPrior(np.zeros(2), np.eye(2), 1.0, 1.0)
        ng2 = NormalGammaPrior(np.zeros(2), np.zeros((2, 2)), 1.0, 1.0)
        cfg = LeapConfig(
            K=2, alpha0=np.array([0.5, 0.5]), component_priors=(ng1, ng2),
            model_kind="normal_linear",
        )
        report = validate_config(cfg)
        assert any("component 2 prior improper" in v for v in report.violations)

    def test_empty_truncation_interval(self):
        cfg = _poisson_cfg(a=0.5, b=0.3)
        report = validate_config(cfg)
        assert any("empty truncation interval" in v for v in report.violations)

    def test_nonpositive_concentration(self):
        cfg = _poisson_cfg(alpha=(-0.5, 0.5))
        report = validate_config(cfg)
        assert any("alpha0 nonpositive" in v for v in report.violations)

    def test_large_concentration_is_advisory_only(self):
        cfg = _poisson_cfg(alpha=(1.5, 1.5))
        report = validate_config(cfg)
        assert report.ok
        assert any("advisory" in w for w in report.warnings)

    def test_poisson_noninteger_outcome(self):
        cfg = _poisson_cfg()
        data = Dataset(y=np.array([1.0, 2.5]))
        report = validate_config(cfg, data)
        assert any("nonnegative integers" in v for v in report.violations)

    def test_improper_first_component_needs_full_rank_design(self):
        ng1 = NormalGammaPrior(np.zeros(2), np.zeros((2, 2)), 1.0, 1.0)
        ng2 = NormalGammaPrior(np.zeros(2), np.eye(2), 1.0, 1.0)
        cfg = LeapConfig(
            K=2, alpha0=np.array([0.5, 0.5]), component_priors=(ng1, ng2),
            model_kind="normal_linear",
        )
        report = validate_config(cfg, data=None)
        assert any("improper" in v and "first-component" in v for v in report.violations)
        X = np.column_stack([np.ones(6), np.arange(6.0)])
        data = Dataset(y=np.zeros(6), X=X)
        assert validate_config(cfg, data).ok

    def test_violations_are_monotone(self):
        base = _poisson_cfg(alpha=(-0.5, 0.5))
        worse = _poisson_cfg(alpha=(-0.5, 0.5), a=0.9, b=0.1)
        v_base = set(validate_config(base).violations)
        v_worse = set(validate_config(worse).violations)
        assert v_base <= v_worse


class TestDrawsMatrix:
    def test_gamma_rows_validated(self):
        with pytest.raises(ValidationError, match="simplex"):
            DrawsMatrix(
                columns=("gamma_1", "gamma_2"),
                values=np.array([[0.4, 0.7]]),
            )

    def test_truncation_respected(self):
        with pytest.raises(ValidationError, match="truncation"):
            DrawsMatrix(
                columns=("gamma_1", "gamma_2"),
                values=np.array([[0.9, 0.1]]),
                meta={"trunc_a": 0.0, "trunc_b": 0.5},
            )

    def test_column_lookup(self):
        dm = DrawsMatrix(columns=("a", "b"), values=np.array([[1.0, 2.0]]))
        assert dm.column("b")[0] == 2.0
        with pytest.raises(KeyError):
            dm.column("c")
