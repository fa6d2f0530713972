import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powsim.params import (
    InvariantViolation,
    LatencyMatrix,
    LatencyVector,
    SystemParams,
    TopologyError,
    induced_matrix,
    lambda_ratio,
    normalize_capacities,
    validate_topology,
)


class TestNormalizeCapacities:
    def test_simple_split(self):
        np.testing.assert_allclose(normalize_capacities([3, 7]), [0.3, 0.7])

    def test_equal_thirds(self):
        np.testing.assert_allclose(
            normalize_capacities([1, 1, 1]), [1 / 3, 1 / 3, 1 / 3]
        )

    def test_forty_sixty(self):
        np.testing.assert_allclose(normalize_capacities([40, 60]), [0.4, 0.6])

    def test_all_zero_rejected(self):
        with pytest.raises(InvariantViolation):
            normalize_capacities([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(InvariantViolation):
            normalize_capacities([1.0, -0.1])

    @given(
        st.lists(st.floats(0.0, 1e6), min_size=1, max_size=12).filter(
            lambda xs: sum(xs) > 1e-9
        ),
        st.floats(1e-6, 1e6),
    )
    def test_scale_invariant(self, raw, k):
        a = normalize_capacities(raw)
        b = normalize_capacities([k * x for x in raw])
        np.testing.assert_allclose(a, b, atol=1e-9)
        assert abs(a.sum() - 1.0) < 1e-12


class TestSystemParams:
    def test_normalizes_and_derives_rates(self):
        p = SystemParams(np.array([2.0, 2.0]), 4.0)
        np.testing.assert_allclose(p.capacities, [0.5, 0.5])
        np.testing.assert_allclose(p.effective_rates, [0.125, 0.125])

    def test_observers_have_zero_capacity(self):
        p = SystemParams(np.array([1.0, 0.0, 1.0]), 1.0)
        assert list(p.miners()) == [0, 2]

    @pytest.mark.parametrize("tau", [0.0, -1.0, float("inf"), float("nan")])
    def test_bad_hardness(self, tau):
        with pytest.raises(InvariantViolation):
            SystemParams(np.array([1.0]), tau)

    def test_immutable(self):
        p = SystemParams(np.array([1.0, 1.0]), 1.0)
        with pytest.raises(ValueError):
            p.capacities[0] = 2.0


class TestValidateTopology:
    def test_minimal_symmetric_valid(self):
        p = SystemParams(np.ones(2), 1.0)
        m = LatencyMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert validate_topology(p, m).ok

    def test_shortest_path_violation(self):
        p = SystemParams(np.ones(3), 1.0)
        m = LatencyMatrix(
            np.array([[0.0, 3.0, 1.0], [3.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
        )
        report = validate_topology(p, m)
        assert not report.ok
        assert any("shortest-path" in v and "(0, 1)" in v for v in report.violations)

    def test_coordinator_consistency_violation(self):
        # direct link of 1s but the relayed path is only 0.8s
        p = SystemParams(np.ones(2), 1.0)
        m = LatencyMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        v = LatencyVector(np.array([0.4, 0.4]))
        report = validate_topology(p, m, v)
        assert not report.ok
        assert any("consistency" in s for s in report.violations)

    def test_dimension_mismatch_is_structural(self):
        p = SystemParams(np.ones(3), 1.0)
        m = LatencyMatrix(np.zeros((2, 2)))
        with pytest.raises(TopologyError):
            validate_topology(p, m)

    def test_asymmetry_detected(self):
        p = SystemParams(np.ones(2), 1.0)
        m = LatencyMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
        report = validate_topology(p, m)
        assert any("asymmetric" in s for s in report.violations)

    def test_idempotent(self):
        p = SystemParams(np.ones(2), 1.0)
        m = LatencyMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
        first = validate_topology(p, m)
        second = validate_topology(p, m)
        assert first.violations == second.violations


class TestLambdaRatio:
    def test_single_pair(self):
        p = SystemParams(np.ones(2), 1.0)
        m = LatencyMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert lambda_ratio(p, m) == 1.0

    def test_bitcoin_like_arithmetic(self):
        p = SystemParams(np.ones(2), 600.0)
        m = LatencyMatrix(np.array([[0.0, 0.052], [0.052, 0.0]]))
        assert lambda_ratio(p, m) == pytest.approx(11538.46, rel=1e-4)

    def test_ethereum_like_arithmetic(self):
        p = SystemParams(np.ones(2), 13.0)
        m = LatencyMatrix(np.array([[0.0, 0.109], [0.109, 0.0]]))
        assert lambda_ratio(p, m) == pytest.approx(119.27, rel=1e-3)

    def test_single_node_rejected(self):
        p = SystemParams(np.ones(1), 1.0)
        m = LatencyMatrix(np.zeros((1, 1)))
        with pytest.raises(TopologyError):
            lambda_ratio(p, m)

    @given(st.floats(1e-3, 1e3))
    @settings(max_examples=25)
    def test_homogeneous(self, k):
        base = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
        p1 = SystemParams(np.ones(3), 2.0)
        p2 = SystemParams(np.ones(3), 2.0 * k)
        assert lambda_ratio(p1, LatencyMatrix(base)) == pytest.approx(
            lambda_ratio(p2, LatencyMatrix(base * k)), rel=1e-12
        )


def test_induced_matrix_consistency():
    v = LatencyVector(np.array([0.5, 1.0, 0.25]))
    m = induced_matrix(v)
    p = SystemParams(np.ones(3), 1.0)
    assert validate_topology(p, m, v).ok
    assert m.entries[0, 1] == 1.5
    assert m.entries[0, 0] == 0.0
