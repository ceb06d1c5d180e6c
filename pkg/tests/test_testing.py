import numpy as np
import pytest

from conftest import N_TABLE, ref_confirmed, table_initial, table_network
from netsir import (
    TestingParams,
    build_transfer_matrix,
    confirmed_expectation,
    confirmed_sampled,
    confirmed_via_transfer,
    generate_dataset,
    removed_data,
    simulate,
)
from netsir.model import Trajectory
from netsir.testing import CaseReporter


def traj_from_s(s):
    s = np.asarray(s, dtype=float).reshape(len(s), -1)
    x = 1.0 - s
    return Trajectory(s, x, np.zeros_like(s))


@pytest.fixture(scope="module")
def table_traj():
    return simulate(table_network(1.0), table_initial(), 302)


class TestTransferMatrix:
    def test_zero_delay_constant_is_identity(self):
        np.testing.assert_array_equal(build_transfer_matrix(3, 9, kind="constant"), np.eye(8))

    def test_certain_test_next_day(self):
        np.testing.assert_array_equal(build_transfer_matrix(0, 2, 1.0), np.eye(4, k=-1))

    def test_geometric_column(self):
        phi = build_transfer_matrix(0, 2, 0.2)
        assert phi.shape == (4, 4)
        np.testing.assert_allclose(phi[1:, 0], [0.2, 0.16, 0.128], atol=1e-15)
        assert np.all(phi[0] == 0) and np.all(np.triu(phi) == 0)
        assert np.all(phi.sum(axis=0) <= 1 + 1e-15)

    def test_constant_shift(self):
        phi = build_transfer_matrix(0, 4, kind="constant", eta=2)
        np.testing.assert_array_equal(phi, np.eye(6, k=-2))

    def test_inverted_window(self):
        with pytest.raises(ValueError):
            build_transfer_matrix(5, 4, 0.2)


class TestConfirmedExpectation:
    def test_no_infections(self):
        traj = traj_from_s(np.ones(12))
        assert not np.any(confirmed_expectation(traj, TestingParams(0.3, 0, 10)))

    def test_hand_recursion(self):
        traj = traj_from_s([1.0, 0.975, 0.965, 0.96])
        c = confirmed_expectation(traj, TestingParams(0.2, 0, 2))[:, 0]
        np.testing.assert_allclose(c, [0.0, 0.0, 0.005, 0.006], atol=1e-15)

    def test_matches_direct_delay_sum(self, table_traj):
        params = TestingParams(0.2, 6, 300)
        c = confirmed_expectation(table_traj, params)
        new = -table_traj.delta_s()
        for i in range(5):
            np.testing.assert_allclose(c[:, i], ref_confirmed(new[:, i], 0.2, 6, 300), atol=1e-15)

    def test_eta_shift_matches_direct_sum(self, table_traj):
        params = TestingParams(0.4, 3, 60, eta=2)
        c = confirmed_expectation(table_traj, params)
        new = -table_traj.delta_s()
        np.testing.assert_allclose(c[:, 2], ref_confirmed(new[:, 2], 0.4, 3, 60, eta=2), atol=1e-15)

    def test_zero_outside_window(self, table_traj):
        c = confirmed_expectation(table_traj, TestingParams(0.2, 10, 40))
        assert not np.any(c[:11]) and c.shape[0] == 42

    def test_node_L_peaks_then_decays(self, table_traj):
        C = N_TABLE[1] * confirmed_expectation(table_traj, TestingParams(0.2, 6, 300))[:, 1]
        peak = int(np.argmax(C))
        assert 6 < peak < 300 and C[-1] < C[peak] / 10

    def test_short_trajectory(self):
        with pytest.raises(ValueError, match="testing window"):
            confirmed_expectation(traj_from_s([1.0, 0.9]), TestingParams(0.5, 0, 3))

    def test_mass_identity(self, table_traj):
        p = 0.3
        c = confirmed_expectation(table_traj, TestingParams(p, 0, 200))[:, 2]
        new = -table_traj.delta_s()[:, 2]
        for k in (5, 50, 150, 201):
            assert c[1:k + 1].sum() == pytest.approx(new[:k].sum() - (1 - p) / p * c[k], abs=1e-14)


class TestTransferRoute:
    def test_identity_transfer_reports_same_day(self, table_traj):
        c = confirmed_via_transfer(table_traj, TestingParams(0.5, 4, 50), kind="constant")
        np.testing.assert_allclose(c[4:], -table_traj.delta_s()[4:52], atol=0)

    def test_constant_delay(self, table_traj):
        c = confirmed_via_transfer(table_traj, TestingParams(0.5, 4, 50, eta=3), kind="constant")
        new = -table_traj.delta_s()
        np.testing.assert_allclose(c[7:], new[4:49], atol=0)

    def test_one_node_equivalence(self):
        rng = np.random.default_rng(11)
        s = np.concatenate([[1.0], 1.0 - np.cumsum(rng.random(40) * 0.01)])
        traj = traj_from_s(s)
        params = TestingParams(0.5, 3, 38)
        np.testing.assert_allclose(confirmed_via_transfer(traj, params), confirmed_expectation(traj, params),
                                   atol=1e-12)


class TestSampled:
    def test_requires_seed(self, table_traj):
        with pytest.raises(ValueError, match="seed"):
            confirmed_sampled(table_traj, TestingParams(0.2, 0, 10, mode="sampled"), N_TABLE)

    def test_certain_testing_is_deterministic(self, table_traj):
        params = TestingParams(1.0, 0, 30, mode="sampled", seed=1, rounding="nearest")
        C = confirmed_sampled(table_traj, params, N_TABLE)
        new = -table_traj.delta_s()
        expect = np.rint(N_TABLE * new[:31]).astype(np.int64)
        np.testing.assert_array_equal(C[1:], expect)

    def test_zero_infections_any_seed(self):
        traj = traj_from_s(np.ones(20))
        for seed in (0, 1, 2):
            C = confirmed_sampled(traj, TestingParams(0.3, 0, 15, mode="sampled", seed=seed), [1000])
            assert not np.any(C)

    def test_seed_reproducible(self, table_traj):
        params = TestingParams(0.2, 6, 100, mode="sampled", seed=42)
        a = confirmed_sampled(table_traj, params, N_TABLE)
        b = confirmed_sampled(table_traj, params, N_TABLE)
        assert a.tobytes() == b.tobytes()

    def test_each_infected_reported_at_most_once(self, table_traj):
        params = TestingParams(0.2, 0, 300, mode="sampled", seed=5)
        C = confirmed_sampled(table_traj, params, N_TABLE)
        total_new = np.rint(N_TABLE * (1 - table_traj.s[301])).sum()
        assert C.sum() <= total_new + 5 * 301  # stochastic rounding adds at most one person per node-step


class TestRemovals:
    def test_no_active_cases(self):
        params = TestingParams(0.5, 0, 5)
        d, active = removed_data(np.zeros((7, 2)), [100, 100], lambda k: np.array([0.3, 0.3]), 1.0, params)
        assert not np.any(d) and not np.any(active)

    def test_expectation_value(self):
        # 1000 active people at node L, h*gamma = 0.115
        N = 160000
        c = np.zeros((3, 1))
        c[1] = 1000 / N
        d, active = removed_data(c, [N], lambda k: np.array([0.115]), 1.0, TestingParams(0.5, 0, 1))
        assert d[2, 0] == pytest.approx(7.1875e-4, rel=1e-14)
        assert active[2, 0] == pytest.approx(885.0, rel=1e-12)

    def test_certain_removal_sampled(self):
        C = np.zeros((5, 1), dtype=np.int64)
        C[1] = 40
        params = TestingParams(0.5, 0, 3, mode="sampled", seed=0)
        d, active = removed_data(C, [1000], lambda k: np.array([1.0]), 1.0, params)
        assert d[2, 0] * 1000 == 40 and active[2, 0] == 0

    def test_invalid_probability(self):
        rep = CaseReporter([100], TestingParams(0.5, 0, 3), 1.0)
        with pytest.raises(ValueError, match="probability"):
            rep.remove(1, [1.5])


class TestDataset:
    @pytest.mark.parametrize("mode", ["expectation", "sampled"])
    def test_invariants(self, table_traj, mode):
        net = table_network(1.0)
        params = TestingParams(0.2, 6, 300, mode=mode, seed=9)
        data = generate_dataset(table_traj, N_TABLE, net.gamma_at, 1.0, params)
        assert data.days == 302
        for a in (data.c, data.d):
            assert np.all((a >= 0) & (a <= 1))
            assert not np.any(a[:7])
        assert np.all(np.diff(data.cum_C, axis=0) >= 0) and np.all(np.diff(data.cum_D, axis=0) >= 0)
        assert np.all(data.active >= -1e-9)
        np.testing.assert_allclose(data.active, data.cum_C - data.cum_D, atol=1e-6)

    def test_expectation_confirmed_equals_recursion(self, table_traj):
        net = table_network(1.0)
        params = TestingParams(0.2, 6, 300)
        data = generate_dataset(table_traj, N_TABLE, net.gamma_at, 1.0, params)
        np.testing.assert_allclose(data.c, confirmed_expectation(table_traj, params), atol=1e-15)
        np.testing.assert_array_equal(data.C, np.rint(N_TABLE * data.c).astype(np.int64))
