import numpy as np
import pytest

from conftest import B_TABLE, GAMMA_TABLE, N_TABLE, ref_step, ref_step_exact, table_network
from netsir import EpidemicNetwork, EpidemicState, InvalidNetworkError, Schedule, StructuralError, simulate, step
from netsir.model import Trajectory, validate_network


class TestSchedule:
    def test_lookup_by_breakpoint(self):
        sch = Schedule([(0, [1.0]), (5, [2.0]), (9, [3.0])])
        assert [float(sch.at(k)[0]) for k in (0, 4, 5, 8, 9, 100)] == [1, 1, 2, 2, 3, 3]

    def test_gap_at_start_is_structural(self):
        with pytest.raises(StructuralError, match="uncovered"):
            Schedule([(3, [1.0])])

    def test_unsorted_breakpoints(self):
        with pytest.raises(StructuralError):
            Schedule([(0, [1.0]), (5, [1.0]), (5, [2.0])])

    def test_inconsistent_shapes(self):
        with pytest.raises(StructuralError):
            Schedule([(0, [1.0]), (5, [1.0, 2.0])])

    def test_values_are_read_only(self):
        sch = Schedule.constant([1.0, 2.0])
        with pytest.raises(ValueError):
            sch.at(0)[0] = 5.0


class TestNetwork:
    def test_wrong_beta_dimension(self):
        with pytest.raises(StructuralError):
            EpidemicNetwork.constant([10, 10], np.zeros((3, 3)), [0.1, 0.1], 1.0)

    def test_missing_beta_piece(self):
        with pytest.raises(StructuralError):
            EpidemicNetwork([10], [], Schedule.constant([0.1]), 1.0)

    def test_segments_merge_breakpoints(self):
        net = EpidemicNetwork([10, 10], Schedule([(0, np.zeros((2, 2))), (10, np.eye(2) * 0.1)]),
                              Schedule([(0, [0.1, 0.1]), (4, [0.2, 0.2])]), 1.0)
        segs = net.segments(20)
        assert [(s.start, s.stop) for s in segs] == [(0, 4), (4, 10), (10, 21)]
        assert [(s.start, s.stop) for s in net.segments()][-1] == (10, None)


class TestValidate:
    def test_table_network_ok(self, table_net):
        rep = validate_network(table_net, 300)
        assert rep.ok
        assert float(table_net.gamma_at(0)[0]) == 0.075
        assert table_net.B_at(0)[0].sum() == pytest.approx(0.53, abs=1e-12)

    def test_zero_infection_ok(self):
        net = EpidemicNetwork.constant([10, 20], np.zeros((2, 2)), [0.5, 0.5], 1.0)
        assert validate_network(net, 10).ok

    def test_healing_bound_violation(self):
        net = EpidemicNetwork.constant([10, 20], np.zeros((2, 2)), [1.5, 0.5], 1.0)
        rep = validate_network(net, 10)
        assert not rep.ok
        (v,) = rep.violations
        assert (v.rule, v.node, v.value) == ("step_bound", 0, 1.5)
        assert "h*gamma = 1.5 > 1" in v.message

    def test_violation_reported_on_its_segment_only(self):
        net = EpidemicNetwork([10], Schedule.constant([[0.1]]), Schedule([(0, [0.5]), (7, [2.0])]), 1.0)
        assert validate_network(net, 6).ok
        (v,) = validate_network(net, 20).violations
        assert (v.start, v.stop) == (7, 21)

    def test_positivity_and_row_sum(self):
        net = EpidemicNetwork.constant([10, 10], [[0.6, 0.6], [-0.1, 0.0]], [0.0, 0.5], 1.0)
        rules = sorted((v.rule, v.node) for v in validate_network(net).violations)
        assert rules == [("positivity", 0), ("positivity", 1), ("step_bound", 0)]


class TestStep:
    def test_healthy_state_is_fixed(self):
        st = EpidemicState([0.7, 0.4], [0.0, 0.0], [0.3, 0.6])
        out = step(st, B_TABLE[:2, :2], GAMMA_TABLE[:2], 1.0)
        assert np.array_equal(out.s, st.s) and np.array_equal(out.x, st.x) and np.array_equal(out.r, st.r)

    def test_two_node_hand_values(self):
        st = EpidemicState([0.9, 1.0], [0.1, 0.0], [0.0, 0.0])
        out = step(st, [[0, 0.5], [0.5, 0]], [0.2, 0.2], 0.1)
        np.testing.assert_allclose(out.s, [0.9, 0.995], atol=1e-15)
        np.testing.assert_allclose(out.x, [0.098, 0.005], atol=1e-15)
        np.testing.assert_allclose(out.r, [0.002, 0.0], atol=1e-15)

    def test_table_first_step_against_exact_arithmetic(self, table_init):
        out = step(table_init, B_TABLE, GAMMA_TABLE, 1.0)
        exact = ref_step_exact(table_init.s, table_init.x, table_init.r, B_TABLE, GAMMA_TABLE, 1)
        for got, want in zip((out.s, out.x, out.r), exact):
            np.testing.assert_allclose(got, [float(v) for v in want], atol=1e-15)
        # node L is reached through its coupling to I and G
        assert out.x[1] == pytest.approx(0.0041, abs=1e-15)
        assert np.all(np.abs(out.s + out.x + out.r - 1) <= 1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(StructuralError):
            step(EpidemicState.from_infected([0.1, 0.1]), np.zeros((3, 3)), [0.1, 0.1], 1.0)


class TestState:
    def test_conservation_enforced(self):
        with pytest.raises(ValueError, match="deviates"):
            EpidemicState([0.5], [0.2], [0.2])

    def test_range_enforced(self):
        with pytest.raises(ValueError):
            EpidemicState([1.2], [-0.2], [0.0])


class TestSimulate:
    def test_zero_horizon(self, table_net, table_init):
        traj = simulate(table_net, table_init, 0)
        assert len(traj) == 1
        assert np.array_equal(traj.x[0], table_init.x)

    def test_table_outbreak_rises_then_decays(self, table_net, table_init):
        traj = simulate(table_net, table_init, 300)
        avg = traj.x.mean(axis=1)
        peak = int(np.argmax(avg))
        assert 0 < peak < 300 and avg[-1] < avg[peak] / 100
        assert np.max(np.abs(traj.s + traj.x + traj.r - 1)) <= 1e-9

    def test_matches_loop_oracle(self, table_init):
        net = table_network(0.2)
        traj = simulate(net, table_init, 50)
        s, x, r = list(table_init.s), list(table_init.x), list(table_init.r)
        for k in range(50):
            s, x, r = ref_step(s, x, r, B_TABLE, GAMMA_TABLE, 0.2)
        np.testing.assert_allclose(traj.s[50], s, atol=1e-14)
        np.testing.assert_allclose(traj.x[50], x, atol=1e-14)

    def test_switch_replay(self):
        B = np.array([[0.2, 0.1], [0.1, 0.3]])
        net = EpidemicNetwork([100, 200], Schedule.constant(B), Schedule([(0, [0.1, 0.1]), (50, [0.4, 0.3])]), 1.0)
        init = EpidemicState.from_infected([0.05, 0.0])
        traj = simulate(net, init, 80)
        state = traj.state(50)
        for k in range(50, 80):
            state = step(state, B, [0.4, 0.3], 1.0)
            assert np.array_equal(state.x, traj.x[k + 1])

    def test_invalid_network_refused_with_report(self, table_init):
        net = EpidemicNetwork.constant(N_TABLE, B_TABLE, GAMMA_TABLE * 10, 1.0)
        with pytest.raises(InvalidNetworkError) as info:
            simulate(net, table_init, 10)
        assert not info.value.report.ok
        assert {v.rule for v in info.value.report.violations} == {"step_bound"}

    def test_deterministic(self, table_net, table_init):
        a = simulate(table_net, table_init, 100)
        b = simulate(table_net, table_init, 100)
        assert a.s.tobytes() == b.s.tobytes() and a.x.tobytes() == b.x.tobytes()

    def test_delta_s_backward(self):
        traj = Trajectory(np.array([[1.0], [0.9], [0.85]]), np.zeros((3, 1)), np.zeros((3, 1)))
        np.testing.assert_allclose(traj.delta_s()[:, 0], [0.0, -0.1, -0.05])
