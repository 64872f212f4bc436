import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikegrad.neuron import (
    NeuronConfig,
    decay_from_rho,
    lif_step,
    rho_from_decay,
    spike_ramp,
    unroll,
)


def cfg(tau=0.2, v_th=0.5):
    return NeuronConfig(v_th=v_th, rho=rho_from_decay(tau))


class TestDecay:
    def test_rho_zero_is_half(self):
        assert decay_from_rho(0.0) == 0.5

    def test_init_value(self):
        # sigmoid(-ln 4) = 0.2, the standard initialization
        assert decay_from_rho(-np.log(4.0)) == pytest.approx(0.2, abs=1e-12)
        assert rho_from_decay(0.2) == pytest.approx(-np.log(4.0), abs=1e-12)

    def test_asymptote(self):
        # float64 keeps sigmoid(36) strictly below 1; beyond ~37 it saturates
        assert decay_from_rho(36.0) < 1.0
        assert decay_from_rho(36.0) > 0.999999

    def test_round_trip(self):
        for tau in (0.05, 0.2, 0.5, 0.9):
            assert decay_from_rho(rho_from_decay(tau)) == pytest.approx(tau, abs=1e-12)


class TestLifStep:
    def test_resting_state(self):
        v, s = lif_step(np.zeros(3), np.zeros(3), np.zeros(3), cfg())
        npt.assert_array_equal(v, 0.0)
        npt.assert_array_equal(s, 0.0)

    def test_subthreshold_hand_value(self):
        # tau*v_prev + i = 0.2*0.4 + 0.3 = 0.38 < 0.5
        v, s = lif_step(np.array([0.4]), np.array([0.0]), np.array([0.3]), cfg())
        npt.assert_allclose(v, [0.38])
        npt.assert_array_equal(s, [0.0])

    def test_reset_annihilates_carryover(self):
        # previous spike gates the carried 0.9 away: v = 0.6 >= v_th fires
        v, s = lif_step(np.array([0.9]), np.array([1.0]), np.array([0.6]), cfg())
        npt.assert_allclose(v, [0.6])
        npt.assert_array_equal(s, [1.0])

    def test_threshold_boundary_fires(self):
        _, s = lif_step(np.array([0.0]), np.array([0.0]), np.array([0.5]), cfg())
        npt.assert_array_equal(s, [1.0])

    def test_non_binary_prev_spike_rejected(self):
        with pytest.raises(ValueError):
            lif_step(np.zeros(2), np.array([0.5, 0.0]), np.zeros(2), cfg())

    def test_shape_mismatch_rejected(self):
        from spikegrad.tensorops import ShapeError
        with pytest.raises(ShapeError):
            lif_step(np.zeros(2), np.zeros(3), np.zeros(2), cfg())

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 0.99))
    def test_hard_reset_forgets_history(self, v_a, v_b, tau):
        c = cfg(tau=tau)
        va, _ = lif_step(np.array([v_a]), np.array([1.0]), np.array([0.3]), c)
        vb, _ = lif_step(np.array([v_b]), np.array([1.0]), np.array([0.3]), c)
        npt.assert_array_equal(va, vb)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-1, 1), st.floats(0.0, 1.0), st.floats(0.05, 0.95))
    def test_monotone_in_input_and_carry(self, v_prev, bump, tau):
        c = cfg(tau=tau)
        base, _ = lif_step(np.array([v_prev]), np.array([0.0]), np.array([0.1]), c)
        more_i, _ = lif_step(np.array([v_prev]), np.array([0.0]), np.array([0.1 + bump + 1e-9]), c)
        more_v, _ = lif_step(np.array([v_prev + bump + 1e-9]), np.array([0.0]), np.array([0.1]), c)
        assert more_i[0] > base[0]
        assert more_v[0] > base[0]


class TestUnroll:
    def test_single_step_equals_lif_step(self):
        i = np.array([[0.4, 0.6]])
        v_seq, s_seq = unroll(i, cfg())
        v, s = lif_step(np.zeros(2), np.zeros(2), i[0], cfg())
        npt.assert_array_equal(v_seq[0], v)
        npt.assert_array_equal(s_seq[0], s)

    def test_subthreshold_converges_to_geometric_limit(self):
        tau = 0.6
        i = 0.15  # limit i/(1-tau) = 0.375 < 0.5 so it never fires
        currents = np.full((200, 1), i)
        v_seq, s_seq = unroll(currents, cfg(tau=tau))
        assert s_seq.sum() == 0.0
        npt.assert_allclose(v_seq[-1, 0], i / (1 - tau), rtol=1e-10)

    def test_threshold_input_fires_every_step(self):
        currents = np.full((3, 1), 0.5)
        v_seq, s_seq = unroll(currents, cfg())
        npt.assert_array_equal(s_seq, 1.0)
        npt.assert_allclose(v_seq, 0.5)  # reset kills carryover each step

    def test_spikes_are_binary(self):
        rng = np.random.default_rng(1)
        v_seq, s_seq = unroll(rng.normal(size=(5, 64)), cfg())
        assert set(np.unique(s_seq)) <= {0.0, 1.0}


class TestSpikeRamp:
    def test_midpoint(self):
        assert spike_ramp(0.5, 0.5, 1.0) == 0.5

    def test_saturates_to_step(self):
        assert spike_ramp(0.5 - 0.51, 0.5, 1.0) == 0.0
        assert spike_ramp(0.5 + 0.51, 0.5, 1.0) == 1.0

    def test_slope_is_inverse_width(self):
        w = 0.8
        lo = spike_ramp(0.3, 0.5, w)
        hi = spike_ramp(0.3 + 1e-6, 0.5, w)
        npt.assert_allclose((hi - lo) / 1e-6, 1.0 / w, rtol=1e-6)

    def test_relaxed_unroll_matches_spiking_far_from_threshold(self):
        # potentials far outside the ramp make the relaxed model exactly binary
        currents = np.array([[5.0, -5.0], [5.0, -5.0]])
        hard_v, hard_s = unroll(currents, cfg())
        soft_v, soft_s = unroll(currents, cfg(), relax_widths=[1.0, 1.0])
        npt.assert_array_equal(hard_s, soft_s)
        npt.assert_array_equal(hard_v, soft_v)
