import math

import numpy as np
import pytest

from phonon_timebin import fock as F


def pure_state(modes, n_max, occupation, total_max=None):
    st = F.init_vacuum(modes, n_max, total_max)
    rho = np.zeros_like(st.rho)
    i = st.basis.index[tuple(occupation)]
    rho[i, i] = 1.0
    st.rho = rho
    return st


class TestInit:
    def test_vacuum_occupations(self):
        st = F.init_vacuum(["a", "b", "c"], 4)
        for m in st.modes:
            assert st.mean_occupation(m) == 0.0
        assert st.trace() == pytest.approx(1.0, abs=1e-14)

    def test_thermal_geometric_p0(self):
        st = F.init_thermal(["a"], 10, 1.0)
        assert np.real(st.rho[0, 0]) == pytest.approx(0.5, abs=1e-12)

    def test_thermal_low_occupancy_mean(self):
        st = F.init_thermal(["a"], 6, 0.09)
        assert st.mean_occupation("a") == pytest.approx(0.09, abs=2e-5)

    def test_thermal_tail_folding_preserves_trace_and_vacuum(self):
        w = F.thermal_weights(0.2, 5)
        q = 0.2 / 1.2
        assert w.sum() == pytest.approx(1.0, abs=1e-15)
        assert w[0] == pytest.approx(1 - q, abs=1e-15)
        assert w[3] == pytest.approx((1 - q) * q**3, abs=1e-15)

    def test_invalid_args(self):
        with pytest.raises(F.FockEngineError):
            F.init_vacuum(["a"], 0)
        with pytest.raises(F.FockEngineError):
            F.init_thermal(["a"], 4, -0.1)
        with pytest.raises(F.FockEngineError):
            F.init_vacuum(["a", "a"], 3)


class TestTwoModeSqueeze:
    def test_identity_at_zero(self):
        st = F.init_vacuum(["a", "b"], 4)
        out = F.apply_two_mode_squeeze(st, "a", "b", 0.0, 0.7)
        assert np.allclose(out.rho, st.rho)

    def test_pair_probability(self):
        st = F.init_vacuum(["a", "b"], 6)
        out = F.apply_two_mode_squeeze(st, "a", "b", 0.04, 0.0)
        i = out.basis.index[(1, 1)]
        assert np.real(out.rho[i, i]) == pytest.approx(0.96 * 0.04, abs=1e-9)

    def test_vacuum_series_amplitudes(self):
        p, phi = 0.01, 1.234
        st = F.init_vacuum(["a", "b"], 7)
        out = F.apply_two_mode_squeeze(st, "a", "b", p, phi)
        for n in range(3):
            i = out.basis.index[(n, n)]
            amp2 = (1 - p) * p**n
            assert np.real(out.rho[i, i]) == pytest.approx(amp2, rel=1e-6)
            if n:
                coh = out.rho[i, out.basis.index[(0, 0)]]
                expected = (1 - p) * p ** (n / 2) * np.exp(1j * n * phi)
                assert coh == pytest.approx(expected, abs=1e-9)

    def test_first_order_click_amplitude(self):
        # joint pair amplitude matches the sqrt(p) branch to O(p)
        st = F.init_vacuum(["a", "b"], 5)
        out = F.apply_two_mode_squeeze(st, "a", "b", 0.002, 0.0)
        i, j = out.basis.index[(1, 1)], out.basis.index[(0, 0)]
        assert abs(out.rho[i, j]) == pytest.approx(math.sqrt(0.002), rel=3e-3)

    def test_unregistered_mode(self):
        st = F.init_vacuum(["a", "b"], 3)
        with pytest.raises(F.FockEngineError, match="not registered"):
            F.apply_two_mode_squeeze(st, "a", "zz", 0.01)


class TestBeamSplitter:
    def test_identity(self):
        st = F.init_thermal(["a", "b"], 4, {"a": 0.3})
        out = F.apply_beam_splitter(st, "a", "b", 1.0)
        assert np.allclose(out.rho, st.rho)

    def test_balanced_on_single_photon(self):
        st = pure_state(["a", "b"], 4, (1, 0))
        out = F.apply_beam_splitter(st, "a", "b", 0.5)
        p10 = np.real(out.rho[out.basis.index[(1, 0)], out.basis.index[(1, 0)]])
        p01 = np.real(out.rho[out.basis.index[(0, 1)], out.basis.index[(0, 1)]])
        assert p10 == pytest.approx(0.5, abs=1e-12)
        assert p01 == pytest.approx(0.5, abs=1e-12)

    def test_weak_readout_probability(self):
        st = pure_state(["o", "m"], 4, (0, 1))
        out = F.apply_beam_splitter(st, "o", "m", 1.0 - 0.007)
        assert out.mean_occupation("o") == pytest.approx(0.007, abs=1e-12)

    def test_trace_preserved(self):
        st = F.init_thermal(["a", "b"], 5, {"a": 0.1, "b": 0.05})
        out = F.apply_beam_splitter(st, "a", "b", 0.37, 2.1)
        assert out.trace() == pytest.approx(1.0, abs=1e-12)


class TestPhase:
    def test_identity_and_periodicity(self):
        st = F.init_thermal(["a"], 5, 0.4)
        assert np.allclose(F.apply_phase(st, "a", 0.0).rho, st.rho)
        assert np.abs(F.apply_phase(st, "a", 2 * math.pi).rho - st.rho).max() < 1e-12

    def test_pi_flips_coherence(self):
        st = F.init_vacuum(["a"], 3)
        rho = np.zeros_like(st.rho)
        rho[:2, :2] = 0.5
        st.rho = rho
        out = F.apply_phase(st, "a", math.pi)
        assert out.rho[0, 1] == pytest.approx(-0.5, abs=1e-14)
        assert out.rho[1, 1] == pytest.approx(0.5, abs=1e-14)


class TestChannels:
    def test_loss_identity(self):
        st = F.init_thermal(["a"], 5, 0.3)
        assert np.allclose(F.apply_loss(st, "a", 1.0).rho, st.rho)

    def test_loss_linearity(self):
        st = F.init_thermal(["a"], 12, 1.0)
        out = F.apply_loss(st, "a", 0.5)
        assert out.mean_occupation("a") == pytest.approx(
            0.5 * st.mean_occupation("a"), abs=1e-12)

    def test_loss_composition(self):
        st = F.init_thermal(["a"], 8, 0.4)
        seq = F.apply_loss(F.apply_loss(st, "a", 0.8), "a", 0.6)
        direct = F.apply_loss(st, "a", 0.48)
        assert abs(seq.mean_occupation("a") - direct.mean_occupation("a")) < 1e-10
        assert np.abs(seq.rho - direct.rho).max() < 1e-10

    def test_thermal_noise_adds_occupancy(self):
        st = F.init_vacuum(["a"], 6)
        out = F.apply_thermal_noise(st, "a", 0.022)
        assert out.mean_occupation("a") == pytest.approx(0.022, abs=1e-6)
        assert out.trace() == pytest.approx(1.0, abs=1e-10)

    def test_thermal_noise_epsilon_insensitive(self):
        st = F.init_vacuum(["a"], 6)
        a = F.apply_thermal_noise(st, "a", 0.05, epsilon=0.01)
        b = F.apply_thermal_noise(st, "a", 0.05, epsilon=0.005)
        assert abs(a.mean_occupation("a") - b.mean_occupation("a")) < 1e-6

    def test_thermal_loss_matches_gaussian_moments(self):
        st = F.init_thermal(["a"], 7, 0.08)
        out = F.apply_thermal_loss(st, "a", 0.93, 0.15)
        assert out.mean_occupation("a") == pytest.approx(
            0.93 * 0.08 + 0.07 * 0.15, abs=1e-8)

    def test_channel_trace_preservation(self):
        rng = np.random.default_rng(5)
        st = F.init_vacuum(["a", "b"], 4, total_max=6)
        st = F.apply_two_mode_squeeze(st, "a", "b", 0.02, 0.4)
        for _ in range(4):
            st = F.apply_thermal_loss(st, "a", rng.uniform(0.7, 1), rng.uniform(0, 0.2))
            st = F.apply_loss(st, "b", rng.uniform(0.5, 1))
            assert st.trace() == pytest.approx(1.0, abs=1e-10)


class TestUnitarityAndPositivity:
    def test_squeeze_inverse(self):
        st = F.init_vacuum(["a", "b"], 6)
        mid = F.apply_two_mode_squeeze(st, "a", "b", 0.01, 0.3)
        back = F.apply_two_mode_squeeze(mid, "a", "b", 0.01, 0.3 + math.pi)
        assert np.abs(back.rho - st.rho).max() < 1e-10

    def test_randomized_circuit_positivity(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            st = F.init_thermal(["a", "b", "c"], 4, {"b": 0.1}, total_max=8)
            for _ in range(6):
                op = rng.integers(4)
                pair = rng.choice(3, 2, replace=False)
                a, b = st.modes[pair[0]], st.modes[pair[1]]
                if op == 0:
                    st = F.apply_two_mode_squeeze(st, a, b, rng.uniform(0, 0.02),
                                                  rng.uniform(0, 2 * math.pi))
                elif op == 1:
                    st = F.apply_beam_splitter(st, a, b, rng.uniform(0, 1),
                                               rng.uniform(0, 2 * math.pi))
                elif op == 2:
                    st = F.apply_loss(st, a, rng.uniform(0.5, 1))
                else:
                    st = F.apply_thermal_loss(st, a, rng.uniform(0.9, 1),
                                              rng.uniform(0, 0.2))
            assert st.min_eigenvalue() > -1e-9
            st.check_hermitian()
            assert st.trace() == pytest.approx(1.0, abs=1e-9)


class TestDetection:
    def test_vacuum_never_clicks(self):
        st = F.init_vacuum(["a", "b"], 4)
        d = F.click_distribution(st, {"d1": ["a"], "d2": ["b"]})
        assert d.probabilities[(False, False)] == pytest.approx(1.0, abs=1e-14)

    def test_thermal_click_probability(self):
        st = F.init_thermal(["a"], 14, 1.0)
        d = F.click_distribution(st, {"d": ["a"]})
        assert d.prob(d=True) == pytest.approx(0.5, abs=1e-4)

    def test_tms_click_correlations(self):
        st = F.init_vacuum(["a", "b"], 6)
        st = F.apply_two_mode_squeeze(st, "a", "b", 0.002, 0.0)
        d = F.click_distribution(st, {"da": ["a"], "db": ["b"]})
        ratio = d.prob(da=True, db=True) / (d.prob(da=True) * d.prob(db=True))
        assert ratio == pytest.approx(500.0, rel=1e-6)

    def test_efficiency_reduces_clicks(self):
        st = F.init_thermal(["a"], 10, 0.5)
        full = F.click_distribution(st, {"d": ["a"]})
        half = F.click_distribution(st, {"d": ["a"]}, {"d": 0.5})
        assert half.prob(d=True) < full.prob(d=True)
        # thermal with mean n under thinning eta: P(click) = eta n / (1 + eta n)
        assert half.prob(d=True) == pytest.approx(0.25 / 1.25, abs=1e-4)

    def test_distribution_normalized(self):
        st = F.init_thermal(["a", "b", "c"], 4, {"a": 0.2, "c": 0.1}, total_max=8)
        st = F.apply_beam_splitter(st, "a", "b", 0.6, 0.3)
        d = F.click_distribution(st, {"d1": ["a", "b"], "d2": ["c"]}, {"d1": 0.9, "d2": 0.7})
        assert sum(d.probabilities.values()) == pytest.approx(1.0, abs=1e-10)

    def test_measure_threshold_branches(self):
        st = F.init_vacuum(["o", "m"], 4)
        st = F.apply_two_mode_squeeze(st, "o", "m", 0.01, 0.0)
        branches = F.measure_threshold(st, {"d": ["o"]})
        patterns = {pat: (p, red) for pat, p, red in branches}
        assert set(patterns) == {(False,), (True,)}
        p_click, heralded = patterns[(True,)]
        assert p_click == pytest.approx(0.01, rel=1e-2)
        # heralding on the Stokes photon leaves (at least) one phonon
        assert heralded.mean_occupation("m") > 0.99
        assert heralded.trace() == pytest.approx(1.0, abs=1e-10)
        total = sum(p for _, p, _ in branches)
        assert total == pytest.approx(1.0, abs=1e-10)


class TestStateBookkeeping:
    def test_partial_trace_marginals(self):
        st = F.init_thermal(["a", "b"], 6, {"a": 0.3, "b": 0.1})
        st = F.apply_beam_splitter(st, "a", "b", 0.7, 0.2)
        reduced = F.partial_trace(st, ["a"])
        assert reduced.modes == ("a",)
        assert reduced.trace() == pytest.approx(1.0, abs=1e-12)
        assert reduced.mean_occupation("a") == pytest.approx(
            st.mean_occupation("a"), abs=1e-12)

    def test_add_vacuum_mode(self):
        st = F.init_thermal(["a"], 5, 0.2)
        grown = F.add_vacuum_mode(st, "b")
        assert grown.modes == ("a", "b")
        assert grown.mean_occupation("b") == 0.0
        assert grown.mean_occupation("a") == pytest.approx(
            st.mean_occupation("a"), abs=1e-14)

    def test_save_load_round_trip(self, tmp_path):
        st = F.init_thermal(["a", "b"], 4, {"a": 0.15})
        st = F.apply_two_mode_squeeze(st, "a", "b", 0.01, 0.5)
        path = tmp_path / "state.npz"
        st.save(path)
        back = F.FockState.load(path)
        assert back.modes == st.modes
        assert np.allclose(back.rho, st.rho)

    def test_truncation_weight_reported(self):
        st = F.init_thermal(["a"], 5, 0.2)
        assert st.truncation_weight() > 0
        assert st.renorm_deficit == pytest.approx(0.0, abs=1e-12)
