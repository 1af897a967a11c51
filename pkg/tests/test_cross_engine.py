"""Cross-engine equivalence at unit-test scale; the full 200-circuit suite
runs in the acceptance module."""

import pytest

from phonon_timebin import fock, gaussian, oracles


class TestSharedVocabulary:
    def test_squeeze_click_patterns(self):
        fs = fock.init_vacuum(["a", "b"], 5)
        fs = fock.apply_two_mode_squeeze(fs, "a", "b", 0.015, 0.4)
        gs = gaussian.vacuum_state(["a", "b"])
        gs = gaussian.apply_two_mode_squeeze(gs, "a", "b", 0.015, 0.4)
        df = fock.click_distribution(fs, {"d1": ["a"], "d2": ["b"]}, 0.8)
        dg = gaussian.click_probabilities(gs, {"d1": ["a"], "d2": ["b"]}, 0.8)
        for pat, p in dg.probabilities.items():
            assert df.probabilities[pat] == pytest.approx(p, abs=1e-8)

    def test_thermal_loss_chain(self):
        fs = fock.init_thermal(["a"], 5, 0.1)
        gs = gaussian.thermal_state(["a"], 0.1)
        for s, n_env in ((0.9, 0.05), (0.7, 0.0), (0.95, 0.18)):
            fs = fock.apply_thermal_loss(fs, "a", s, n_env)
            gs = gaussian.thermal_loss(gs, "a", s, n_env)
            # means see the n-weighted tail, so they are a little softer
            # than the click-probability contract
            assert fs.mean_occupation("a") == pytest.approx(
                gs.mean_occupation("a"), abs=2e-6)
        df = fock.click_distribution(fs, {"d": ["a"]})
        dg = gaussian.click_probabilities(gs, {"d": ["a"]})
        assert df.prob(d=True) == pytest.approx(dg.prob(d=True), abs=1e-7)

    def test_interferometer_fragment(self):
        # squeeze, split, phase, recombine: the protocol's core fragment
        ops = [
            ("squeeze", "o", "m", 0.004, 0.3),
            ("loss", "o", 0.5),
            ("phase", "o", 0.77),
            ("bs", "o", "v", 0.5, 0.0),
            ("loss", "m", 0.92),
        ]
        desc = {"modes": ["o", "m", "v"], "occupations": {"m": 0.03},
                "ops": ops, "detectors": {"d1": ["o"], "d2": ["v"], "d3": ["m"]},
                "efficiency": {"d1": 0.85, "d2": 0.85, "d3": 0.9},
                "total_cap": 10}
        assert oracles.cross_engine_deviation(desc, n_max=5) < 1e-7

    def test_random_suite_smoke(self):
        worst, _ = oracles.cross_engine_suite(20, seed=20260809)
        assert worst < 1e-6

    def test_mutated_convention_fails_fringe_oracle(self):
        # flipping the interferometer phase sign must trip the branch test
        fringe, cross0, flip = oracles.fringe_suite(n_points=6, flip_phase_sign=True)
        assert fringe > 1e-3
        # sanity: the healthy convention passes
        fringe_ok, cross_ok, flip_ok = oracles.fringe_suite(n_points=6)
        assert fringe_ok < 1e-9 and cross_ok < 1e-9 and flip_ok < 1e-9
