"""Unit tests for the Bloch propagator and the closed-form survival laws."""

import math

import numpy as np
import pytest

from zeno.dynamics import (
    bloch_propagate,
    effective_theta,
    excitation_probability,
    survival_coherent,
    survival_measured_ideal,
    survival_model,
)
from zeno.exceptions import ZenoValidationError
from zeno.models import BlochState, DriveConfig, EnvelopeForm, Outcome


def _oracle_stay_probabilities(cfg: DriveConfig):
    """Stay probabilities of one drive pulse followed by a projective probe."""
    p0 = 1.0 - bloch_propagate(BlochState.ground(), cfg, cfg.tau).excited_population
    p1 = bloch_propagate(BlochState.excited(), cfg, cfg.tau).excited_population
    return p0, p1


class TestBlochPropagate:
    """Test cases for bloch_propagate."""

    def test_resonant_nutation(self):
        """Test a lossless resonant pulse rotates the vector in the v-w plane."""
        cfg = DriveConfig(omega=2.0, tau=1.0)
        state = bloch_propagate(BlochState.ground(), cfg, 1.0)
        assert state.u == pytest.approx(0.0, abs=1e-9)
        assert state.v == pytest.approx(-math.sin(2.0), abs=1e-9)
        assert state.w == pytest.approx(-math.cos(2.0), abs=1e-9)

    def test_lossless_preserves_norm(self):
        """Test the norm stays 1 for a long detuned drive."""
        cfg = DriveConfig(omega=3.0, delta=1.7, tau=1.0)
        state = bloch_propagate(BlochState.ground(), cfg, 25.0)
        assert state.norm == pytest.approx(1.0, abs=1e-9)

    def test_zero_duration_returns_state(self):
        """Test a zero-length evolution is the identity."""
        start = BlochState(u=0.6, v=0.0, w=-0.8)
        assert bloch_propagate(start, DriveConfig(omega=1.0), 0.0) == start

    def test_relaxation_reaches_steady_state(self):
        """Test a long relaxing drive ends in the steady state with excited population B0."""
        cfg = DriveConfig(omega=1.0, tau=1.0, gamma_ph=0.1, big_gamma=0.5)
        state = bloch_propagate(BlochState.ground(), cfg, 200.0)
        b0 = 0.5 * cfg.omega**2 / (cfg.omega**2 + cfg.big_gamma * cfg.gamma)
        assert state.excited_population == pytest.approx(b0, abs=1e-8)
        assert state.norm < 1.0

    def test_pure_decay(self):
        """Test an undriven excited atom decays at rate big_gamma."""
        cfg = DriveConfig(omega=0.0, big_gamma=0.3)
        state = bloch_propagate(BlochState.excited(), cfg, 2.0)
        assert state.excited_population == pytest.approx(math.exp(-0.6), abs=1e-9)

    @pytest.mark.parametrize(
        "cfg",
        [
            DriveConfig(omega=2.0, tau=1.0),
            DriveConfig(omega=1.3, delta=0.7, tau=1.0, gamma_ph=0.2, big_gamma=0.1),
        ],
        ids=["lossless", "relaxing"],
    )
    def test_composition(self, cfg):
        """Test evolving for t1 then t2 equals evolving for t1 + t2."""
        start = BlochState(u=0.6, v=0.0, w=-0.8)
        split = bloch_propagate(bloch_propagate(start, cfg, 0.7), cfg, 1.9)
        whole = bloch_propagate(start, cfg, 2.6)
        np.testing.assert_allclose(split.as_array(), whole.as_array(), rtol=0, atol=1e-8)

    def test_dephasing_contracts_norm(self):
        """Test the norm never grows under pure dephasing."""
        cfg = DriveConfig(omega=2.0, delta=0.5, gamma_ph=0.3)
        state = BlochState.ground()
        norms = [state.norm]
        for _ in range(40):
            state = bloch_propagate(state, cfg, 0.25)
            norms.append(state.norm)
        assert all(b <= a + 1e-10 for a, b in zip(norms, norms[1:]))
        assert norms[-1] < 0.5

    def test_decay_stays_inside_sphere(self):
        """Test a decaying atom never leaves the Bloch ball."""
        cfg = DriveConfig(omega=2.0, gamma_ph=0.1, big_gamma=0.4)
        state = BlochState.excited()
        for _ in range(40):
            state = bloch_propagate(state, cfg, 0.25)
            assert state.norm <= 1.0 + 1e-12

    @pytest.mark.parametrize("duration", [-1.0, math.inf, math.nan])
    def test_invalid_duration(self, duration):
        """Test negative or non-finite durations are rejected."""
        with pytest.raises(ZenoValidationError):
            bloch_propagate(BlochState.ground(), DriveConfig(omega=1.0), duration)


class TestExcitationProbability:
    """Test cases for excitation_probability."""

    def test_resonant_theta_two(self):
        """Test the resonant excitation probability is sin^2(theta/2)."""
        p = excitation_probability(DriveConfig.from_theta(2.0))
        assert p == pytest.approx(0.70807, abs=1e-5)
        assert p == pytest.approx(math.sin(1.0) ** 2, abs=1e-15)

    def test_pi_pulse(self):
        """Test a resonant pi pulse inverts the atom."""
        assert excitation_probability(DriveConfig.from_theta(math.pi)) == pytest.approx(1.0)

    def test_two_pi_effective_angle_is_dark(self):
        """Test the detuned point with generalised angle 2 pi is not excited."""
        cfg = DriveConfig(omega=math.pi, delta=math.sqrt(3.0) * math.pi, tau=1.0)
        assert effective_theta(cfg) == pytest.approx(2.0 * math.pi)
        assert excitation_probability(cfg) == pytest.approx(0.0, abs=1e-12)

    def test_even_in_detuning(self):
        """Test the lossless spectrum is symmetric in the detuning."""
        plus = excitation_probability(DriveConfig(omega=math.pi, delta=2.3))
        minus = excitation_probability(DriveConfig(omega=math.pi, delta=-2.3))
        assert plus == pytest.approx(minus, abs=1e-15)

    def test_undriven(self):
        """Test zero drive gives zero excitation."""
        assert excitation_probability(DriveConfig(omega=0.0, delta=0.0)) == 0.0

    def test_matches_propagator_on_grid(self):
        """Test the Rabi formula agrees with the integrator on a 50-point grid."""
        omegas = [0.5, 1.0, 2.0, math.pi, 4.0]
        deltas = [-6.0, -3.0, -1.5, -0.5, 0.0, 0.3, 1.0, 2.5, 4.0, 7.0]
        for omega in omegas:
            for delta in deltas:
                cfg = DriveConfig(omega=omega, delta=delta, tau=1.0)
                numeric = bloch_propagate(BlochState.ground(), cfg, cfg.tau).excited_population
                assert excitation_probability(cfg) == pytest.approx(numeric, abs=1e-6)

    def test_relaxing_drive_uses_propagator(self):
        """Test a drive with relaxation matches the integrated population."""
        cfg = DriveConfig(omega=2.0, gamma_ph=0.2, big_gamma=0.1)
        expected = bloch_propagate(BlochState.ground(), cfg, 1.0).excited_population
        assert excitation_probability(cfg) == expected


class TestSurvivalLaws:
    """Test cases for the coherent and measured survival laws."""

    def test_coherent_survival(self):
        """Test three unobserved pulses of angle 2 act as one rotation by 6."""
        assert survival_coherent(3, 2.0) == pytest.approx(0.98009, abs=1e-5)

    def test_coherent_survival_has_a_zero(self):
        """Test the unobserved atom is fully transferred at q * theta = pi."""
        assert survival_coherent(2, math.pi / 2.0) == pytest.approx(0.0, abs=1e-15)

    def test_measured_survival(self):
        """Test measured survival is the q-th power of cos^2(theta/2)."""
        assert survival_measured_ideal(3, 2.0) == pytest.approx(0.024879, abs=1e-6)
        assert survival_measured_ideal(0, 2.0) == 1.0

    @pytest.mark.parametrize("theta", [0.3, 1.0, 2.0, 3.0])
    def test_measured_survival_is_power_law(self, theta):
        """Test q measured stays compound as the q-th power of one stay."""
        single = survival_measured_ideal(1, theta)
        assert single == pytest.approx(math.cos(0.5 * theta) ** 2, abs=1e-15)
        for q in range(11):
            assert survival_measured_ideal(q, theta) == pytest.approx(single**q, rel=1e-12)

    @pytest.mark.parametrize("q", [1, 2, 3, 7])
    def test_coherent_survival_is_periodic_and_even(self, q):
        """Test cos^2(q theta / 2) repeats every 2 pi / q and is even in theta."""
        period = 2.0 * math.pi / q
        for theta in (0.1, 0.8, 1.7, 2.9):
            value = survival_coherent(q, theta)
            assert survival_coherent(q, theta + period) == pytest.approx(value, abs=1e-12)
            assert survival_coherent(q, -theta) == pytest.approx(value, abs=1e-15)

    def test_negative_q(self):
        """Test negative q is rejected."""
        with pytest.raises(ZenoValidationError):
            survival_coherent(-1, 1.0)
        with pytest.raises(ZenoValidationError):
            survival_measured_ideal(-1, 1.0)


class TestSurvivalModel:
    """Test cases for survival_model."""

    def test_lossless_is_exact_cosine(self):
        """Test the lossless branch returns cos^2(theta/2) bit-exactly."""
        model = survival_model(DriveConfig.from_theta(2.0))
        assert model.p0 == math.cos(1.0) ** 2
        assert model.p1 == math.cos(1.0) ** 2
        assert model.b0 == 0.5
        assert not model.overdamped

    def test_lossless_fidelity(self):
        """Test a fidelity below one scales the flip probability."""
        model = survival_model(DriveConfig.from_theta(2.0), f1=0.9)
        assert model.p1 == pytest.approx(1.0 - 0.9 * math.sin(1.0) ** 2)
        assert model.stay_probability(Outcome.OFF) == model.p1
        assert model.stay_probability(Outcome.ON) == model.p0

    def test_matches_bloch_oracle(self):
        """Test the relaxation model agrees with pulse-by-pulse integration."""
        for theta in (0.5, 1.0, 2.0, 3.0):
            for gamma_ph in (0.0, 0.1, 0.3):
                for big_gamma in (0.0, 0.05, 0.3):
                    cfg = DriveConfig.from_theta(theta, gamma_ph=gamma_ph, big_gamma=big_gamma)
                    model = survival_model(cfg)
                    p0, p1 = _oracle_stay_probabilities(cfg)
                    assert model.p0 == pytest.approx(p0, rel=0.02, abs=1e-9)
                    assert model.p1 == pytest.approx(p1, rel=0.02, abs=1e-9)
                    assert model.p0 == pytest.approx(p0, abs=1e-7)
                    assert model.p1 == pytest.approx(p1, abs=1e-7)

    def test_overdamped_matches_oracle(self):
        """Test the hyperbolic branch agrees with integration and is flagged."""
        cfg = DriveConfig(omega=0.1, gamma_ph=5.0)
        model = survival_model(cfg)
        p0, p1 = _oracle_stay_probabilities(cfg)
        assert model.overdamped
        assert model.p0 == pytest.approx(p0, abs=1e-7)
        assert model.p1 == pytest.approx(p1, abs=1e-7)

    def test_overdamped_logs_warning(self, caplog):
        """Test the overdamped regime is reported."""
        with caplog.at_level("WARNING", logger="zeno.dynamics"):
            survival_model(DriveConfig(omega=0.1, gamma_ph=5.0))
        assert "Overdamped" in caplog.text

    def test_cosine_envelope_differs_with_relaxation(self):
        """Test the cosine envelope drops a term that matters when the atom relaxes."""
        cfg = DriveConfig.from_theta(2.0, gamma_ph=0.2, big_gamma=0.1)
        exact = survival_model(cfg)
        cosine = survival_model(cfg, envelope=EnvelopeForm.COSINE)
        assert cosine.envelope is EnvelopeForm.COSINE
        assert abs(cosine.p0 - exact.p0) > 1e-3

    def test_envelopes_agree_without_relaxation(self):
        """Test both envelopes coincide for a lossless drive."""
        cfg = DriveConfig.from_theta(1.3)
        exact = survival_model(cfg, f1=0.8)
        cosine = survival_model(cfg, f1=0.8, envelope=EnvelopeForm.COSINE)
        assert exact.p0 == cosine.p0
        assert exact.p1 == cosine.p1

    def test_weights_sum_to_one(self):
        """Test B0 + B1 = 1."""
        model = survival_model(DriveConfig.from_theta(1.0, gamma_ph=0.2, big_gamma=0.3))
        assert model.b0 + model.b1 == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("f0,f1", [(0.0, 1.0), (1.0, 1.5), (-0.1, 0.5)])
    def test_invalid_fidelity(self, f0, f1):
        """Test fidelities outside (0, 1] are rejected."""
        with pytest.raises(ZenoValidationError):
            survival_model(DriveConfig.from_theta(2.0), f0=f0, f1=f1)

    def test_detuning_ignored_with_warning(self, caplog):
        """Test a detuned drive is modelled as resonant and reported."""
        with caplog.at_level("WARNING", logger="zeno.dynamics"):
            detuned = survival_model(DriveConfig(omega=2.0, delta=0.5))
        assert detuned.p0 == survival_model(DriveConfig(omega=2.0)).p0
        assert "ignores detuning" in caplog.text
