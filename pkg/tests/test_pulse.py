import numpy as np
import pytest

from maslov_stab.errors import MaslovStabError
from maslov_stab.problem import PulseProblem, decoupled_pulse_system, scalar_pulse_system
from maslov_stab.pulse import (certify_conjugate_point, detect_symmetry_point,
                               instability_verdict)


def test_symmetry_point_centered():
    x0, residual, slope = detect_symmetry_point(scalar_pulse_system())
    assert x0 == pytest.approx(0.0, abs=1e-7)
    assert residual < 1e-10
    assert slope < 1e-7


def test_symmetry_point_translated():
    x0, residual, _ = detect_symmetry_point(scalar_pulse_system(center=4.0))
    assert x0 == pytest.approx(4.0, abs=1e-7)
    assert residual < 1e-10


def _asymmetric_profile():
    base = scalar_pulse_system()

    def pulse(x):
        return base.pulse(x) * (1.0 + 0.3 * np.tanh(x / 2.0))

    def pulse_x(x, h=1e-6):
        return (pulse(x + h) - pulse(x - h)) / (2 * h)

    return PulseProblem(n=1, D=base.D, gradF=base.gradF, hessF=base.hessF,
                        pulse=pulse, pulse_x=pulse_x, x_span=base.x_span,
                        name="asymmetric")


def test_asymmetric_profile_inconclusive():
    verdict = instability_verdict(_asymmetric_profile(), full=False)
    assert verdict.verdict == "inconclusive"
    assert not verdict.symmetric
    assert verdict.symmetry_residual > 1e-3


def test_certify_scalar_pulse():
    crossing = certify_conjugate_point(scalar_pulse_system(), 0.0)
    assert crossing.multiplicity == 1
    assert abs(crossing.location) <= 1e-6
    assert crossing.form_eigenvalues[0] > 0


def test_certify_rejects_noncritical_point():
    with pytest.raises(MaslovStabError, match="does not vanish"):
        certify_conjugate_point(scalar_pulse_system(), 1.0)


def test_scalar_pulse_verdict():
    verdict = instability_verdict(scalar_pulse_system())
    assert verdict.verdict == "unstable"
    assert verdict.symmetric
    assert verdict.morse_lower_bound == 1
    assert verdict.full_morse == 1
    assert verdict.checks["mechanism"] == "conjugate-point"
    assert verdict.morse_lower_bound <= verdict.full_morse


def test_decoupled_pulse_verdict():
    verdict = instability_verdict(decoupled_pulse_system(2), full=False)
    assert verdict.verdict == "unstable"
    assert verdict.morse_lower_bound == 2
    assert verdict.conjugate_point_at_x0.multiplicity == 2


def test_unstable_background_short_circuits():
    base = scalar_pulse_system()

    def gradF(u):
        return u - u * u

    def hessF(u):
        return np.array([[1.0 - 2.0 * u[0]]])

    pp = PulseProblem(n=1, D=base.D, gradF=gradF, hessF=hessF,
                      pulse=base.pulse, pulse_x=base.pulse_x,
                      x_span=base.x_span, name="bad-background")
    verdict = instability_verdict(pp, full=False)
    assert verdict.verdict == "unstable"
    assert verdict.checks["mechanism"] == "essential-spectrum"
    assert verdict.conjugate_point_at_x0 is None
