import json
import math

import numpy as np
import pytest

from recoilfree.composite import (
    CalibrationTable, EulerAngles, MikadoCalibration, assemble, assemble_split, calibrate_pulse,
    corrected_angles, euler_zyz, exact_branch_ok, principal_sqrt, verify_composite,
)
from recoilfree.core import projective_infidelity, rx, ry, rz
from recoilfree.errors import DomainError, InvalidParameterError
from recoilfree.model import TWO_PI, SystemParams
from recoilfree.propagator import PropagationConfig, ZRotation
from recoilfree.pulse import PulseShape
from recoilfree.rb import sample_haar_su2

from conftest import random_unitary


def test_euler_round_trip(rng):
    worst = 0.0
    for _ in range(1000):
        U = random_unitary(rng)
        worst = max(worst, projective_infidelity(euler_zyz(U).matrix(), U))
    assert worst < 1e-12


@pytest.mark.parametrize("U", [np.eye(2), rz(0.7), ry(math.pi), ry(math.pi) @ rz(1.1)])
def test_euler_degenerate_cases(U):
    e = euler_zyz(U)
    assert e.theta1 == 0.0
    assert projective_infidelity(e.matrix(), U) < 1e-14


def test_euler_rejects_bad_theta2():
    with pytest.raises(DomainError):
        EulerAngles(0.0, -0.1, 0.0)


def test_zero_error_limit(rng):
    for _ in range(20):
        tg = euler_zyz(random_unitary(rng))
        a, b = rng.uniform(-1, 1, 2)
        g = corrected_angles(tg, MikadoCalibration(a, b))
        want = [tg.theta1 - a, tg.theta2 - a - b, tg.theta3 - b]
        assert g.branch == "exact"
        for got, w in zip(g.corrected, want):
            assert math.remainder(got - w, TWO_PI) == pytest.approx(0.0, abs=1e-12)


def test_worked_example():
    tg = EulerAngles(0.3, math.pi / 2, -0.4)
    g = corrected_angles(tg, MikadoCalibration(0.0, 0.0, delta_theta=0.02))
    t1, t2, t3 = g.corrected
    assert t1 - 0.3 == pytest.approx(0.0200040012, abs=1e-10)
    assert t3 + 0.4 == pytest.approx(0.0200040012, abs=1e-10)
    assert t2 == pytest.approx(1.5711964335, abs=1e-10)
    assert g.j_uni() < 1e-12


@pytest.mark.parametrize("s", [1, -1])
def test_exact_branch_reproduces_target(rng, s):
    cal = MikadoCalibration(0.4, -1.2, 0.03, -0.02, 0.02)
    for _ in range(200):
        tg = euler_zyz(random_unitary(rng))
        if not exact_branch_ok(tg, cal):
            continue
        g = corrected_angles(tg, cal, s)
        U = rz(g.corrected[2]) @ cal.rotation(-1) @ rz(g.corrected[1]) @ cal.rotation(1) @ rz(g.corrected[0])
        assert projective_infidelity(U, tg.matrix()) < 1e-12


def test_branch_condition_uses_radicand():
    cal = MikadoCalibration(0.0, 0.0, delta_theta=0.3)
    c2 = math.cos(0.3) ** 2
    just_in = EulerAngles(0.0, 2 * math.acos(math.sqrt(1 - c2) + 1e-6), 0.0)
    just_out = EulerAngles(0.0, 2 * math.acos(math.sqrt(1 - c2) - 1e-6), 0.0)
    assert corrected_angles(just_in, cal).branch == "exact"
    assert corrected_angles(just_out, cal).branch == "fallback"


def test_pi_gate_takes_fallback_and_best_sign_choice():
    cal = MikadoCalibration(0.2, 0.5, 0.01, -0.01, 0.02)
    tg = euler_zyz(ry(math.pi) @ rz(0.8))
    g = corrected_angles(tg, cal)
    assert g.branch == "fallback"
    assert g.corrected[1] == pytest.approx(math.remainder(math.pi - 0.2 - 0.01 - 0.5 + 0.01, TWO_PI))
    assert g.j_uni() > 0
    others = []
    for s1 in (1, -1):
        for s3 in (1, -1):
            ang = (tg.theta1 - 0.21 + s1 * math.pi / 2, g.corrected[1], tg.theta3 - 0.49 + s3 * math.pi / 2)
            others.append(type(g)(tg, cal, ang, "fallback", 1).j_uni())
    assert g.j_uni() <= min(others) + 1e-15


def test_split_pi_gate_is_exact():
    cal = MikadoCalibration(0.2, 0.5, 0.01, -0.01, 0.02)
    U = ry(math.pi) @ rz(0.8)
    pulse = PulseShape.mossbauer(1e-5)
    direct = assemble(U, cal, pulse)
    halves = assemble_split(U, cal, pulse)
    assert direct.gate.j_uni() > 1e-6
    total = halves[1].gate.unitary() @ halves[0].gate.unitary()
    assert all(h.gate.branch == "exact" for h in halves)
    assert projective_infidelity(total, U) < 1e-12


def test_principal_sqrt(rng):
    for _ in range(50):
        U = sample_haar_su2(rng)
        V = principal_sqrt(U)
        assert projective_infidelity(V @ V, U) < 1e-12
    assert np.allclose(principal_sqrt(np.eye(2)), np.eye(2))


def test_invalid_inputs():
    with pytest.raises(InvalidParameterError):
        MikadoCalibration(0, 0, delta_theta=2.0)
    with pytest.raises(InvalidParameterError):
        corrected_angles(EulerAngles(0, 1, 0), MikadoCalibration(0, 0), s=0)


def test_calibration_table_interpolates():
    a = MikadoCalibration(0.1, 0.2, 0.0, 0.0, -0.01)
    b = MikadoCalibration(0.1, 0.2, 0.02, -0.04, 0.01)
    table = CalibrationTable([0.02, -0.02], [b, a])
    assert table.rel_devs == [-0.02, 0.02]
    mid = table.lookup(0.0)
    assert mid.delta_alpha == pytest.approx(0.01)
    assert mid.delta_beta == pytest.approx(-0.02)
    assert mid.delta_theta == pytest.approx(0.0, abs=1e-15)
    assert table.lookup(0.02) is b
    with pytest.raises(DomainError):
        table.lookup(0.03)
    with pytest.raises(InvalidParameterError):
        CalibrationTable([], [])


def test_program_layout_and_json():
    cal = MikadoCalibration(0.1, 0.2)
    pulse = PulseShape.from_coefficients(1e-5, np.linspace(-0.1, 0.1, 8))
    prog = assemble(rx(0.7), cal, pulse)
    kinds = [type(s) for s in prog.segments]
    assert kinds[0] is ZRotation and kinds[2] is ZRotation and kinds[4] is ZRotation
    assert prog.segments[3].phase_offset == pytest.approx(math.pi)
    doc = json.loads(json.dumps(prog.to_json()))
    assert [s["type"] for s in doc["segments"]] == ["z", "pulse", "z", "pulse", "z"]
    assert doc["segments"][1]["pulse_ref"] == pulse.content_hash()
    assert doc["branch"] == "exact"


def test_full_simulation_at_eta_zero(rng):
    p = SystemParams(TWO_PI * 20e3, TWO_PI * 100e3, 0.0, p0=0.95)
    pulse = PulseShape.mossbauer(math.pi / (2 * p.omega_rabi))
    cfg = PropagationConfig(n_steps=2048)
    cal = calibrate_pulse(pulse, p, alpha=0.0, beta=0.0, cfg=cfg)
    assert max(abs(cal.delta_alpha), abs(cal.delta_beta), abs(cal.delta_theta)) < 1e-9
    U = random_unitary(rng)
    res = verify_composite(assemble(U, cal, pulse), p, U, cfg)
    assert res.j_uni < 1e-12 and res.j_ent < 1e-12 and res.j_mot < 1e-12
