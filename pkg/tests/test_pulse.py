import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from recoilfree.errors import DomainError
from recoilfree.pulse import PulseShape, fourier_basis, mask, pi_half_duration, shift_phase

T = 10e-6
coef = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=8)


def test_mask_profile():
    assert mask(0.0, T) == 0.0
    assert mask(T, T) == pytest.approx(0.0, abs=1e-15)
    assert mask(T / 2, T) == 1.0
    assert mask(T / 20, T) == pytest.approx(0.5)
    # continuous where the ramps meet the plateau
    for edge in (T / 10, 9 * T / 10):
        assert mask(edge - 1e-15, T) == pytest.approx(mask(edge + 1e-15, T), abs=1e-9)


def test_mask_outside_duration_raises():
    with pytest.raises(DomainError):
        mask(1.1 * T, T)


def test_fourier_basis_layout():
    t = np.linspace(0, T, 7)
    B = fourier_basis(t, T, 3)
    assert B.shape == (7, 6)
    k = 3
    assert B[k, 1] == pytest.approx(math.cos(2 * math.pi * t[k] / T) * mask(t[k], T))
    assert B[k, 4] == pytest.approx(math.sin(2 * math.pi * t[k] / T) * mask(t[k], T))


def test_phase_vanishes_at_endpoints_but_offset_survives():
    p = PulseShape.from_coefficients(T, np.arange(1.0, 7.0))
    assert p.phase_at(0.0) == pytest.approx(0.0)
    s = shift_phase(p, math.pi)
    assert s.phase_at(0.0) == pytest.approx(math.pi)
    assert s.phase_at(T) == pytest.approx(math.pi)
    assert s.shifted(-math.pi).phase_offset == 0.0


def test_constant_pulse():
    p = PulseShape.mossbauer(T, 0.3)
    assert p.is_constant
    assert np.allclose(p.phase_at(np.linspace(0, T, 5)), 0.3)
    assert pi_half_duration(2.0) == pytest.approx(math.pi / 4)


@given(coef, st.floats(-4, 4, allow_nan=False))
def test_dict_round_trip(a, off):
    p = PulseShape(T, tuple(a), tuple(reversed(a)), phase_offset=off)
    q = PulseShape.from_dict(p.to_dict())
    assert q == p
    assert q.content_hash() == p.content_hash()


def test_validation():
    with pytest.raises(DomainError):
        PulseShape(0.0)
    with pytest.raises(ValueError):
        PulseShape(T, (1.0,), ())
    with pytest.raises(ValueError):
        PulseShape.from_dict({"duration_s": T, "n_c": 2, "a": [1.0], "b": [1.0]})
