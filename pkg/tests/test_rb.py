import math

import numpy as np
import pytest
from scipy import stats

from recoilfree.composite import MikadoCalibration
from recoilfree.errors import InvalidParameterError
from recoilfree.model import TWO_PI, SystemParams
from recoilfree.oracles import haar_theta_cdf, two_level_j_ent
from recoilfree.propagator import PropagationConfig
from recoilfree.rb import (
    RBConfig, entangling_rotation, gate_resources, idealized_branch_deviation, rotation_angle,
    rotation_axis, run_rb, sample_haar_su2,
)


def test_haar_samples_are_su2_and_isotropic(rng):
    axes, angles = [], []
    for _ in range(4000):
        U = sample_haar_su2(rng)
        assert abs(np.linalg.det(U) - 1) < 1e-12
        assert np.allclose(U @ U.conj().T, np.eye(2), atol=1e-12)
        axes.append(rotation_axis(U))
        angles.append(rotation_angle(U))
    assert np.abs(np.mean(axes, axis=0)).max() < 0.05
    assert stats.kstest(angles, np.vectorize(haar_theta_cdf)).pvalue > 1e-3


def test_entangling_rotation():
    assert np.allclose(entangling_rotation(0.3, (0, 0, 0)), np.eye(2))
    R = entangling_rotation(0.22, (math.pi / 4, 0, 0))
    assert rotation_angle(R) == pytest.approx(2 * 0.22**2 * math.pi / 4)
    assert np.allclose(rotation_axis(R), [1, 0, 0])


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        RBConfig(depth_max=0, n_circuits=1)
    with pytest.raises(InvalidParameterError):
        RBConfig(depth_max=5, n_circuits=0)
    with pytest.raises(InvalidParameterError):
        RBConfig(depth_max=5, n_circuits=1, gate_mode="clifford")
    with pytest.raises(InvalidParameterError):
        RBConfig(depth_max=5, n_circuits=1, record_depths=(3, 2))
    with pytest.raises(InvalidParameterError):
        RBConfig(depth_max=5, n_circuits=1, record_depths=(6,))
    assert RBConfig(depth_max=3, n_circuits=1).record_depths == (1, 2, 3)


def test_full_modes_need_pulse():
    p = SystemParams(TWO_PI * 20e3, TWO_PI * 100e3, 0.1, p0=0.99)
    with pytest.raises(InvalidParameterError):
        run_rb(RBConfig(depth_max=2, n_circuits=1), p)
    with pytest.raises(InvalidParameterError):
        gate_resources("mikado", p)


def test_idealized_zero_entangler_is_free():
    p = SystemParams(TWO_PI * 20e3, TWO_PI * 100e3, 0.22, p0=0.99)
    s = run_rb(RBConfig(depth_max=20, n_circuits=4, gate_mode="idealized-L4", ent_vector=(0, 0, 0)), p)
    assert np.abs(s.column("j_ent")).max() < 1e-12
    assert np.abs(s.column("j_uni")).max() < 1e-12


def test_idealized_depth_one_matches_two_level_form():
    p0, eta = 0.99, 0.22
    p = SystemParams(TWO_PI * 20e3, TWO_PI * 100e3, eta, p0=p0)
    cfg = RBConfig(depth_max=1, n_circuits=3, gate_mode="idealized-L4", p0=p0)
    s = run_rb(cfg, p)
    want = []
    for c in range(3):
        D = idealized_branch_deviation(RBConfig(depth_max=1, n_circuits=3, gate_mode="idealized-L4"), p, c)
        want.append(two_level_j_ent(rotation_angle(D / np.sqrt(np.linalg.det(D))), p0))
    assert s.records[0]["j_ent"] == pytest.approx(np.mean(want), abs=1e-9)


def test_series_is_reproducible_and_seeded():
    p = SystemParams(TWO_PI * 20e3, TWO_PI * 100e3, 0.22, p0=0.99)
    cfg = RBConfig(depth_max=10, n_circuits=5, gate_mode="idealized-L4", record_depths=(1, 5, 10))
    a, b = run_rb(cfg, p), run_rb(cfg, p)
    assert a.records == b.records
    c = run_rb(RBConfig(depth_max=10, n_circuits=5, gate_mode="idealized-L4", record_depths=(1, 5, 10), seed=1), p)
    assert a.records != c.records
    assert list(a.depths) == [1, 5, 10]
    assert set(next(a.rows())) == set(a.CSV_COLUMNS)


def test_full_simulation_at_eta_zero_is_trivial():
    p = SystemParams(TWO_PI * 20e3, TWO_PI * 100e3, 0.0, p0=0.99, n_fock=12)
    cfg = PropagationConfig(n_steps=512)
    pulse, cal = gate_resources("mossbauer", p, prop_cfg=cfg)
    assert isinstance(cal, MikadoCalibration)
    s = run_rb(RBConfig(depth_max=4, n_circuits=2, gate_mode="mossbauer"), p, cal, pulse, cfg)
    for name in ("j_ent", "j_uni", "j_mot"):
        assert np.abs(s.column(name)).max() < 1e-10
    assert s.n_dropped == 0


def test_mossbauer_gates_heat_the_motion(sr88):
    p = sr88.with_(n_fock=12)
    pulse, cal = gate_resources("mossbauer", p)
    s = run_rb(RBConfig(depth_max=3, n_circuits=2, gate_mode="mossbauer"), p, cal, pulse)
    assert (s.column("j_mot") > 1e-4).all()
    assert (s.column("j_ent") > 0).all()

