import math

import pytest

from twinbeam.materials import bbo_type2, n_extraordinary, n_ordinary, n_theta, walkoff_angle


def test_bbo_indices_at_known_wavelengths():
    # tabulated BBO values near 1064 nm and 532 nm
    assert n_ordinary(1.064e-6) == pytest.approx(1.6551, abs=2e-3)
    assert n_extraordinary(1.064e-6) == pytest.approx(1.5425, abs=2e-3)
    assert n_ordinary(0.532e-6) == pytest.approx(1.6749, abs=2e-3)


def test_theta_limits():
    lam = 0.704e-6
    assert n_theta(lam, 0.0) == pytest.approx(n_ordinary(lam))
    assert n_theta(lam, math.pi / 2) == pytest.approx(n_extraordinary(lam))
    assert walkoff_angle(lam, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_type_two_phase_matching_near_cut():
    # collinear degenerate eoe matching lies within a few tenths of a degree of 49 deg
    _, _, _, dk_lo = bbo_type2(48.5)
    _, _, _, dk_hi = bbo_type2(49.5)
    assert dk_lo * dk_hi < 0
    s, i, p, dk = bbo_type2()
    assert abs(dk) < 1e4
    assert s.walkoff == 0.0 and i.walkoff != 0.0 and p.walkoff != 0.0
    assert abs(p.walkoff) == pytest.approx(0.077, abs=0.01)
    assert p.group_delay == 0.0


def test_walkoff_scale():
    s, i, p, _ = bbo_type2(walkoff_scale=0.0)
    assert i.walkoff == 0.0 and p.walkoff == 0.0
