from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from trescaflow.background import (background_norms, build_background, bump, bump_d1, bump_d2,
                                   hopf_ratio_estimate, hopf_ratio_samples)
from trescaflow.fields import random_admissible
from trescaflow.geometry import integrate_domain
from trescaflow.operators import a_form

from conftest import make_grid

_r = sp.symbols("r")
_PHI = 1 - 10 * _r ** 3 + 15 * _r ** 4 - 6 * _r ** 5
# symbolic oracles for h = 1, alpha = 1, U0 = 1, L = 1
XI_H_SQ = sp.integrate(_PHI ** 2, (_r, 0, 1))
XI_V_SQ = sp.integrate(sp.diff(_PHI, _r) ** 2, (_r, 0, 1))


def test_symbolic_oracle_values_are_frozen():
    assert XI_H_SQ == sp.Rational(181, 462)
    assert XI_V_SQ == sp.Rational(10, 7)


def test_profile_matches_symbolic_derivatives():
    r = np.linspace(0, 1, 41)
    d1 = sp.lambdify(_r, sp.diff(_PHI, _r))
    d2 = sp.lambdify(_r, sp.diff(_PHI, _r, 2))
    assert np.allclose(bump(r), sp.lambdify(_r, _PHI)(r), atol=1e-14)
    assert np.allclose(bump_d1(r), d1(r), atol=1e-13)
    assert np.allclose(bump_d2(r), d2(r), atol=1e-12)
    # C2 join with zero at the layer edge and beyond it
    for f in (bump, bump_d1, bump_d2):
        assert f(1.0) == 0.0 and f(1.7) == 0.0
    assert bump(0.0) == 1.0 and bump_d1(0.0) == 0.0 and bump_d2(0.0) == 0.0


def test_zero_wall_speed_gives_zero_background():
    g = make_grid(16)
    xi = build_background(0.0, 0.5, g, 0.1)
    assert not np.any(xi.U) and background_norms(xi, g) == (0.0, 0.0, 0.0)
    assert hopf_ratio_estimate(xi, g, 100, 0) == 0.0


def test_wall_values_and_midlayer_value():
    g = make_grid(16)
    xi = build_background(1.0, 0.5, g, 0.1)
    assert xi.profile(0.0) == 1.0
    assert xi.profile(0.5) == 0.0
    assert xi.profile(0.0, 1) == 0.0
    assert xi.profile(0.25) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("N", [16, 32, 64])
@pytest.mark.parametrize("h_cos", [(), (0.1,)])
def test_constraints_exact_and_support(N, h_cos):
    g = make_grid(N, h_cos)
    xi = build_background(1.3, 0.5, g, 0.1)
    assert np.all(xi.U[:, 0] == 1.3)
    assert np.all(xi.dU[:, 0] == 0.0)
    outside = g.x2 >= xi.layer
    assert np.all(xi.U[outside] == 0) and np.all(xi.dU[outside] == 0)
    assert np.all(xi.U[:, -1] == 0)


def test_norms_converge_to_symbolic_values():
    errs_h, errs_v = [], []
    for n in (32, 64, 128):
        g = make_grid(n, Ns=n)
        hn, vn, F = background_norms(build_background(1.0, 1.0, g, 0.1), g)
        assert F == pytest.approx(2 * 0.1 * vn, rel=1e-15)
        errs_h.append(abs(hn - float(XI_H_SQ)))
        errs_v.append(abs(vn - float(XI_V_SQ)))
    assert errs_h[-1] < 1e-4 and errs_v[-1] < 1e-3
    assert np.all(np.log2(np.array(errs_h[:-1]) / errs_h[1:]) >= 1.9)
    assert np.all(np.log2(np.array(errs_v[:-1]) / errs_v[1:]) >= 1.9)


@given(U0=st.floats(-3, 3).filter(lambda u: abs(u) > 1e-3))
def test_norms_scale_quadratically(U0):
    g = make_grid(16, (0.1,))
    a = background_norms(build_background(U0, 0.5, g, 0.1), g)
    b = background_norms(build_background(2 * U0, 0.5, g, 0.1), g)
    assert np.allclose(b, 4 * np.array(a), rtol=1e-13)


def test_under_resolved_layer_rejected():
    with pytest.raises(ValueError, match="background layer under-resolved"):
        build_background(1.0, 0.0625, make_grid(16), 0.1)
    with pytest.raises(ValueError):
        build_background(1.0, 0.0, make_grid(16), 0.1)


def test_ratio_is_max_of_independently_recomputed_samples():
    g = make_grid(16, (0.1,))
    xi = build_background(1.0, 0.5, g, 0.1)
    est = hopf_ratio_estimate(xi, g, 100, seed=5)
    rng = np.random.default_rng(5)
    m = g.mass
    best = 0.0
    for _ in range(100):
        v1, v2 = random_admissible(g, rng)
        num = 0.0
        for i in range(g.Nq):
            for j in range(g.Ns + 1):
                num += m[i, j] * v2[i, j] * xi.dU[i, j] * v1[i, j]
        best = max(best, abs(num) / a_form((v1, v2), (v1, v2), g))
    assert est == pytest.approx(best, rel=1e-10)


def test_ratio_deterministic_and_sampled_max():
    g = make_grid(16)
    xi = build_background(1.0, 0.5, g, 0.1)
    s = hopf_ratio_samples(xi, g, 100, 3)
    assert hopf_ratio_estimate(xi, g, 100, 3) == np.nanmax(s)
    assert np.array_equal(s, hopf_ratio_samples(xi, g, 100, 3))
    with pytest.raises(ValueError):
        hopf_ratio_estimate(xi, g, 99, 3)


def test_ratio_does_not_increase_when_layer_halves():
    g = make_grid(32)
    r = [hopf_ratio_estimate(build_background(1.0, a, g, 0.1), g, 100, 11) for a in (0.5, 0.25, 0.125)]
    assert r[1] <= r[0] and r[2] <= r[1], r


def test_forcing_bound_uses_domain_quadrature():
    g = make_grid(16, (0.1,))
    xi = build_background(1.0, 0.5, g, 0.2)
    assert xi.forcing_bound_F == pytest.approx(0.4 * integrate_domain(g, xi.dU ** 2), rel=1e-15)
    assert xi.lemma_sum == pytest.approx(xi.h_norm_sq + xi.v_norm_sq)
