import math

import numpy as np
import pytest

from pcosync.core import (
    PRESETS,
    InvalidParameterError,
    MirolloStrogatz,
    NotS2Error,
    PiecewiseLinear,
    StrongFire,
    StrongReset,
    Weighted,
    apply_prc,
    basin_bound,
    eval_prc,
    indegree_scaled_reset,
    inhibitory_bound,
    limited_reset,
    make_preset,
    partial_reset,
    prc_from_vertices,
    s2_curve,
    validate_s2,
)


def test_strong_reset_values():
    assert eval_prc(StrongReset(0.5), 0.3) == pytest.approx(-0.3)
    assert eval_prc(StrongReset(0.5), 0.5) == pytest.approx(-0.5)
    assert eval_prc(StrongReset(0.5), 0.51) == 0.0


def test_strong_fire_values():
    assert eval_prc(StrongFire(0.5), 0.8) == pytest.approx(0.2)
    assert eval_prc(StrongFire(0.5), 0.2) == pytest.approx(-0.2)
    assert apply_prc(0.8, StrongFire(0.5)) == (0.0, True)


def test_apply_reset_is_not_a_firing():
    assert apply_prc(0.3, StrongReset(0.5)) == (0.0, False)


def test_piecewise_linear_interpolates():
    curve = prc_from_vertices([(0, 0), (0.9, 0.05), (1, 0.05)])
    phase, fired = apply_prc(0.9, curve)
    assert phase == pytest.approx(0.95)
    assert not fired
    assert eval_prc(curve, 0.45) == pytest.approx(0.025)


def test_piecewise_jump_keeps_left_value():
    curve = prc_from_vertices([(0, 0), (0.5, -0.5), (0.5, 0), (1, 0)])
    assert eval_prc(curve, 0.5) == pytest.approx(-0.5)
    assert eval_prc(curve, 0.5001) == pytest.approx(0.0)


@pytest.mark.parametrize(
    "vertices",
    [
        [(0, 0), (0.6, 0), (0.4, 0), (1, 0)],
        [(0.1, 0), (1, 0)],
        [(0, 0), (0.9, 0)],
        [(0, 0), (0.5, 0), (0.5, 0), (0.5, 0), (1, 0)],
    ],
)
def test_piecewise_linear_rejects_bad_breakpoints(vertices):
    with pytest.raises(InvalidParameterError):
        PiecewiseLinear(tuple(vertices))


def test_mirollo_strogatz_matches_state_function():
    ms = MirolloStrogatz(b=3.0, eps=0.05)

    def v(x):
        return math.log1p(math.expm1(3.0) * x) / 3.0

    phi = 0.5
    assert v(phi + eval_prc(ms, phi)) == pytest.approx(v(phi) + 0.05)
    assert eval_prc(ms, 0.2) > 0


def test_applied_phase_stays_in_unit_interval():
    for name in PRESETS:
        prc = make_preset(name, 0.1)
        for phi in np.linspace(0.0, 0.999, 200):
            phase, fired = apply_prc(float(phi), prc)
            assert 0.0 <= phase < 1.0
            if fired:
                assert phase == 0.0


def test_validate_s2_reads_parameters_from_vertices():
    curve = prc_from_vertices(
        [(0, 0), (0.3, -0.3), (0.5, -0.3), (0.5, 0), (0.7, 0), (1, 0.1)]
    )
    params = validate_s2(curve, 0.1)
    assert params.kappa == pytest.approx(0.2)
    assert params.B0 == pytest.approx(0.5)
    assert params.B1 == pytest.approx(0.7)
    assert params.epsilon == pytest.approx(0.1)


def test_strong_reset_is_not_s2():
    with pytest.raises(NotS2Error) as err:
        validate_s2(StrongReset(0.5), 0.1)
    assert err.value.clause == "c"
    assert "(c)" in str(err.value)


def test_zero_curve_fails_reset_clause():
    with pytest.raises(NotS2Error) as err:
        validate_s2(prc_from_vertices([(0, 0), (1, 0)]), 0.1)
    assert err.value.clause == "a"


def test_default_s2_preset():
    prc = make_preset("s2-default", 0.1)
    params = validate_s2(prc, 0.1)
    assert params.kappa == pytest.approx(0.1)
    assert params.B0 == pytest.approx(0.6)
    assert params.B1 == pytest.approx(0.6)
    assert params.basin == pytest.approx(0.5)


def test_s2_curve_inhibits_through_its_band():
    tau, kappa = 0.1, 0.1
    prc = s2_curve(0.6, 0.8, tau, kappa)
    for phi in np.linspace(tau + kappa, 0.6, 50):
        assert eval_prc(prc, float(phi)) <= -(tau + kappa) + 1e-12
    for phi in np.linspace(0.0, tau + kappa, 50):
        assert eval_prc(prc, float(phi)) == pytest.approx(-phi)
    for phi in np.linspace(0.81, 0.999, 50):
        assert eval_prc(prc, float(phi)) > 0


def test_s2_curve_rejects_short_band():
    with pytest.raises(InvalidParameterError):
        s2_curve(0.15, 0.5, 0.1, 0.1)


def test_basin_bound():
    assert basin_bound(0.6, 0.6, 0.1) == pytest.approx(0.5)
    assert basin_bound(0.6, 0.8, 0.1) == pytest.approx(0.3)
    with pytest.raises(InvalidParameterError):
        basin_bound(0.1, 0.6, 0.1)


def test_weighted_curve_resets_below_weight():
    w = Weighted(StrongReset(0.5), 0.06)
    assert eval_prc(w, 0.05) == pytest.approx(-0.05)
    assert eval_prc(w, 0.3) == pytest.approx(-0.06)
    assert eval_prc(w, 0.7) == 0.0
    with pytest.raises(InvalidParameterError):
        Weighted(StrongReset(0.5), 0.6)


def test_indegree_scaled_reset_weight():
    prc = indegree_scaled_reset(0.1, 4, 0.5)
    assert prc.w == pytest.approx(0.025)
    with pytest.raises(InvalidParameterError):
        indegree_scaled_reset(0.1, 0, 0.5)


def test_limited_and_partial_reset():
    lr = limited_reset(0.6)
    assert eval_prc(lr, 0.05) == pytest.approx(-0.05)
    assert eval_prc(lr, 0.3) == pytest.approx(-0.1)
    assert eval_prc(lr, 0.7) == 0.0
    pr = partial_reset(0.6, gain=0.5)
    assert apply_prc(0.2, pr)[0] == pytest.approx(0.1)
    assert apply_prc(0.7, pr)[0] == pytest.approx(0.7)


def test_inhibitory_bound():
    assert inhibitory_bound(StrongReset(0.4)) == 0.4
    assert inhibitory_bound(limited_reset(0.6)) == pytest.approx(0.6)
    assert inhibitory_bound(MirolloStrogatz()) == 0.0


def test_unknown_preset():
    with pytest.raises(InvalidParameterError):
        make_preset("nope", 0.1)
