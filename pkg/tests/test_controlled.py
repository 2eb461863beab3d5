"""Tests for controlled rough paths, composition, and rough integration.

Derived expectations come from Riemann–Stieltjes quadrature oracles, hand
Taylor expansions, and order-regression cross-checks on rough drivers.
"""

import numpy as np
import pytest

from roughkit.algebra import EMPTY_WORD, word
from roughkit.controlled import (
    ControlledPath,
    check_controlled,
    compose,
    constant_controlled,
    controlled_norms,
    coordinate_lift,
    rough_integral,
)
from roughkit.functions import ComposedFunction, PolynomialFunction, TrigPolynomial
from roughkit.roughpath import PiecewiseLinearPath, lift_pl, sample_fbm


def parabola_driver(mesh: float):
    """The smooth driver W_t = (t, t²/2) sampled as a PL path."""
    ts = np.arange(0.0, 1.0 + mesh / 2, mesh)
    return PiecewiseLinearPath(times=ts, values=np.column_stack([ts, ts**2 / 2]))


def stieltjes_oracle(mesh=1e-4):
    """Midpoint Riemann–Stieltjes sums for ∫₀¹ W¹ dW² on the smooth driver."""
    ts = np.arange(0.0, 1.0 + mesh / 2, mesh)
    mids = (ts[:-1] + ts[1:]) / 2
    return float(np.sum(mids * np.diff(ts**2 / 2)))


def test_controlled_path_validation():
    rp = lift_pl(parabola_driver(0.25), gamma=0.4, level=2)
    with pytest.raises(ValueError):
        ControlledPath(rp, order=4, width=1, times=rp.times, coeffs={})
    with pytest.raises(ValueError):
        ControlledPath(rp, order=2, width=1, times=rp.times,
                       coeffs={word(1, 1): np.zeros((len(rp.times), 1))})


def test_constant_controlled_norms_zero():
    rp = lift_pl(parabola_driver(0.1), gamma=0.4, level=2)
    X = constant_controlled(rp, [3.0], rp.times)
    norms = controlled_norms(X)
    assert norms.seminorm == 0.0
    assert norms.norm == 3.0


def test_coordinate_lift_remainders_vanish_on_grid():
    # For the tautological lift the compensated remainder telescopes exactly
    # (level-1 Chen additivity), so every slope reports exact and passes.
    rp = lift_pl(sample_fbm(H=0.45, d=2, knots=65, seed=3), gamma=0.4, level=2)
    X = coordinate_lift(rp, 1)
    checks = check_controlled(X)
    assert all(c.passed for c in checks.values())
    assert all(max(c.defects, default=0.0) <= 1e-12 for c in checks.values())


def test_check_controlled_negative_control():
    # Zeroing the Gubinelli coefficient must break the primal remainder
    # order on a genuinely rough driver.
    rp = lift_pl(sample_fbm(H=0.45, d=2, knots=257, seed=5), gamma=0.4, level=2)
    X = coordinate_lift(rp, 1)
    corrupted = ControlledPath(rp, X.order, 1, X.times, {EMPTY_WORD: X.primal})
    checks = check_controlled(corrupted)
    assert not checks[EMPTY_WORD].passed


# ---------------------------------------------------------------------------
# Composition.
# ---------------------------------------------------------------------------

def make_cubic_lift(seed=11, knots=257, H=0.35, gamma=0.3):
    rp = lift_pl(sample_fbm(H=H, d=1, knots=knots, seed=seed), gamma=gamma, level=3)
    return rp, coordinate_lift(rp, 1, order=3)


def test_compose_identity():
    rp, X = make_cubic_lift(knots=33)
    phi = PolynomialFunction.identity(1)
    Y = compose(phi, X)
    for w in set(X.coeffs) | set(Y.coeffs):
        assert np.allclose(X.coeff(w), Y.coeff(w), atol=1e-14)


def test_compose_linear_map_acts_on_coefficients():
    rp = lift_pl(parabola_driver(0.125), gamma=0.4, level=2)
    X1 = coordinate_lift(rp, 1)
    X2 = coordinate_lift(rp, 2)
    X = ControlledPath(rp, 2, 2, rp.times, {
        EMPTY_WORD: np.column_stack([X1.primal, X2.primal]),
        word(1): np.column_stack([X1.coeff(word(1))[:, 0], np.zeros(len(rp.times))]),
        word(2): np.column_stack([np.zeros(len(rp.times)), X2.coeff(word(2))[:, 0]]),
    })
    A = np.array([[2.0, -1.0], [0.5, 3.0], [1.0, 1.0]])
    Y = compose(PolynomialFunction.affine(A), X)
    assert Y.width == 3
    for w in set(X.coeffs):
        if len(w) == 0:
            assert np.allclose(Y.primal, X.primal @ A.T)
        else:
            assert np.allclose(Y.coeff(w), X.coeff(w) @ A.T, atol=1e-14)


def test_compose_word_11_coefficient_formula():
    # For the tautological order-3 lift (⟨e_1*,X⟩ = 1, ⟨e_11*,X⟩ = 0) the
    # composed coefficient at (1,1) is Dφ·⟨e_11*,X⟩ + D²φ(⟨e_1*,X⟩,⟨e_1*,X⟩)
    # = φ''(X): the coincident tuple carries shuffle multiplicity 2, which
    # cancels the 1/2! factor (see the Taylor cross-check below).
    rp, X = make_cubic_lift(knots=33)
    phi = PolynomialFunction(1, [{(3,): 1.0}])  # φ(x) = x³
    Y = compose(phi, X)
    xs = X.primal[:, 0]
    assert np.allclose(Y.coeff(word(1))[:, 0], 3 * xs**2, atol=1e-12)
    assert np.allclose(Y.coeff(word(1, 1))[:, 0], 6 * xs, atol=1e-12)


def test_compose_taylor_remainder_regression():
    # Brute-force Taylor cross-check on a rough driver: the correctly
    # weighted composition passes the graded order regression; halving the
    # (1,1) coefficient (the unweighted reading) breaks the primal order.
    rp, X = make_cubic_lift(seed=11, knots=513)
    phi = PolynomialFunction(1, [{(2,): 1.0}])
    Y = compose(phi, X)
    checks = check_controlled(Y)
    assert all(c.passed for c in checks.values()), {
        str(w): (c.slope, c.threshold) for w, c in checks.items()
    }
    bad_coeffs = dict(Y.coeffs)
    bad_coeffs[word(1, 1)] = 0.5 * Y.coeff(word(1, 1))
    bad = ControlledPath(rp, Y.order, 1, Y.times, bad_coeffs)
    bad_checks = check_controlled(bad)
    assert not bad_checks[EMPTY_WORD].passed


def test_compose_requires_declared_order():
    from roughkit.functions import FiniteDifferenceFunction

    rp, X = make_cubic_lift(knots=17)
    shallow = FiniteDifferenceFunction(lambda x: np.array([x[0] ** 2]), 1, 1, max_order=1)
    with pytest.raises(ValueError):
        compose(shallow, X)


def test_compose_functorial_consistency():
    # One-function route (chain-rule oracle) vs two-step controlled route.
    rp, X = make_cubic_lift(knots=33)
    psi = PolynomialFunction(1, [{(2,): 1.0, (0,): 0.3}])
    phi = TrigPolynomial.sin(1, 1.0, [1.0])
    one_shot = compose(ComposedFunction(phi, psi), X)
    two_step = compose(phi, compose(psi, X))
    for w in set(one_shot.coeffs) | set(two_step.coeffs):
        assert np.allclose(one_shot.coeff(w), two_step.coeff(w), atol=1e-10)


# ---------------------------------------------------------------------------
# Rough integration.
# ---------------------------------------------------------------------------

def test_integral_of_constant_is_increment():
    rp = lift_pl(sample_fbm(H=0.45, d=2, knots=33, seed=9), gamma=0.4, level=2)
    X = constant_controlled(rp, [1.0], rp.times)
    result = rough_integral(X, 2, rp.times)
    expected = np.array([rp.increment(0.0, t).coeff(word(2)) for t in rp.times])
    assert np.allclose(result.values[:, 0], expected, atol=1e-12)


def test_integral_against_stieltjes_oracle():
    oracle = stieltjes_oracle()
    assert oracle == pytest.approx(1.0 / 3.0, abs=1e-8)
    rp = lift_pl(parabola_driver(1e-3), gamma=0.4, level=2)
    X = coordinate_lift(rp, 1)
    result = rough_integral(X, 2, rp.times)
    assert result.values[-1, 0] == pytest.approx(1.0 / 3.0, abs=1e-5)


def test_integral_linearity():
    rp = lift_pl(sample_fbm(H=0.45, d=2, knots=65, seed=13), gamma=0.4, level=2)
    X = coordinate_lift(rp, 1)
    Y = compose(PolynomialFunction(1, [{(2,): 1.0}]), X)
    a, b = 2.5, -1.25
    combo = rough_integral(a * X + b * Y, 2, rp.times)
    parts = a * rough_integral(X, 2, rp.times).values + b * rough_integral(Y, 2, rp.times).values
    assert np.max(np.abs(combo.values - parts)) <= 1e-12


def test_integral_additivity_on_partition_points():
    rp = lift_pl(sample_fbm(H=0.45, d=2, knots=33, seed=15), gamma=0.4, level=2)
    X = coordinate_lift(rp, 1)
    full = rough_integral(X, 2, rp.times).values[:, 0]
    # Integrate over [0, u] and [u, T] separately; the pieces must add to
    # the full running integral exactly on shared points.
    mid = len(rp.times) // 2
    first = rough_integral(X, 2, rp.times[: mid + 1]).values[:, 0]
    second = rough_integral(X.restrict(np.arange(mid, len(rp.times))), 2, rp.times[mid:]).values[:, 0]
    assert np.allclose(first, full[: mid + 1], atol=0.0)
    assert np.allclose(first[-1] + second, full[mid:], atol=1e-15)


def test_integral_lift_structure_and_order():
    rp, X = make_cubic_lift(knots=129)
    result = rough_integral(X, 1, rp.times)
    lift = result.lift
    assert lift.order == rp.hoelder_level + 1
    assert np.array_equal(lift.coeff(word(1))[:, 0], X.primal[:, 0])
    assert np.array_equal(lift.coeff(word(1, 1)), X.coeff(word(1)))
    assert np.array_equal(lift.primal, result.values)
    checks = check_controlled(lift)
    assert all(c.passed for c in checks.values()), {
        str(w): (c.slope, c.threshold) for w, c in checks.items()
    }


def test_integral_local_remainder_order():
    # Eq-style local estimate: the one-cell compensated sum approximates
    # the integral increment at order (N_γ+1)γ.  Defects are aggregated by
    # scale-wise mean (the estimate is uniform in (s,t); the mean follows
    # the same power law with a far stabler constant than the max).
    rp = lift_pl(sample_fbm(H=0.45, d=2, knots=513, seed=0), gamma=0.4, level=2)
    X = compose(PolynomialFunction(1, [{(2,): 1.0}]), coordinate_lift(rp, 1))
    n_gamma = rp.hoelder_level
    values = rough_integral(X, 2, rp.times).values[:, 0]
    spans, defects = [], []
    ts = rp.times
    for m in range(1, 8):
        stride = 2**m
        cell = []
        for i in range(0, len(ts) - stride, stride):
            j = i + stride
            inc = rp.increment(ts[i], ts[j])
            comp = sum(
                inc.coeff(w + word(2)) * X.coeff(w)[i, 0]
                for w in X.coeffs
                if len(w) <= n_gamma - 1
            )
            cell.append(abs(values[j] - values[i] - comp))
        spans.append(ts[stride] - ts[0])
        defects.append(float(np.mean(cell)))
    from roughkit.regression import check_order

    chk = check_order("local-remainder", spans, defects, threshold=(n_gamma + 1) * rp.gamma)
    assert chk.passed, (chk.slope, chk.threshold)


def test_integral_requires_order():
    rp, X = make_cubic_lift(knots=17)
    with pytest.raises(ValueError):
        rough_integral(X.truncate(2), 1, rp.times)


def test_integral_rejects_off_grid_partition():
    rp, X = make_cubic_lift(knots=17)
    with pytest.raises(ValueError):
        rough_integral(X, 1, np.array([0.0, 0.123456, 1.0]))


def test_controlled_json_round_trip():
    rp, X = make_cubic_lift(knots=17)
    Y = compose(PolynomialFunction(1, [{(2,): 1.0}]), X)
    back = ControlledPath.from_json_dict(Y.to_json_dict(), rp)
    assert back.order == Y.order and back.width == Y.width
    assert np.array_equal(back.times, Y.times)
    for w in set(Y.coeffs) | set(back.coeffs):
        assert np.array_equal(back.coeff(w), Y.coeff(w))
