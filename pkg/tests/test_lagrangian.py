import numpy as np
import pytest

from selfdual.convex import Quadratic, SeparablePower, Sum
from selfdual.lagrangian import (
    Basic,
    CustomBoundary,
    InitialValue,
    Lagrangian,
    ZeroBoundary,
    asd_defect,
    asd_inequality_defect,
    augment_boundary,
    boundary_inequality_defect,
    hamiltonian_eval,
    lagrangian_conjugate,
    lagrangian_eval,
    lambda_regularize,
    oplus,
    selfdual_boundary_defect,
    shift,
    star,
)
from selfdual.operators import BoundaryPair, LinearMap
from selfdual.space import Space


def basic_half_square(space):
    return Basic(Quadratic.isotropic(space, 1.0))


def sample_xp(space, rng, count, scale=1.5):
    return [(space.random(rng, scale), space.random(rng, scale))
            for _ in range(count)]


class BrokenLagrangian(Lagrangian):
    """Deliberately non-ASD probe: (x + p)^2 / 2 in one dimension."""

    def value(self, x, p):
        return 0.5 * float((x[0] + p[0]) ** 2)


# -- evaluation ----------------------------------------------------------------


def test_basic_eval():
    sp = Space.euclidean(2)
    lag = basic_half_square(sp)
    assert lagrangian_eval(lag, np.array([1.0, 0.0]),
                           np.array([0.0, 1.0])) == pytest.approx(1.0)


def test_basic_eval_fenchel_equality_point():
    sp = Space.euclidean(2)
    lag = basic_half_square(sp)
    x, p = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
    val = lagrangian_eval(lag, x, p)
    assert val == pytest.approx(1.0)
    assert val + sp.inner(x, p) == pytest.approx(0.0, abs=1e-14)


def test_shift_eval_hand_value():
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    lag = shift(basic_half_square(sp), b)
    # psi(x) + psi*(-Bx - p) at x=(1,0), p=0: 1/2 + |(0,1)|^2/2 = 1
    assert lagrangian_eval(lag, np.array([1.0, 0.0]),
                           np.zeros(2)) == pytest.approx(1.0)


def test_shift_by_zero_is_identity():
    sp = Space.euclidean(2)
    lag = basic_half_square(sp)
    shifted = shift(lag, LinearMap.zero(sp))
    rng = np.random.default_rng(0)
    for x, p in sample_xp(sp, rng, 10):
        assert shifted.value(x, p) == pytest.approx(lag.value(x, p), rel=1e-12)


# -- Hamiltonians ----------------------------------------------------------------


def test_hamiltonian_norm_squared():
    # psi = |x|^2 gives H(x, y) = |y|^2 - |x|^2
    sp = Space.euclidean(2)
    lag = Basic(Quadratic.isotropic(sp, 2.0))
    x, y = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    assert hamiltonian_eval(lag, x, y) == pytest.approx(3.0)


def test_hamiltonian_tempered_diagonal():
    sp = Space.euclidean(3)
    lag = Basic(Sum(sp, [Quadratic.isotropic(sp, 1.0),
                         SeparablePower(sp, 4, weights=0.5)]))
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = sp.random(rng, 2.0)
        assert abs(hamiltonian_eval(lag, x, -x)) <= 1e-9 * (
            1.0 + abs(lag.psi.value(x)))


def test_hamiltonian_shift_rule_matches_numeric_sup():
    from selfdual.lagrangian import _hamiltonian_numeric

    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 1.5], [-1.5, 0.0]]))
    lag = shift(basic_half_square(sp), b)
    rng = np.random.default_rng(2)
    for _ in range(5):
        x, y = sp.random(rng), sp.random(rng)
        closed = hamiltonian_eval(lag, x, y)
        numeric = _hamiltonian_numeric(lag, x, y)
        assert closed == pytest.approx(numeric, abs=1e-8)


def test_hamiltonian_sum_rule_for_oplus():
    sp = Space.euclidean(2)
    left, right = basic_half_square(sp), basic_half_square(sp)
    combo = oplus(left, right)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, y = sp.random(rng), sp.random(rng)
        expected = left.hamiltonian(x, y) + right.hamiltonian(x, y)
        # both equal to 2 (|y|^2/2 - |x|^2/2) for these operands
        assert combo.hamiltonian(x, y) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(sp.inner(y, y) - sp.inner(x, x))


def test_hamiltonian_negative_diagonal_everywhere():
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    lags = [
        basic_half_square(sp),
        shift(basic_half_square(sp), b),
        oplus(basic_half_square(sp), basic_half_square(sp)),
        lambda_regularize(basic_half_square(sp), 0.5),
    ]
    rng = np.random.default_rng(4)
    for lag in lags:
        for _ in range(25):
            x = sp.random(rng, 2.0)
            assert lag.hamiltonian(x, -x) <= 1e-9 * (1.0 + sp.inner(x, x))


# -- anti-selfduality ----------------------------------------------------------


def test_asd_defect_basic_1d():
    sp = Space.euclidean(1)
    lag = basic_half_square(sp)
    rng = np.random.default_rng(5)
    assert asd_defect(lag, sample_xp(sp, rng, 5)) <= 1e-6


def test_asd_defect_shift_skew_2d():
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    lag = shift(basic_half_square(sp), b)
    rng = np.random.default_rng(6)
    assert asd_defect(lag, sample_xp(sp, rng, 5)) <= 1e-5


def test_asd_defect_detector_fires_on_broken_lagrangian():
    sp = Space.euclidean(1)
    bad = BrokenLagrangian(sp)
    pair = (np.array([1.0]), np.array([1.0]))
    assert asd_defect(bad, [pair]) > 0.1


def test_asd_defect_star_composite_1d():
    sp = Space.euclidean(1)
    t_kernel = Basic(Quadratic.isotropic(sp, 2.0))  # phi + phi*(-.) quadratic
    lag = star(basic_half_square(sp), t_kernel)
    rng = np.random.default_rng(7)
    assert asd_defect(lag, sample_xp(sp, rng, 4)) <= 1e-5


def test_asd_defect_nonquadratic_grid_path():
    sp = Space.euclidean(1)
    lag = Basic(SeparablePower(sp, 4, weights=1.0))
    rng = np.random.default_rng(8)
    samples = sample_xp(sp, rng, 3, scale=0.8)
    assert asd_defect(lag, samples, box=12.0) <= 1e-5


def test_asd_inequality_holds_on_composites():
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 2.0], [-2.0, 0.0]]))
    lags = [basic_half_square(sp),
            shift(basic_half_square(sp), b),
            oplus(basic_half_square(sp), basic_half_square(sp)),
            star(basic_half_square(sp), basic_half_square(sp)),
            lambda_regularize(basic_half_square(sp), 0.3)]
    rng = np.random.default_rng(9)
    for lag in lags:
        assert asd_inequality_defect(lag, sample_xp(sp, rng, 30)) <= 1e-9


def test_oplus_hamiltonian_closed_vs_numeric():
    from selfdual.lagrangian import _hamiltonian_numeric

    sp = Space.euclidean(1)
    combo = oplus(basic_half_square(sp), Basic(Quadratic.isotropic(sp, 3.0)))
    rng = np.random.default_rng(10)
    for _ in range(5):
        x, y = sp.random(rng), sp.random(rng)
        assert combo.hamiltonian(x, y) == pytest.approx(
            _hamiltonian_numeric(combo, x, y), abs=1e-6)


# -- lambda regularization -------------------------------------------------------


def test_lambda_reg_proximal_closed_form():
    sp = Space.euclidean(1)
    reg = lambda_regularize(basic_half_square(sp), 1.0, 1.0)
    j = reg.proximal(np.array([2.0]), np.array([0.0]))
    assert j[0] == pytest.approx(1.0)
    # J is independent of p for the basic kind
    j2 = reg.proximal(np.array([2.0]), np.array([5.0]))
    assert j2[0] == pytest.approx(1.0)
    assert reg.grad_x(np.array([2.0]), np.array([0.0]))[0] == pytest.approx(1.0)


def test_lambda_reg_partial_gradient_identity_fd():
    sp = Space.euclidean(2)
    psi = Sum(sp, [Quadratic(sp, np.diag([1.0, 2.0])),
                   SeparablePower(sp, 4, weights=0.5)])
    reg = lambda_regularize(Basic(psi), 0.4)
    rng = np.random.default_rng(11)
    for _ in range(5):
        x, p = sp.random(rng), sp.random(rng)
        g = reg.grad_x(x, p)
        h = 1e-6
        for i, e in enumerate(np.eye(2)):
            fd = (reg.value(x + h * e, p) - reg.value(x - h * e, p)) / (2 * h)
            assert fd == pytest.approx(sp.inner(g, e), abs=1e-6)


def test_lambda_reg_converges_to_unregularized():
    sp = Space.euclidean(1)
    lag = Basic(SeparablePower(sp, 4, weights=1.0))
    x, p = np.array([0.7]), np.array([-0.2])
    target = lag.value(x, p)
    vals = [lambda_regularize(lag, a).value(x, p) for a in [1.0, 0.1, 0.01]]
    errors = [abs(v - target) for v in vals]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] <= 1e-2 * (1.0 + abs(target))


def test_lambda_reg_asd_in_1d():
    sp = Space.euclidean(1)
    reg = lambda_regularize(basic_half_square(sp), 0.5)
    rng = np.random.default_rng(12)
    assert asd_defect(reg, sample_xp(sp, rng, 4)) <= 1e-5


def test_lambda_reg_lipschitz_proximal():
    sp = Space.euclidean(2)
    reg = lambda_regularize(Basic(Quadratic(sp, np.diag([1.0, 3.0]))), 0.7)
    rng = np.random.default_rng(13)
    p = sp.random(rng)
    worst = 0.0
    for _ in range(50):
        x1, x2 = sp.random(rng, 2.0), sp.random(rng, 2.0)
        num = sp.norm(reg.proximal(x1, p) - reg.proximal(x2, p))
        den = sp.norm(x1 - x2)
        if den > 1e-12:
            worst = max(worst, num / den)
    assert worst <= 1.0 + 1e-8


def test_lambda_reg_presets():
    from selfdual.lagrangian import LambdaRegularized

    sp = Space.euclidean(1)
    lag = basic_half_square(sp)
    m = LambdaRegularized.preset(lag, 0.5, "moreau")
    assert (m.alpha, m.beta) == (0.5, 0.5)
    q = LambdaRegularized.preset(lag, 0.5, "quadratic_scale")
    assert (q.alpha, q.beta) == (4.0, 4.0)
    with pytest.raises(ValueError):
        LambdaRegularized.preset(lag, 0.5, "bogus")


# -- boundary Lagrangians ---------------------------------------------------------


def test_initial_value_zero_anchor_selfdual_exactly():
    sp = Space.euclidean(2)
    ell = InitialValue(sp, np.zeros(2))
    rng = np.random.default_rng(14)
    samples = [(sp.random(rng), sp.random(rng)) for _ in range(20)]
    assert selfdual_boundary_defect(ell, samples) <= 1e-14


def test_initial_value_nonzero_anchor_selfdual():
    sp = Space.euclidean(2)
    ell = InitialValue(sp, np.array([1.0, 0.0]))
    rng = np.random.default_rng(15)
    samples = [(sp.random(rng), sp.random(rng)) for _ in range(20)]
    assert selfdual_boundary_defect(ell, samples) <= 1e-10


def test_boundary_probe_detector_fires():
    sp = Space.euclidean(1)
    probe = CustomBoundary(Quadratic.isotropic(sp, 2.0),  # |r|^2, not selfdual
                           Quadratic.isotropic(sp, 1.0))
    rng = np.random.default_rng(16)
    samples = [(sp.random(rng), sp.random(rng)) for _ in range(20)]
    assert selfdual_boundary_defect(probe, samples) > 1e-2


def test_boundary_inequality():
    sp = Space.euclidean(3)
    ell = InitialValue(sp, np.array([0.4, -0.2, 1.0]))
    rng = np.random.default_rng(17)
    samples = [(sp.random(rng, 2.0), sp.random(rng, 2.0)) for _ in range(1000)]
    assert boundary_inequality_defect(ell, samples) <= 1e-12


# -- boundary augmentation --------------------------------------------------------


def test_augment_boundary_zero_traces_matches_shift():
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    bp = BoundaryPair.zero(sp)
    aug = augment_boundary(basic_half_square(sp), b, bp, ZeroBoundary())
    plain = shift(basic_half_square(sp), b)
    rng = np.random.default_rng(18)
    for x, p in sample_xp(sp, rng, 10):
        assert aug.value(x, p) == pytest.approx(plain.value(x, p), rel=1e-12)


def test_augment_boundary_refuses_bad_operator():
    sp = Space.euclidean(2)
    bad = LinearMap.identity(sp)  # not skew, zero traces
    bp = BoundaryPair.zero(sp)
    with pytest.raises(ValueError):
        augment_boundary(basic_half_square(sp), bad, bp, ZeroBoundary())


def test_augment_boundary_nonnegative_on_skew_graph():
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    bp = BoundaryPair.zero(sp)
    aug = augment_boundary(basic_half_square(sp), b, bp,
                           InitialValue(bp.space1, np.zeros(1),
                                        space2=bp.space2))
    rng = np.random.default_rng(19)
    vals = []
    for _ in range(30):
        x = sp.random(rng, 2.0)
        vals.append(aug.value(x, np.zeros(2)))
    assert min(vals) >= -1e-12
    assert aug.value(np.zeros(2), np.zeros(2)) == pytest.approx(0.0, abs=1e-14)


def test_augment_boundary_time_derivative_matches_path_quadrature():
    """SBP time derivative + endpoint traces reproduce the discrete path form."""
    from tests.test_operators import sbp_time_derivative

    n, h = 9, 1.0 / 8
    d, weights = sbp_time_derivative(n, h)
    sp = Space(n, np.diag(weights))
    b = LinearMap(sp, matrix=d)
    h1 = Space.euclidean(1)
    e0 = np.zeros((1, n)); e0[0, 0] = 1.0
    eT = np.zeros((1, n)); eT[0, -1] = 1.0
    bp = BoundaryPair(LinearMap(sp, h1, matrix=e0), LinearMap(sp, h1, matrix=eT))
    a = np.array([0.8])
    ell = InitialValue(h1, a)

    # node-separable psi: sum_k w_k u_k^2 / 2 == |u|_G^2 / 2
    psi = Quadratic.isotropic(sp, 1.0)
    aug = augment_boundary(Basic(psi), b, bp, ell, tol=1e-8)

    rng = np.random.default_rng(20)
    for _ in range(5):
        u, p = sp.random(rng), sp.random(rng)
        du = d @ u
        # independent assembly of the same functional
        direct = (0.5 * np.sum(weights * u ** 2)
                  + 0.5 * np.sum(weights * (du + p) ** 2)
                  + 0.5 * u[0] ** 2 - 2 * a[0] * u[0] + a[0] ** 2
                  + 0.5 * u[-1] ** 2)
        assert aug.value(u, p) == pytest.approx(direct, rel=1e-10)


def test_lagrangian_conjugate_infinite_for_broken_directions():
    sp = Space.euclidean(1)
    bad = BrokenLagrangian(sp)
    # finite only on the diagonal q = y
    finite = lagrangian_conjugate(bad, np.array([1.0]), np.array([1.0]))
    assert finite == pytest.approx(0.5, abs=1e-6)


def test_nonnegative_on_conservative_graphs():
    """L(x, Bx + Lambda x) >= 0 for ASD L, skew B, conservative Lambda."""
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 1.7], [-1.7, 0.0]]))

    def lam(x):
        u, v = x
        return np.array([-u * v ** 2, u ** 2 * v])

    lag = Basic(Sum(sp, [Quadratic.isotropic(sp, 1.0),
                         SeparablePower(sp, 4, weights=0.5)]))
    rng = np.random.default_rng(21)
    for _ in range(50):
        x = sp.random(rng, 2.0)
        graph_p = b(x) + lam(x)
        val = lag.value(x, graph_p)
        assert val >= -1e-9 * (1.0 + abs(val))


def test_hamiltonian_view_object():
    from selfdual.lagrangian import Hamiltonian

    sp = Space.euclidean(2)
    view = Hamiltonian(Basic(Quadratic.isotropic(sp, 2.0)))
    assert view(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(3.0)
    rng = np.random.default_rng(22)
    samples = [sp.random(rng) for _ in range(20)]
    assert view.diagonal_defect(samples) <= 1e-12


def test_hamiltonian_almost_odd_inequality():
    """H(-y, -x) + H(x, y) <= 0 for the Hamiltonians of ASD Lagrangians."""
    sp = Space.euclidean(2)
    b = LinearMap(sp, matrix=np.array([[0.0, 0.8], [-0.8, 0.0]]))
    lags = [
        Basic(Sum(sp, [Quadratic.isotropic(sp, 1.0),
                       SeparablePower(sp, 4, weights=0.5)])),
        shift(Basic(Quadratic(sp, np.diag([1.0, 2.0]))), b),
        oplus(Basic(Quadratic.isotropic(sp, 1.0)),
              Basic(Quadratic.isotropic(sp, 2.0))),
    ]
    rng = np.random.default_rng(23)
    for lag in lags:
        for _ in range(25):
            x, y = sp.random(rng, 2.0), sp.random(rng, 2.0)
            total = lag.hamiltonian(-y, -x) + lag.hamiltonian(x, y)
            assert total <= 1e-9 * (1.0 + abs(total))
