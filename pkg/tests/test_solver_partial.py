import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from conftest import small
from ofdma_ce.channel import make_scenario
from ofdma_ce.model import (
    Allocation,
    DegenerateDual,
    InfeasibleInstance,
    Scenario,
    SystemParams,
    UserParams,
)
from ofdma_ce.objective import LN2, lemma1_residuals, user_powers, user_rates
from ofdma_ce.oracle import GridSpec, brute_force_partial
from ofdma_ce.solver_partial import (
    SolverConfig,
    assign_subchannels,
    channel_indicator,
    inner_dual_loop,
    optimal_frequency,
    optimal_power,
    solve_partial,
    update_lambda_beta,
)

SP = SystemParams()
UP = UserParams()


# -- closed forms --------------------------------------------------------------

def _golden_max(fn, hi):
    res = minimize_scalar(lambda x: -fn(x), bracket=(0.0, 0.3 * hi, hi), method="golden",
                          options={"xtol": 1e-12})
    return res.x


def test_optimal_power_example():
    # rate price 1, power price 1e6, h = 1e-5
    p = optimal_power(1.0, 1e6, SP, 1e-5)
    assert p == pytest.approx(0.9617, abs=5e-5)

    def lagr(x):
        return 2e6 * math.log2(1 + x * 1e-5 / 1e-9) - 1e6 * 3 * x

    assert p == pytest.approx(_golden_max(lagr, 5.0), rel=1e-6)


def test_power_zero_below_threshold():
    a, b = 1.0, 1e6
    h_th = SP.noise_power * LN2 * SP.amplifier_coeff * b / (a * SP.bandwidth_per_subchannel)
    assert optimal_power(a, b, SP, 0.999 * h_th) == 0.0
    assert optimal_power(a, b, SP, 1.001 * h_th) > 0.0


def test_power_zero_for_nonpositive_rate_price():
    h = np.geomspace(1e-8, 1e-2, 7)
    assert np.all(optimal_power(0.0, 1.0, SP, h) == 0)
    assert np.all(optimal_power(-2.0, 1.0, SP, h) == 0)


def test_degenerate_power_price():
    with pytest.raises(DegenerateDual):
        optimal_power(1.0, 0.0, SP, 1e-5)
    with pytest.raises(DegenerateDual):
        optimal_frequency(1.0, 0.0, UP)


def test_optimal_frequency_example():
    f = optimal_frequency(1.0, 1e6, UP)
    assert f == pytest.approx(math.sqrt(1e-3 / 3e-18), rel=1e-12)
    assert f == pytest.approx(1.826e7, rel=1e-3)

    def lagr(x):
        return x / 1e3 - 1e6 * 1e-24 * x ** 3

    assert f == pytest.approx(_golden_max(lagr, 1e8), rel=1e-6)


def test_frequency_zero_and_clamp():
    assert optimal_frequency(1.0, 1e6, UP, upsilon=1e-3) == 0.0
    assert optimal_frequency(1.0, 1e6, UP, upsilon=2e-3) == 0.0
    assert optimal_frequency(1.0, 1e-3, UP) == UP.max_cpu_freq
    raw = math.sqrt((1.0 / 1e3) / (3 * 1e6 * 1e-24))
    assert raw <= UP.max_cpu_freq
    assert optimal_frequency(1.0, 1e6, UP) == raw


def test_indicator_zero_power():
    assert channel_indicator(1.0, SP, 0.0, 1e-5) == 0.0


def test_indicator_positive_on_grid():
    x = np.geomspace(1e-9, 1e6, 4000)
    # same thing through the indicator: z h / N0 = x
    H = channel_indicator(1.0, SP, x * SP.noise_power / 1e-5, 1e-5)
    assert np.all(H > 0)


def test_indicator_matches_high_precision():
    import mpmath
    mpmath.mp.dps = 40
    x = np.geomspace(1e-12, 1e4, 57)
    H = channel_indicator(1.0, SP, x * SP.noise_power / 1e-5, 1e-5)
    for xi, hi in zip(x, H):
        xm = mpmath.mpf(float(xi))
        ref = SP.bandwidth_per_subchannel * (mpmath.log(1 + xm) - xm / (1 + xm)) / mpmath.log(2)
        assert hi == pytest.approx(float(ref), rel=1e-9)


def test_indicator_linear_in_price():
    z, h = 0.3, 2e-5
    assert channel_indicator(2.0, SP, z, h) == pytest.approx(2 * channel_indicator(1.0, SP, z, h), rel=1e-15)


def test_assign_single_user():
    H = np.array([[1.0, -1.0, 0.0, 3.0]])
    np.testing.assert_array_equal(assign_subchannels(H), [[1, 0, 0, 1]])


def test_assign_tie_lowest_index():
    H = np.array([[2.0, 1.0], [2.0, 3.0]])
    np.testing.assert_array_equal(assign_subchannels(H), [[1, 0], [0, 1]])


@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_assign_matches_columnwise_argmax(K, N, seed):
    H = np.random.default_rng(seed).normal(size=(K, N))
    rho = assign_subchannels(H)
    for n in range(N):
        col = list(H[:, n])
        best = max(col)
        if best <= 0:
            assert rho[:, n].sum() == 0
        else:
            assert rho[col.index(best), n] == 1 and rho[:, n].sum() == 1


# -- (lambda, beta) update -----------------------------------------------------

def _one_user(R, P):
    # local-only user whose allocation yields rate R and power P (C chosen to match)
    s = small(K=1, N=1)
    f = ((P - s.system.circuit_power) / s.users[0].chip_coeff) ** (1 / 3)
    u = UserParams(cycles_per_bit=f / R)
    s = Scenario(s.system, (u,), s.gains)
    return s, Allocation(np.zeros((1, 1)), np.zeros((1, 1)), [f])


def test_update_full_step():
    s, a = _one_user(2e6, 2.0)
    lam, beta = update_lambda_beta(s, a, np.array([3.0]), np.array([7.0]), damping=1.0)
    assert lam[0] == pytest.approx(0.5) and beta[0] == pytest.approx(1e6)


def test_update_half_step():
    s, a = _one_user(2e6, 2.0)
    lam, beta = update_lambda_beta(s, a, np.array([1.0]), np.array([0.0]), damping=0.5)
    assert lam[0] == pytest.approx(0.75) and beta[0] == pytest.approx(5e5)


def test_update_fixed_point():
    s, a = _one_user(2e6, 2.0)
    lam, beta = update_lambda_beta(s, a, np.array([0.5]), np.array([1e6]), damping=0.7)
    R, P = user_rates(s, a)[0], user_powers(s, a)[0]
    assert abs(R - beta[0] * P) <= 1e-9 * R and abs(lam[0] - 1 / P) <= 1e-12


def test_solver_config_validation():
    for bad in (dict(outer_tol=0), dict(max_inner_iters=0), dict(damping=0), dict(damping=1.5)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


# -- inner loop ------------------------------------------------------------------

def _grid_subtractive(s, lam, beta, points=200):
    """Exhaustive grid maximum of sum_k lam_k (omega R_k - beta_k P_k) under C1-C5."""
    K, N = s.gains.shape
    sp = s.system
    best = -np.inf
    cache = {}
    for owner in itertools.product(range(-1, K), repeat=N):
        total = 0.0
        for k, u in enumerate(s.users):
            chans = tuple(n for n in range(N) if owner[n] == k)
            if (k, chans) not in cache:
                pg = np.concatenate(([0.0], np.geomspace(u.max_power * 1e-6, u.max_power, points)))
                fg = np.concatenate(([0.0], np.geomspace(u.max_cpu_freq * 1e-6, u.max_cpu_freq, points)))
                grids = np.meshgrid(*([pg] * len(chans)), fg, indexing="ij")
                f = grids[-1]
                R = f / u.cycles_per_bit
                P = u.chip_coeff * f ** 3 + sp.circuit_power
                for g, n in zip(grids[:-1], chans):
                    R = R + sp.bandwidth_per_subchannel * np.log2(1 + g * s.gains[k, n] / sp.noise_power)
                    P = P + sp.amplifier_coeff * g
                ok = (R >= u.min_bits_rate) & (P <= u.max_power)
                v = np.where(ok, lam[k] * (u.weight * R - beta[k] * P), -np.inf)
                cache[(k, chans)] = v.max()
            total += cache[(k, chans)]
        best = max(best, total)
    return best


@pytest.mark.parametrize("seed", range(4))
def test_inner_loop_matches_grid(seed):
    s = small(seed=seed)
    sol = solve_partial(s)
    lam = 1.0 / user_powers(s, sol.allocation)
    beta = 0.5 * sol.duals.beta  # off the fixed point so the objective is clearly positive
    inner = inner_dual_loop(s, lam, beta, SolverConfig())
    a = inner.allocation
    w = s.user_array("weight")
    value = float(np.sum(lam * (w * user_rates(s, a) - beta * user_powers(s, a))))
    grid = _grid_subtractive(s, lam, beta)
    assert abs(value - grid) <= 0.01 * abs(grid)


def test_inner_loop_slack_multipliers_vanish():
    s = small(seed=3).with_users(min_bits_rate=0.0, max_power=1e6)
    sol = solve_partial(s)
    inner = inner_dual_loop(s, sol.duals.lam, sol.duals.beta, SolverConfig())
    assert np.all(inner.duals.alpha == 0) and np.all(inner.duals.varsigma == 0)


def test_infeasible_rate_floor():
    s = small(seed=1).with_users(min_bits_rate=1e9)
    with pytest.raises(InfeasibleInstance):
        solve_partial(s)


# -- full solver ------------------------------------------------------------------

def test_default_setup_converges(default_scenario):
    sol = solve_partial(default_scenario)
    assert sol.converged
    assert sol.outer_iters <= 50
    r1, r2 = lemma1_residuals(default_scenario, sol.allocation, sol.duals.lam, sol.duals.beta)
    assert r1 < 1e-4 and r2 < 1e-4


def test_single_user_single_channel_grid():
    s = small(seed=2, K=1, N=1)
    sol = solve_partial(s)
    ref = brute_force_partial(s, GridSpec(points=2000))
    assert abs(sol.weighted_sum_ce - ref.ce) <= 0.01 * ref.ce


def test_vanishing_gains_fall_back_to_local():
    s0 = make_scenario(seed=0)
    s = Scenario(s0.system, s0.users, np.full(s0.gains.shape, 1e-16))
    sol = solve_partial(s)
    assert np.all(sol.allocation.power == 0)
    assert sol.report.all_feasible


def _activation_mismatch(s, sol):
    # p > 0 exactly when h exceeds N0 ln2 zeta (power price) / ((rate price) B)
    d = sol.duals
    a = d.lam * s.user_array("weight") + d.alpha
    b = d.lam * d.beta + d.varsigma
    sp = s.system
    bad = 0
    for k in range(s.num_users):
        if a[k] <= 0:
            continue
        h_th = sp.noise_power * LN2 * sp.amplifier_coeff * b[k] / (a[k] * sp.bandwidth_per_subchannel)
        for n in np.nonzero(sol.allocation.assignment[k])[0]:
            bad += (sol.allocation.power[k, n] > 0) != (s.gains[k, n] > h_th)
    return bad


@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), K=st.integers(1, 3), N=st.integers(1, 5))
def test_solution_invariants(seed, K, N):
    s = make_scenario(seed=seed, num_users=K, system=SystemParams(num_subchannels=N))
    sol = solve_partial(s)
    a = sol.allocation
    assert a.check(s) == []
    assert np.all(a.assignment.sum(axis=0) <= 1)
    assert sol.duals.is_nonnegative()
    assert _activation_mismatch(s, sol) == 0
    if sol.converged:
        r1, r2 = lemma1_residuals(s, a, sol.duals.lam, sol.duals.beta)
        assert max(r1, r2) < 1e-4
        assert sol.report.all_feasible
    hist = sol.trace.objective_history()
    assert len(hist) >= 1 and np.all(np.isfinite(hist))


def test_deterministic(default_scenario):
    a = solve_partial(default_scenario)
    b = solve_partial(default_scenario)
    assert a.allocation.power.tobytes() == b.allocation.power.tobytes()
    assert a.weighted_sum_ce == b.weighted_sum_ce
