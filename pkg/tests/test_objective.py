import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import small
from ofdma_ce.model import Allocation, NonBinaryMode, UserParams
from ofdma_ce.channel import make_scenario
from ofdma_ce.objective import (
    ce_report,
    user_power_binary,
    user_power_partial,
    user_rate_binary,
    user_rate_partial,
    user_powers,
    user_rates,
)

mpmath.mp.dps = 40


def _alloc(K, N, rho=None, p=None, f=None, mode=None):
    return Allocation(np.zeros((K, N)) if rho is None else rho,
                      np.zeros((K, N)) if p is None else p,
                      np.zeros(K) if f is None else f, mode)


def _mp_eval(s, a, binary=False):
    """Straight-line high-precision transcription of the per-user rate and power."""
    sp = s.system
    R, P = [], []
    for k, u in enumerate(s.users):
        off_r = mpmath.mpf(0)
        off_p = mpmath.mpf(0)
        for n in range(s.gains.shape[1]):
            if a.assignment[k, n]:
                x = mpmath.mpf(float(a.power[k, n])) * mpmath.mpf(float(s.gains[k, n])) / mpmath.mpf(sp.noise_power)
                off_r += mpmath.mpf(sp.bandwidth_per_subchannel) * mpmath.log(1 + x, 2)
                off_p += mpmath.mpf(sp.amplifier_coeff) * mpmath.mpf(float(a.power[k, n]))
        f = mpmath.mpf(float(a.cpu_freq[k]))
        loc_r = f / u.cycles_per_bit
        loc_p = mpmath.mpf(u.chip_coeff) * f ** 3
        if binary:
            mu = int(a.mode[k])
            R.append(mu * off_r + (1 - mu) * loc_r)
            P.append(mu * off_p + (1 - mu) * loc_p + sp.circuit_power)
        else:
            R.append(off_r + loc_r)
            P.append(off_p + loc_p + sp.circuit_power)
    return R, P


def test_local_rate_only():
    s = small(K=1, N=1)
    assert user_rate_partial(s, _alloc(1, 1, f=[1e7]), 0) == pytest.approx(1e4, rel=1e-15)


def test_unit_snr_gives_bandwidth():
    s = small(K=1, N=1)
    p = s.system.noise_power / s.gains[0, 0]  # p h / N0 = 1
    a = _alloc(1, 1, rho=[[1]], p=[[p]])
    assert user_rate_partial(s, a, 0) == pytest.approx(2e6, rel=1e-12)


def test_power_examples():
    s = small(K=1, N=1)
    assert user_power_partial(s, _alloc(1, 1), 0) == pytest.approx(0.05)
    assert user_power_partial(s, _alloc(1, 1, rho=[[1]], p=[[1.0]]), 0) == pytest.approx(3.05)
    assert user_power_partial(s, _alloc(1, 1, f=[1e8]), 0) == pytest.approx(1.05)


def test_index_out_of_range():
    s = small()
    with pytest.raises(IndexError):
        user_rate_partial(s, _alloc(2, 2), 2)
    with pytest.raises(IndexError):
        user_power_binary(s, _alloc(2, 2, mode=[1, 0]), -1)


def test_binary_masks():
    s = small()
    a = _alloc(2, 2, rho=[[1, 0], [0, 1]], p=[[0.2, 0], [0, 0.3]], f=[1e7, 2e7], mode=[0, 1])
    # user 0 local: offload terms excluded
    assert user_rate_binary(s, a, 0) == pytest.approx(1e4)
    assert user_power_binary(s, a, 0) == pytest.approx(1e-24 * 1e21 + 0.05)
    # user 1 offloads: local terms excluded
    assert user_power_binary(s, a, 1) == pytest.approx(3 * 0.3 + 0.05)


def test_non_binary_mode_rejected():
    s = small()
    with pytest.raises(NonBinaryMode):
        ce_report(s, _alloc(2, 2, mode=[0.5, 1]), "binary")
    with pytest.raises(NonBinaryMode):
        ce_report(s, _alloc(2, 2), "binary")


def test_zero_allocation_report():
    s = small()
    r = ce_report(s, _alloc(2, 2))
    assert not r.feasible["C1"]
    assert r.weighted_sum_ce == 0.0


def test_single_user_sum_is_ce():
    s = small(K=1, N=2)
    a = _alloc(1, 2, rho=[[1, 1]], p=[[0.1, 0.05]], f=[1e7])
    r = ce_report(s, a)
    assert r.weighted_sum_ce == r.per_user_ce[0] == r.per_user_rate[0] / r.per_user_power[0]


def _random_allocation(rng, K, N, binary=False):
    owner = rng.integers(-1, K, size=N)
    rho = np.zeros((K, N))
    rho[owner[owner >= 0], np.nonzero(owner >= 0)[0]] = 1
    p = rho * rng.uniform(0, 0.3, size=(K, N))
    f = rng.uniform(0, 1e8, size=K)
    mode = rng.integers(0, 2, size=K) if binary else None
    return Allocation(rho, p, f, mode)


@pytest.mark.parametrize("seed", range(10))
def test_matches_high_precision_transcription(seed):
    rng = np.random.default_rng(seed)
    s = make_scenario(seed=seed, num_users=3)
    for binary in (False, True):
        a = _random_allocation(rng, 3, 4, binary)
        R, P = _mp_eval(s, a, binary)
        np.testing.assert_allclose(user_rates(s, a, binary), [float(r) for r in R], rtol=1e-12)
        np.testing.assert_allclose(user_powers(s, a, binary), [float(p) for p in P], rtol=1e-12)
        ws = float(mpmath.fsum(u.weight * r / p for u, r, p in zip(s.users, R, P)))
        assert ce_report(s, a, "binary" if binary else "partial").weighted_sum_ce == pytest.approx(ws, rel=1e-12)


@given(seed=st.integers(0, 10_000))
def test_binary_equals_partial_of_masked(seed):
    rng = np.random.default_rng(seed)
    s = make_scenario(seed=seed, num_users=3)
    a = _random_allocation(rng, 3, 4, binary=True)
    mu = a.mode.astype(float)
    masked = Allocation(a.assignment, a.power * mu[:, None], a.cpu_freq * (1 - mu))
    np.testing.assert_allclose(user_rates(s, a, True), user_rates(s, masked), rtol=1e-14)
    np.testing.assert_allclose(user_powers(s, a, True), user_powers(s, masked), rtol=1e-14)


@given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3))
def test_weight_scaling(seed, c):
    rng = np.random.default_rng(seed)
    s = make_scenario(seed=seed, num_users=2, user=UserParams(weight=1.0))
    s2 = s.with_users(weight=c)
    a = _random_allocation(rng, 2, 4)
    r1, r2 = ce_report(s, a), ce_report(s2, a)
    assert r2.weighted_sum_ce == pytest.approx(c * r1.weighted_sum_ce, rel=1e-12)
    assert r1.feasible == r2.feasible


@given(seed=st.integers(0, 10_000))
def test_subchannel_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    s = make_scenario(seed=seed, num_users=2)
    a = _random_allocation(rng, 2, 4)
    perm = rng.permutation(4)
    s2 = type(s)(s.system, s.users, s.gains[:, perm], s.rng_seed)
    a2 = Allocation(a.assignment[:, perm], a.power[:, perm], a.cpu_freq)
    assert ce_report(s2, a2).weighted_sum_ce == pytest.approx(ce_report(s, a).weighted_sum_ce, rel=1e-13)


@given(seed=st.integers(0, 10_000), factor=st.floats(1.01, 100.0))
def test_rate_increases_with_gain(seed, factor):
    rng = np.random.default_rng(seed)
    s = make_scenario(seed=seed, num_users=1)
    rho = np.array([[1, 0, 0, 0]])
    a = Allocation(rho, rho * rng.uniform(1e-3, 1.0), [0.0])
    g = s.gains.copy()
    g[0, 0] *= factor
    s2 = type(s)(s.system, s.users, g, s.rng_seed)
    assert user_rates(s2, a)[0] > user_rates(s, a)[0]
    assert user_powers(s2, a)[0] == user_powers(s, a)[0]


def test_feasibility_tolerance_is_absolute():
    s = small(K=1, N=1)
    u = s.users[0]

    def short_by(d):
        return Allocation(np.zeros((1, 1)), np.zeros((1, 1)), [(u.min_bits_rate - d) * u.cycles_per_bit])

    assert ce_report(s, short_by(5e-10)).feasible["C1"]
    assert not ce_report(s, short_by(1e-8)).feasible["C1"]
