import dataclasses

import numpy as np
import pytest

from ofdma_ce.model import (
    Allocation,
    DualState,
    IterationRecord,
    Scenario,
    ScenarioError,
    SolveTrace,
    SystemParams,
    UserParams,
    validate_scenario,
)


def _scenario(K=2, N=4, gains=None, system=None, user=None):
    system = system or SystemParams(num_subchannels=N)
    gains = np.full((K, N), 1e-4) if gains is None else gains
    return Scenario(system, (user or UserParams(),) * K, gains)


def test_defaults_are_valid():
    s = _scenario()
    assert validate_scenario(s) is s


def test_gain_shape_mismatch():
    with pytest.raises(ScenarioError) as e:
        validate_scenario(_scenario(gains=np.full((2, 3), 1e-4)))
    assert e.value.kinds == ["GainMatrixShapeMismatch"]


def test_zero_noise_power():
    with pytest.raises(ScenarioError) as e:
        validate_scenario(_scenario(system=SystemParams(noise_power=0.0)))
    assert e.value.kinds == ["NonPositiveParameter"]


def test_empty_user_set():
    s = Scenario(SystemParams(), (), np.zeros((0, 4)))
    with pytest.raises(ScenarioError) as e:
        validate_scenario(s)
    assert "EmptyUserSet" in e.value.kinds


def test_every_violation_reported():
    # three independent violations: noise power, one weight, one gain entry
    gains = np.full((2, 4), 1e-4)
    gains[1, 2] = 0.0
    s = Scenario(SystemParams(noise_power=-1.0), (UserParams(weight=0.0), UserParams()), gains)
    with pytest.raises(ScenarioError) as e:
        validate_scenario(s)
    assert len(e.value.issues) == 3


def test_validation_idempotent():
    s = _scenario()
    assert validate_scenario(validate_scenario(s)) is s


def test_power_cap_must_exceed_circuit_power():
    with pytest.raises(ScenarioError):
        validate_scenario(_scenario(user=UserParams(max_power=0.04)))


def test_scenario_is_immutable():
    s = _scenario()
    with pytest.raises(ValueError):
        s.gains[0, 0] = 1.0
    with pytest.raises(dataclasses.FrozenInstanceError):
        s.rng_seed = 3


def test_allocation_check():
    s = _scenario(K=2, N=2)
    bad = Allocation(np.ones((2, 2)), np.array([[0.1, 0.0], [0.0, 0.2]]), np.array([0.0, 2e8]))
    problems = bad.check(s)
    assert "subchannel assigned to more than one user" in problems
    assert "cpu frequency outside [0, f_max]" in problems
    assert Allocation.zeros(2, 2).check(s) == []


def test_dual_state_initial_and_sign():
    d = DualState.initial(2, 3, lam=[1.0, 2.0])
    assert d.xi.shape == (3,)
    assert d.is_nonnegative()
    assert not d.update(alpha=np.array([-1.0, 0.0])).is_nonnegative()
    with pytest.raises(TypeError):
        DualState.initial(2, 3, gamma=[1.0])


def test_trace_indices_strictly_increase():
    d = DualState.initial(1, 1)
    t = SolveTrace()
    t.append(IterationRecord(1, 5, 1.0, d, 0.0, 0.0))
    t.append(IterationRecord(2, 3, 2.0, d, 0.0, 0.0))
    with pytest.raises(ValueError):
        t.append(IterationRecord(2, 3, 2.0, d, 0.0, 0.0))
    np.testing.assert_array_equal(t.objective_history(), [1.0, 2.0])
