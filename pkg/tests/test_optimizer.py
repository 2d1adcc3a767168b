import numpy as np
import pytest

from vsekit.errors import ConfigurationError, ContractError, NumericError
from vsekit.optimizer import AdamState, LrSchedule, adam_step, lr_at


class TestSchedule:
    def test_defaults(self):
        s = LrSchedule()
        assert lr_at(s, 0) == 0.0002
        assert lr_at(s, 14) == 0.0002
        assert lr_at(s, 15) == pytest.approx(0.00002, rel=1e-12)
        assert lr_at(s, 29) == pytest.approx(0.00002, rel=1e-12)

    def test_constant(self):
        s = LrSchedule(base_lr=0.01, drop_factor=1)
        assert {lr_at(s, e) for e in range(30)} == {0.01}

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            lr_at(LrSchedule(), 30)
        with pytest.raises(ContractError):
            lr_at(LrSchedule(), -1)

    @pytest.mark.parametrize(
        "kwargs", [{"base_lr": 0}, {"drop_factor": 0.5}, {"drop_epoch": 31}, {"total_epochs": 0}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            LrSchedule(**kwargs)


class TestAdam:
    def test_first_step(self):
        params, state = adam_step(AdamState(), {"w": 0.0}, {"w": 1.0}, 0.001)
        assert float(params["w"]) == pytest.approx(-0.001, abs=1e-8)
        assert state.t == 1

    def test_zero_gradient(self):
        w = np.array([1.0, -2.0, 3.0])
        adam_step(AdamState(), {"w": w}, {"w": np.zeros(3)}, 0.1)
        np.testing.assert_array_equal(w, [1.0, -2.0, 3.0])

    def test_step_bound_constant_gradient(self):
        state = AdamState()
        w = np.zeros(1)
        prev = w.copy()
        for _ in range(2):
            adam_step(state, {"w": w}, {"w": np.ones(1)}, 0.01)
            assert abs(w - prev)[0] <= 0.01 * (1 + 1e-6)
            prev = w.copy()

    def test_matches_hand_recursion(self, rng):
        g = rng.normal(size=(5, 3))
        w = np.zeros(3)
        state = AdamState()
        m = v = np.zeros(3)
        ref = np.zeros(3)
        for t, gt in enumerate(g, start=1):
            adam_step(state, {"w": w}, {"w": gt}, 0.01)
            m = 0.9 * m + 0.1 * gt
            v = 0.999 * v + 0.001 * gt**2
            ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            np.testing.assert_allclose(w, ref, rtol=1e-12, atol=1e-15)
        assert np.all(state.v["w"] >= 0)

    def test_nonfinite_refused_transactionally(self):
        state = AdamState()
        a, b = np.ones(2), np.ones(2)
        adam_step(state, {"a": a, "b": b}, {"a": np.ones(2), "b": np.ones(2)}, 0.1)
        snap = (a.copy(), b.copy(), state.m["a"].copy(), state.v["b"].copy(), state.t)
        with pytest.raises(NumericError):
            adam_step(state, {"a": a, "b": b}, {"a": np.ones(2), "b": np.array([1.0, np.inf])}, 0.1)
        np.testing.assert_array_equal(a, snap[0])
        np.testing.assert_array_equal(b, snap[1])
        np.testing.assert_array_equal(state.m["a"], snap[2])
        np.testing.assert_array_equal(state.v["b"], snap[3])
        assert state.t == snap[4]

    def test_sign_sgd_limit(self, rng):
        g = rng.normal(size=20)
        w = np.zeros(20)
        adam_step(AdamState(beta1=0.0, beta2=0.0, eps=1e-30), {"w": w}, {"w": g}, 0.05)
        np.testing.assert_allclose(w, -0.05 * np.sign(g), rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            adam_step(AdamState(), {"w": np.zeros(2)}, {"w": np.zeros(3)}, 0.1)
