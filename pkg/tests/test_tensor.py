import numpy as np
import pytest

from molpret import tensor as T
from molpret.errors import NumericError
from molpret.tensor import Tape, Tensor


def f64(x, requires_grad=True):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=requires_grad,
                  dtype=np.float64)


class TestForwardExamples:
    def test_relu(self):
        out = T.relu(Tensor(np.array([-1.0, 2.0])))
        assert list(out.data) == [0.0, 2.0]

    def test_relu_gradient_pattern(self):
        x = f64([-1.0, 2.0])
        with Tape() as tape:
            loss = T.tsum(T.relu(x))
            g = tape.gradients(loss, [x])[0]
        assert list(g) == [0.0, 1.0]

    def test_matmul_identity(self):
        a = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3))
        eye = Tensor(np.eye(2))
        assert np.array_equal(T.matmul(eye, a).data, a.data)

    def test_matmul_shape_errors(self):
        with pytest.raises(ValueError):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_mse_masked_excludes_cells(self):
        pred = Tensor(np.array([1.0, 5.0]))
        out = T.mse_masked(pred, np.array([1.0, 1.0]), np.array([True, False]))
        assert float(out.data) == 0.0

    def test_mse_masked_plain_mse_when_all_true(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(4, 3))
        t = rng.normal(size=(4, 3))
        out = T.mse_masked(Tensor(p), t, np.ones_like(t, dtype=bool))
        assert float(out.data) == pytest.approx(np.mean((p - t) ** 2) if False
                                                else float(np.mean((p.astype(np.float64) - t) ** 2)),
                                                abs=1e-7)

    def test_mse_masked_empty_mask_is_zero(self):
        out = T.mse_masked(Tensor(np.ones(3)), np.zeros(3),
                           np.zeros(3, dtype=bool))
        assert float(out.data) == 0.0

    def test_bce_matches_manual(self):
        x = np.array([0.0, 2.0, -3.0])
        z = np.array([1.0, 0.0, 1.0])
        want = np.mean(np.maximum(x, 0) - x * z + np.log1p(np.exp(-np.abs(x))))
        got = float(T.bce_with_logits(Tensor(x), z).data)
        assert got == pytest.approx(want, rel=1e-12)

    def test_gather_scatter_bounds(self):
        with pytest.raises(IndexError):
            T.gather_rows(Tensor(np.zeros((2, 3))), [0, 2])
        with pytest.raises(IndexError):
            T.scatter_add_rows(Tensor(np.zeros((2, 3))), [0, 5], 3)

    def test_scatter_then_gather_superposition(self):
        idx = np.array([0, 2, 2, 1])
        def f(src):
            return T.gather_rows(T.scatter_add_rows(src, idx, 3), idx)
        rng = np.random.default_rng(1)
        # integer-valued floats keep the addition exact
        a = rng.integers(-100, 100, size=(4, 5)).astype(np.float64)
        b = rng.integers(-100, 100, size=(4, 5)).astype(np.float64)
        fa = f(Tensor(a, dtype=np.float64)).data
        fb = f(Tensor(b, dtype=np.float64)).data
        fab = f(Tensor(a + b, dtype=np.float64)).data
        assert np.array_equal(fab, fa + fb)

    def test_reductions_accumulate_float64(self):
        x = Tensor(np.full(10, 0.1, dtype=np.float32))
        assert T.tsum(x).data.dtype == np.float64
        assert T.tmean(x).data.dtype == np.float64


PRIMITIVE_CASES = []


def _register(name, build):
    PRIMITIVE_CASES.append(pytest.param(build, id=name))


_register("matmul", lambda rng, x: T.tsum(
    T.matmul(x, Tensor(rng.normal(size=(x.shape[1], 3)), dtype=np.float64))))
_register("matmul_left", lambda rng, x: T.tsum(
    T.matmul(Tensor(rng.normal(size=(3, x.shape[0])), dtype=np.float64), x)))
_register("add_bias", lambda rng, x: T.tsum(
    T.add(x, Tensor(rng.normal(size=x.shape[-1]), dtype=np.float64))))
_register("add_same", lambda rng, x: T.tsum(
    T.add(x, Tensor(rng.normal(size=x.shape), dtype=np.float64))))
_register("sub", lambda rng, x: T.tsum(
    T.sub(x, Tensor(rng.normal(size=x.shape), dtype=np.float64))))
_register("mul", lambda rng, x: T.tsum(
    T.mul(x, Tensor(rng.normal(size=x.shape), dtype=np.float64))))
_register("mul_rowvec", lambda rng, x: T.tsum(
    T.mul(x, Tensor(rng.normal(size=(x.shape[0], 1)), dtype=np.float64))))
_register("relu", lambda rng, x: T.tsum(T.relu(x)))
_register("sum", lambda rng, x: T.tsum(x))
_register("mean", lambda rng, x: T.tmean(x))
_register("concat", lambda rng, x: T.tsum(T.concat(
    [x, Tensor(rng.normal(size=x.shape), dtype=np.float64)], axis=1)))
_register("gather", lambda rng, x: T.tsum(T.gather_rows(
    x, rng.integers(0, x.shape[0], size=7))))
_register("scatter", lambda rng, x: T.tsum(T.scatter_add_rows(
    x, rng.integers(0, 6, size=x.shape[0]), 6)))
_register("mse_masked", lambda rng, x: T.mse_masked(
    x, rng.normal(size=x.shape), rng.random(x.shape) > 0.3))
_register("bce", lambda rng, x: T.bce_with_logits(
    x, (rng.random(x.shape) > 0.5).astype(np.float64)))
_register("chain", lambda rng, x: T.tmean(T.relu(T.add(
    T.matmul(x, Tensor(rng.normal(size=(x.shape[1], 4)), dtype=np.float64)),
    Tensor(rng.normal(size=4), dtype=np.float64)))))


class TestGradientChecks:
    @pytest.mark.parametrize("build", PRIMITIVE_CASES)
    def test_primitives_under_1e4(self, build):
        # spread over many random shapes and seeds
        for seed in range(7):
            rng = np.random.default_rng(seed * 97 + 13)
            shape = (int(rng.integers(2, 9)), int(rng.integers(2, 9)))
            x = f64(rng.normal(size=shape) + 0.05)
            err = T.grad_check(lambda t: build(np.random.default_rng(seed), t),
                               x, eps=1e-5)
            assert err < 1e-4, f"seed {seed} shape {shape}: {err}"

    def test_hundred_case_budget(self):
        # the parametrized sweep above covers 16 builders x 7 seeds > 100
        assert len(PRIMITIVE_CASES) * 7 >= 100

    def test_quadratic_analytic(self):
        x = f64([3.0])
        with Tape() as tape:
            loss = T.tsum(T.mul(x, x))
            g = tape.gradients(loss, [x])[0]
        assert g[0] == pytest.approx(6.0, abs=1e-10)
        assert T.grad_check(lambda t: T.tsum(T.mul(t, t)), f64([3.0]),
                            eps=1e-4) < 1e-6

    def test_constant_function_zero_error(self):
        err = T.grad_check(lambda t: T.tsum(Tensor(np.ones(2),
                                                   dtype=np.float64)),
                           f64([1.0, 2.0]))
        assert err == 0.0

    def test_three_layer_mlp(self):
        rng = np.random.default_rng(5)
        w1 = Tensor(rng.normal(size=(4, 8)) * 0.5, dtype=np.float64)
        w2 = Tensor(rng.normal(size=(8, 1)) * 0.5, dtype=np.float64)
        b1 = Tensor(rng.normal(size=8) * 0.1, dtype=np.float64)
        y = rng.normal(size=(5, 1))

        def f(x):
            h = T.relu(T.add(T.matmul(x, w1), b1))
            return T.mse_masked(T.matmul(h, w2), y, np.ones_like(y, dtype=bool))

        err = T.grad_check(f, f64(rng.normal(size=(5, 4))), eps=1e-5)
        assert err < 1e-4

    def test_non_scalar_output_rejected(self):
        with pytest.raises(ValueError):
            T.grad_check(lambda t: t, f64([1.0, 2.0]))

    def test_gradients_accumulate_for_reused_tensor(self):
        x = f64([2.0])
        with Tape() as tape:
            loss = T.tsum(T.add(T.mul(x, x), x))  # x^2 + x -> 2x + 1 = 5
            g = tape.gradients(loss, [x])[0]
        assert g[0] == pytest.approx(5.0)

    def test_unused_param_gets_zeros(self):
        x, z = f64([1.0]), f64([4.0])
        with Tape() as tape:
            loss = T.tsum(x)
            gx, gz = tape.gradients(loss, [x, z])
        assert gz[0] == 0.0


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
        before = p.data.copy()
        state = T.adam_init([p])
        T.adam_step([p], [np.zeros(2, dtype=np.float32)], state, lr=0.1)
        assert np.array_equal(p.data, before)

    def test_first_step_bias_correction(self):
        p = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
        state = T.adam_init([p])
        T.adam_step([p], [np.ones(3, dtype=np.float32)], state, lr=0.1)
        assert np.allclose(p.data, -0.1, atol=1e-6)

    def test_constant_gradient_step_approaches_lr(self):
        p = Tensor(np.zeros(1, dtype=np.float64), requires_grad=True,
                   dtype=np.float64)
        state = T.adam_init([p])
        g = np.full(1, 0.37)
        prev = p.data.copy()
        for _ in range(300):
            prev = p.data.copy()
            T.adam_step([p], [g], state, lr=0.05)
        assert abs(prev[0] - p.data[0]) == pytest.approx(0.05, rel=1e-3)

    def test_nonfinite_gradient_aborts(self):
        p = Tensor(np.zeros(2, dtype=np.float32), requires_grad=True)
        state = T.adam_init([p])
        with pytest.raises(NumericError):
            T.adam_step([p], [np.array([1.0, np.nan], dtype=np.float32)],
                        state, lr=0.1)


class TestTapeIsolation:
    def test_no_tape_no_tracking(self):
        x = f64([1.0])
        out = T.mul(x, x)
        assert not out.requires_grad

    def test_nested_tapes_restore(self):
        x = f64([2.0])
        with Tape() as outer:
            a = T.mul(x, x)
            with Tape() as inner:
                b = T.mul(x, x)
                inner.gradients(T.tsum(b), [x])
            g = outer.gradients(T.tsum(a), [x])[0]
        assert g[0] == pytest.approx(4.0)

    def test_threaded_tapes_are_independent(self):
        import threading
        errors = []

        def work(seed):
            rng = np.random.default_rng(seed)
            x = f64(rng.normal(size=(6, 4)))
            w = Tensor(rng.normal(size=(4, 2)), dtype=np.float64,
                       requires_grad=True)
            with Tape() as tape:
                loss = T.tsum(T.relu(T.matmul(x, w)))
                g = tape.gradients(loss, [w])[0]
            manual_mask = (x.data @ w.data) > 0
            manual = x.data.T @ manual_mask.astype(float)
            if not np.allclose(g, manual, atol=1e-10):
                errors.append(seed)

        threads = [threading.Thread(target=work, args=(s,)) for s in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
