import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from halograph.diff import (
    OptimizerConfig,
    OptimizerState,
    Tape,
    adam_step,
    add,
    backward,
    clip_by_global_norm,
    concat_cols,
    cosine_lr,
    gather_rows,
    gelu,
    layernorm,
    linear,
    masked_sse,
    max_relative_error,
    mul,
    numerical_gradients,
    scale,
    scatter_sum,
    silu,
    sum_all,
    tape_gradients,
)
from halograph.errors import NonFiniteError

GRADCHECK_TOLERANCE = 1e-4


def _check(testcase, build_loss, params):
    _, analytic = tape_gradients(build_loss, params)
    numeric = numerical_gradients(build_loss, params, step=1e-6)
    testcase.assertLessEqual(max_relative_error(analytic, numeric), GRADCHECK_TOLERANCE)


def _mlp_params(rng, widths):
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"w{i}"] = rng.normal(scale=1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        params[f"b{i}"] = rng.normal(scale=0.1, size=fan_out)
    return params


class TestPrimitiveGradients(unittest.TestCase):
    """Testcase for per-operation adjoints against central differences"""

    def setUp(self) -> None:
        self.rng = np.random.default_rng(0)

    def test_linear(self):
        x = self.rng.normal(size=(5, 4))
        params = {"x": x, "w": self.rng.normal(size=(4, 3)), "b": self.rng.normal(size=3)}
        target = self.rng.normal(size=(5, 3))
        _check(self, lambda tape, p: masked_sse(linear(p["x"], p["w"], p["b"]), target), params)

    def test_silu_and_gelu(self):
        weights = self.rng.normal(size=(6, 3))
        for activation in (silu, gelu):
            params = {"x": self.rng.normal(size=(6, 3))}
            _check(self, lambda tape, p: sum_all(mul(activation(p["x"]), tape.constant(weights))), params)

    def test_layernorm(self):
        params = {"x": self.rng.normal(size=(4, 5)), "gamma": self.rng.normal(size=5), "beta": self.rng.normal(size=5)}
        target = self.rng.normal(size=(4, 5))
        _check(self, lambda tape, p: masked_sse(layernorm(p["x"], p["gamma"], p["beta"]), target), params)

    def test_concat_and_add(self):
        params = {"a": self.rng.normal(size=(3, 2)), "b": self.rng.normal(size=(3, 4))}
        target = self.rng.normal(size=(3, 6))

        def build(tape, p):
            joined = concat_cols([p["a"], p["b"]])
            return masked_sse(add(joined, scale(joined, 0.5)), target)

        _check(self, build, params)

    def test_gather_and_scatter(self):
        idx = np.array([0, 2, 2, 1, 0, 3])
        params = {"x": self.rng.normal(size=(4, 3))}
        target = self.rng.normal(size=(5, 3))

        def build(tape, p):
            return masked_sse(scatter_sum(gather_rows(p["x"], idx), idx[::-1] % 5, 5), target)

        _check(self, build, params)

    def test_masked_sse(self):
        mask = np.array([True, False, True, True])
        params = {"x": self.rng.normal(size=(4, 2))}
        target = self.rng.normal(size=(4, 2))
        _check(self, lambda tape, p: masked_sse(p["x"], target, mask), params)


class TestComposedGradients(unittest.TestCase):
    """Testcase for gradients through composed networks"""

    def test_two_layer_mlp(self):
        """A random 2-layer MLP with SSE loss agrees with finite differences"""
        rng = np.random.default_rng(1)
        params = _mlp_params(rng, (4, 8, 2))
        x, target = rng.normal(size=(10, 4)), rng.normal(size=(10, 2))

        def build(tape, p):
            hidden = silu(linear(tape.constant(x), p["w0"], p["b0"]))
            return masked_sse(linear(hidden, p["w1"], p["b1"]), target)

        _check(self, build, params)

    def test_message_passing_block(self):
        """Edge update, scatter aggregation, node update and residual"""
        rng = np.random.default_rng(2)
        senders = np.array([0, 1, 2, 3, 1, 2])
        receivers = np.array([1, 0, 1, 2, 3, 3])
        h, e = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
        params = {**_mlp_params(rng, (9, 3)), "node_w": rng.normal(size=(6, 3)), "gamma": np.ones(3)}
        target = rng.normal(size=(4, 3))

        def build(tape, p):
            nodes, edges = tape.constant(h), tape.constant(e)
            joined = concat_cols([gather_rows(nodes, senders), gather_rows(nodes, receivers), edges])
            messages = layernorm(silu(linear(joined, p["w0"], p["b0"])), p["gamma"])
            aggregated = scatter_sum(messages, receivers, 4)
            update = linear(concat_cols([nodes, aggregated]), p["node_w"])
            return masked_sse(add(nodes, update), target, np.array([True, True, False, True]))

        _check(self, build, params)

    @given(seed=st.integers(min_value=0, max_value=10_000), width=st.integers(min_value=1, max_value=5))
    @settings(max_examples=10, deadline=None)
    def test_random_deep_stack(self, seed, width):
        """Random three-layer GELU stacks agree with finite differences"""
        rng = np.random.default_rng(seed)
        params = _mlp_params(rng, (3, width, width, 1))
        x, target = rng.normal(size=(4, 3)), rng.normal(size=(4, 1))

        def build(tape, p):
            out = tape.constant(x)
            for i in range(3):
                out = linear(out, p[f"w{i}"], p[f"b{i}"])
                if i < 2:
                    out = gelu(out)
            return masked_sse(out, target)

        _check(self, build, params)


class TestBackward(unittest.TestCase):
    """Testcase for the tape and backward pass"""

    def test_square(self):
        """x * x at 3 has gradient 6"""
        tape = Tape()
        x = tape.parameter("x", [[3.0]])
        grads = backward(tape, mul(x, x))
        self.assertEqual(grads["x"][0, 0], 6.0)

    def test_unused_parameter(self):
        """A parameter the loss does not use has an exactly zero gradient"""
        tape = Tape()
        x = tape.parameter("x", [[2.0, 1.0]])
        tape.parameter("p", [[5.0]])
        grads = backward(tape, sum_all(x))
        np.testing.assert_array_equal(grads["p"], [[0.0]])
        np.testing.assert_array_equal(grads["x"], [[1.0, 1.0]])

    def test_silu_at_zero(self):
        """silu(0) = 0 with slope 0.5"""
        tape = Tape()
        x = tape.parameter("x", [[0.0]])
        out = silu(x)
        self.assertEqual(out.value[0, 0], 0.0)
        self.assertEqual(backward(tape, out)["x"][0, 0], 0.5)

    def test_scatter_example(self):
        """Two rows scattered into one are summed and both receive the adjoint"""
        tape = Tape()
        x = tape.parameter("x", [[1.0, 2.0], [3.0, 4.0]])
        out = scatter_sum(x, np.array([0, 0]), 1)
        np.testing.assert_array_equal(out.value, [[4.0, 6.0]])
        np.testing.assert_array_equal(backward(tape, sum_all(out))["x"], np.ones((2, 2)))

    def test_linearity(self):
        """The adjoint of a f + b g is a adj(f) + b adj(g)"""
        rng = np.random.default_rng(3)
        params = {"x": rng.normal(size=(3, 2))}
        target = rng.normal(size=(3, 2))

        def f(tape, p):
            return masked_sse(silu(p["x"]), target)

        def g(tape, p):
            return sum_all(gelu(p["x"]))

        def combined(tape, p):
            return add(scale(f(tape, p), 2.5), scale(g(tape, p), -0.75))

        _, grad_f = tape_gradients(f, params)
        _, grad_g = tape_gradients(g, params)
        _, grad_c = tape_gradients(combined, params)
        np.testing.assert_allclose(grad_c["x"], 2.5 * grad_f["x"] - 0.75 * grad_g["x"], rtol=1e-12, atol=1e-12)

    def test_deterministic(self):
        """Identical tapes give bitwise identical gradients"""
        rng = np.random.default_rng(4)
        params = _mlp_params(rng, (3, 4))
        x = rng.normal(size=(7, 3))

        def build(tape, p):
            return sum_all(silu(linear(tape.constant(x), p["w0"], p["b0"])))

        first, second = tape_gradients(build, params)[1], tape_gradients(build, params)[1]
        for name in first:
            self.assertEqual(first[name].tobytes(), second[name].tobytes())

    def test_non_scalar_loss(self):
        tape = Tape()
        x = tape.parameter("x", np.ones((2, 2)))
        with self.assertRaises(ValueError):
            backward(tape, x)

    def test_duplicate_parameter(self):
        tape = Tape()
        tape.parameter("w", [[1.0]])
        with self.assertRaises(ValueError):
            tape.parameter("w", [[2.0]])

    def test_shape_errors_name_the_op(self):
        """Incompatible shapes raise an error naming the operation and shapes"""
        tape = Tape()
        a, b = tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 4)))
        with self.assertRaises(ValueError) as context:
            add(a, b)
        self.assertIn("add", str(context.exception))
        self.assertIn("(2, 3)", str(context.exception))
        with self.assertRaises(ValueError) as context:
            linear(a, tape.constant(np.ones((4, 1))))
        self.assertIn("linear", str(context.exception))
        with self.assertRaises(ValueError):
            scatter_sum(a, np.array([0, 5]), 2)
        with self.assertRaises(ValueError):
            gather_rows(a, np.array([2]))

    def test_f32_tape(self):
        """A single precision tape keeps float32 values and gradients"""
        tape = Tape(np.float32)
        x = tape.parameter("x", np.ones((2, 2)))
        grads = backward(tape, sum_all(silu(x)))
        self.assertEqual(grads["x"].dtype, np.float32)


class TestOptimizer(unittest.TestCase):
    """Testcase for Adam with cosine annealing and clipping"""

    def test_defaults(self):
        config = OptimizerConfig()
        self.assertEqual((config.lr_max, config.lr_min, config.clip_threshold), (1e-3, 1e-6, 32.0))
        self.assertEqual((config.beta1, config.beta2, config.eps), (0.9, 0.999, 1e-8))

    def test_cosine_endpoints(self):
        """t=0 gives lr_max, t=T gives lr_min and the midpoint is the average"""
        config = OptimizerConfig(total_steps=100)
        self.assertEqual(cosine_lr(0, config), config.lr_max)
        self.assertAlmostEqual(cosine_lr(100, config), config.lr_min, delta=1e-18)
        self.assertAlmostEqual(cosine_lr(50, config), 0.5 * (config.lr_max + config.lr_min), delta=1e-15)

    def test_clipping_halves_norm_64(self):
        """A global norm of 64 with threshold 32 scales every gradient by 0.5"""
        grads = {"a": np.full(3, 32.0), "b": np.array([[32.0]])}
        clipped, norm = clip_by_global_norm(grads, 32.0)
        self.assertAlmostEqual(norm, 64.0, places=9)
        np.testing.assert_allclose(clipped["a"], grads["a"] * 0.5)
        np.testing.assert_allclose(clipped["b"], grads["b"] * 0.5)

    def test_small_norm_is_untouched(self):
        grads = {"a": np.array([3.0, 4.0])}
        clipped, norm = clip_by_global_norm(grads, 32.0)
        self.assertEqual(norm, 5.0)
        np.testing.assert_array_equal(clipped["a"], grads["a"])

    def test_first_step_moves_by_learning_rate(self):
        """After bias correction the first Adam step is lr times the gradient sign"""
        params = {"w": np.array([1.0, -2.0, 0.5])}
        state = OptimizerState.create(params, OptimizerConfig(total_steps=10))
        updated = adam_step(params, {"w": np.array([0.3, -5.0, 1e3])}, state)
        np.testing.assert_allclose(updated["w"], params["w"] - 1e-3 * np.array([1.0, -1.0, 1.0]), rtol=1e-6)
        self.assertEqual(state.step, 1)
        self.assertEqual(state.first_moment["w"].shape, (3,))

    def test_converges_on_quadratic(self):
        """Minimizing |w - 3|^2 gets close to 3"""
        config = OptimizerConfig(lr_max=0.1, lr_min=1e-3, total_steps=500)
        params = {"w": np.array([0.0])}
        state = OptimizerState.create(params, config)
        for _ in range(config.total_steps):
            params = adam_step(params, {"w": 2.0 * (params["w"] - 3.0)}, state)
        self.assertAlmostEqual(params["w"][0], 3.0, delta=5e-2)

    def test_past_schedule(self):
        """Stepping past the schedule fails"""
        params = {"w": np.zeros(2)}
        state = OptimizerState.create(params, OptimizerConfig(total_steps=1))
        params = adam_step(params, {"w": np.ones(2)}, state)
        with self.assertRaises(ValueError):
            adam_step(params, {"w": np.ones(2)}, state)

    def test_non_finite_gradient(self):
        """NaN gradients fail fast and leave the state untouched"""
        params = {"w": np.zeros(2)}
        state = OptimizerState.create(params, OptimizerConfig())
        with self.assertRaises(NonFiniteError):
            adam_step(params, {"w": np.array([1.0, np.nan])}, state)
        self.assertEqual(state.step, 0)
