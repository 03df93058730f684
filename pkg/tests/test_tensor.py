"""Tensor core: op values against naive loops, tape gradients against finite differences, Adam."""
import numpy as np
import pytest

from src.errors import NonFiniteError
from src.tensor import ops
from src.tensor.core import Function, Tape, Tensor, backward, precision
from src.tensor.gradcheck import check_gradients
from src.tensor.optim import Adam, AdamState, adam_step


def param(rng, shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def naive_conv2d(x, w, b, stride, padding):
    c_out, c_in, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    ho = (xp.shape[1] - k) // stride + 1
    wo = (xp.shape[2] - k) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                acc = b[o]
                for c in range(c_in):
                    for di in range(k):
                        for dj in range(k):
                            acc += w[o, c, di, dj] * xp[c, i * stride + di, j * stride + dj]
                out[o, i, j] = acc
    return out


def naive_box(x, r):
    c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                win = x[ch, max(0, i - r):min(h, i + r + 1), max(0, j - r):min(w, j + r + 1)]
                out[ch, i, j] = win.mean()
    return out


# ── Tensor basics ────────────────────────────────────────────────────

class TestTensor:
    def test_scalar_has_shape_one(self):
        t = Tensor(2.5)
        assert t.shape == (1,)
        assert t.item() == pytest.approx(2.5)

    def test_empty_tensor_rejected(self):
        with pytest.raises(ValueError):
            Tensor(np.zeros((0, 3)))

    def test_default_dtype_is_float32(self):
        assert Tensor([1.0, 2.0]).data.dtype == np.float32
        with precision(np.float64):
            assert Tensor([1.0, 2.0]).data.dtype == np.float64

    def test_ops_leave_inputs_untouched(self, rng):
        a = Tensor(rng.normal(size=(2, 3)))
        before = a.numpy()
        ops.exp(a) * 3.0 - a
        np.testing.assert_array_equal(a.data, before)

    def test_non_finite_output_is_checked(self):
        with pytest.raises(NonFiniteError):
            ops.exp(Tensor([1000.0]))

    def test_incompatible_shapes_rejected(self):
        with pytest.raises(ValueError, match="incompatible shapes"):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_division_is_guarded(self):
        out = ops.div(Tensor([1.0]), Tensor([0.0]))
        assert np.isfinite(out.data).all()
        assert out.item() == pytest.approx(1e6, rel=1e-3)

    def test_elementwise_dispatch(self):
        a, b = Tensor([0.25]), Tensor([0.5])
        assert ops.elementwise("pow", a, b).item() == pytest.approx(0.5)
        assert ops.elementwise("relu", Tensor([-1.0])).item() == 0.0
        with pytest.raises(ValueError):
            ops.elementwise("relu", a, b)
        with pytest.raises(ValueError):
            ops.elementwise("cosh", a)


# ── Tape ─────────────────────────────────────────────────────────────

class TestTape:
    def test_shared_input_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            y = x * x + x
        backward(y, tape)
        assert x.grad[0] == pytest.approx(7.0)

    def test_repeated_backward_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        for _ in range(2):
            with Tape() as tape:
                y = x * 3.0
            tape.backward(y)
        assert x.grad[0] == pytest.approx(6.0)

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = x * 2.0
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(y)

    def test_nothing_recorded_without_grad(self):
        with Tape() as tape:
            ops.exp(Tensor([1.0])) + 1.0
        assert len(tape) == 0

    def test_broadcast_gradient_reduced_to_operand_shape(self, rng):
        x = param(rng, (3, 4, 5))
        s = param(rng, (3, 1, 1))
        with Tape() as tape:
            loss = ops.sum(x * s)
        tape.backward(loss)
        assert s.grad.shape == (3, 1, 1)
        np.testing.assert_allclose(s.grad[:, 0, 0], x.data.sum(axis=(1, 2)), rtol=1e-5, atol=1e-5)


# ── Gradient checks ──────────────────────────────────────────────────

UNARY_CASES = [
    ("exp", lambda a: ops.exp(a), (-1.0, 1.0)),
    ("log", lambda a: ops.log(a), (0.2, 2.0)),
    ("sigmoid", lambda a: ops.sigmoid(a), (-3.0, 3.0)),
    ("softplus", lambda a: ops.softplus(a), (-3.0, 3.0)),
    ("relu", lambda a: ops.relu(a), (0.1, 1.0)),
    ("abs", lambda a: ops.abs(a), (0.1, 1.0)),
    ("square", lambda a: ops.square(a), (-1.0, 1.0)),
    ("neg", lambda a: ops.neg(a), (-1.0, 1.0)),
    ("clamp", lambda a: ops.clamp(a, 0.0, 1.0), (0.1, 0.9)),
]


class TestGradients:
    @pytest.mark.parametrize("name,fn,bounds", UNARY_CASES, ids=[c[0] for c in UNARY_CASES])
    def test_unary(self, rng, name, fn, bounds):
        with precision(np.float64):
            a = param(rng, (2, 3, 4), *bounds)
            w = Tensor(rng.normal(size=(2, 3, 4)))
            assert check_gradients(lambda: ops.sum(fn(a) * w), {"a": a}) == []

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "pow"])
    def test_binary(self, rng, op):
        with precision(np.float64):
            a = param(rng, (2, 3, 3), 0.3, 1.5)
            b = param(rng, (2, 3, 3), 0.3, 1.5)
            w = Tensor(rng.normal(size=(2, 3, 3)))
            fn = lambda: ops.sum(ops.elementwise(op, a, b) * w)  # noqa: E731
            assert check_gradients(fn, {"a": a, "b": b}) == []

    def test_pow_scalar_exponent(self, rng):
        with precision(np.float64):
            r = param(rng, (3, 4, 4), 0.1, 1.0)
            g = Tensor([0.7], requires_grad=True)
            assert check_gradients(lambda: ops.mean(ops.pow(r, g)), {"r": r, "g": g}) == []

    def test_reductions_and_pools(self, rng):
        with precision(np.float64):
            # distinct values so max/min selections survive the finite-difference step
            x = Tensor(rng.permutation(np.linspace(-1.0, 1.0, 90)).reshape(3, 5, 6), requires_grad=True)
            w = Tensor(rng.normal(size=(1, 5, 6)))

            def fn():
                pooled = ops.global_avg_pool(x) * ops.global_max_pool(x)
                planes = ops.mean(x, axis=0) + ops.amax(x, axis=0) - ops.amin(x, axis=0)
                return ops.sum(pooled) + ops.sum(planes * w)

            assert check_gradients(fn, {"x": x}) == []

    def test_conv2d(self, rng):
        with precision(np.float64):
            x = param(rng, (2, 7, 6))
            w = param(rng, (3, 2, 3, 3))
            b = param(rng, (3,))
            fn = lambda: ops.sum(ops.square(ops.conv2d(x, w, b, stride=1, padding=1)))  # noqa: E731
            assert check_gradients(fn, {"x": x, "w": w, "b": b}) == []

    def test_conv2d_strided(self, rng):
        with precision(np.float64):
            x = param(rng, (2, 7, 7))
            w = param(rng, (2, 2, 3, 3))
            b = param(rng, (2,))
            fn = lambda: ops.sum(ops.square(ops.conv2d(x, w, b, stride=2, padding=1)))  # noqa: E731
            assert check_gradients(fn, {"x": x, "w": w}) == []

    def test_resize_and_box_filter(self, rng):
        with precision(np.float64):
            x = param(rng, (2, 6, 8))
            w = Tensor(rng.normal(size=(2, 9, 5)))
            fn = lambda: ops.sum(ops.resize_bilinear(ops.box_filter(x, 2), 9, 5) * w)  # noqa: E731
            assert check_gradients(fn, {"x": x}) == []

    def test_linear_concat_reshape(self, rng):
        with precision(np.float64):
            v = param(rng, (4,))
            w = param(rng, (2, 4))
            b = param(rng, (2,))

            def fn():
                out = ops.linear(v, w, b)
                stacked = ops.concat([ops.reshape(out, (2, 1, 1)), ops.reshape(out, (2, 1, 1)) * 2.0], axis=0)
                return ops.sum(ops.square(stacked))

            assert check_gradients(fn, {"v": v, "w": w, "b": b}) == []

    def test_wrong_backward_is_detected(self, rng):
        class BadSquare(Function):
            name = "bad_square"

            def forward(self, a):
                self.saved = (a,)
                return a * a

            def backward(self, g):
                (a,) = self.saved
                return (g * a,)

        with precision(np.float64):
            x = param(rng, (4,), 0.5, 1.0)
            assert check_gradients(lambda: ops.sum(BadSquare.apply(x)), {"x": x})


# ── Oracles ──────────────────────────────────────────────────────────

class TestOracles:
    @pytest.mark.parametrize("trial", range(6))
    def test_conv2d_matches_loops(self, trial):
        rng = np.random.default_rng(trial)
        stride = 1 + trial % 2
        k = 3 if trial < 4 else 5
        padding = k // 2
        h = 9 if stride == 2 else 8
        x = rng.normal(size=(2, h, h))
        w = rng.normal(size=(3, 2, k, k))
        b = rng.normal(size=(3,))
        with precision(np.float64):
            out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding)
        np.testing.assert_allclose(out.data, naive_conv2d(x, w, b, stride, padding), atol=1e-9)

    def test_conv2d_rejects_bad_shapes(self, rng):
        x = Tensor(rng.normal(size=(2, 8, 8)))
        with pytest.raises(ValueError, match="C_in"):
            ops.conv2d(x, Tensor(np.ones((1, 3, 3, 3))), Tensor(np.zeros(1)), padding=1)
        with pytest.raises(ValueError, match="odd"):
            ops.conv2d(x, Tensor(np.ones((1, 2, 2, 2))), Tensor(np.zeros(1)))
        with pytest.raises(ValueError, match="stride"):
            ops.conv2d(x, Tensor(np.ones((1, 2, 3, 3))), Tensor(np.zeros(1)), stride=2, padding=1)

    @pytest.mark.parametrize("radius", [1, 2, 4])
    def test_box_filter_matches_loops(self, rng, radius):
        x = rng.uniform(size=(2, 9, 11))
        with precision(np.float64):
            out = ops.box_filter(Tensor(x), radius)
        np.testing.assert_allclose(out.data, naive_box(x, radius), atol=1e-10)

    def test_box_filter_radius_zero_is_identity(self, rng):
        x = Tensor(rng.uniform(size=(1, 4, 4)))
        assert ops.box_filter(x, 0) is x

    def test_resize_preserves_constants(self):
        out = ops.resize_bilinear(Tensor(np.full((3, 8, 12), 0.4)), 5, 7)
        assert out.shape == (3, 5, 7)
        np.testing.assert_allclose(out.data, 0.4, atol=1e-6)

    def test_resize_halving_averages_pairs(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        with precision(np.float64):
            out = ops.resize_bilinear(Tensor(x), 2, 2)
        expected = x.reshape(1, 2, 2, 2, 2).mean(axis=(2, 4))
        np.testing.assert_allclose(out.data, expected)

    def test_resize_upsamples_two_by_two(self):
        x = Tensor(np.array([[[0.0, 0.0], [1.0, 1.0]]]))
        out = ops.resize_bilinear(x, 4, 4).data[0]
        np.testing.assert_allclose(out, np.repeat([[0.0], [0.25], [0.75], [1.0]], 4, axis=1), atol=1e-7)

    @pytest.mark.parametrize("trial", range(5))
    def test_conv2d_is_linear_in_input(self, trial):
        rng = np.random.default_rng(300 + trial)
        w = Tensor(rng.normal(size=(3, 2, 3, 3)))
        zero = Tensor(np.zeros(3))
        x = Tensor(rng.uniform(size=(2, 6, 7)))
        y = Tensor(rng.uniform(size=(2, 6, 7)))
        a, b = rng.uniform(-2, 2, size=2)
        lhs = ops.conv2d(Tensor(a * x.data + b * y.data), w, zero, padding=1).data
        rhs = a * ops.conv2d(x, w, zero, padding=1).data + b * ops.conv2d(y, w, zero, padding=1).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_amax_splits_gradient_between_ties(self):
        x = Tensor(np.array([[[1.0]], [[1.0]], [[0.0]]]), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(ops.amax(x, axis=0))
        tape.backward(loss)
        np.testing.assert_allclose(x.grad[:, 0, 0], [0.5, 0.5, 0.0])


# ── Adam ─────────────────────────────────────────────────────────────

class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = Tensor([1.0, -2.0], requires_grad=True)
        state = AdamState()
        adam_step({"p": p}, {"p": np.array([0.5, -3.0])}, state, lr=0.1)
        np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)
        assert state.t == 1

    def test_missing_gradient_treated_as_zero(self):
        p = Tensor([1.0], requires_grad=True)
        adam_step({"p": p}, {}, AdamState(), lr=0.1)
        assert p.data[0] == pytest.approx(1.0)

    def test_non_finite_gradient_rejected_before_update(self):
        p = Tensor([1.0, 1.0], requires_grad=True)
        q = Tensor([1.0], requires_grad=True)
        state = AdamState()
        with pytest.raises(NonFiniteError):
            adam_step({"p": p, "q": q}, {"p": np.array([1.0, 1.0]), "q": np.array([np.nan])}, state, lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, 1.0])
        assert state.t == 0

    def test_invalid_learning_rate(self):
        p = Tensor([1.0], requires_grad=True)
        with pytest.raises(ValueError):
            adam_step({"p": p}, {"p": np.array([1.0])}, AdamState(), lr=0.0)
        with pytest.raises(ValueError, match="shape"):
            adam_step({"p": p}, {"p": np.array([1.0, 2.0])}, AdamState(), lr=0.1)

    def test_minimizes_quadratic(self):
        p = Tensor([3.0, -4.0], requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        for _ in range(500):
            opt.zero_grad()
            with Tape() as tape:
                loss = ops.sum(ops.square(p))
            tape.backward(loss)
            opt.step()
        assert np.abs(p.data).max() < 0.1
