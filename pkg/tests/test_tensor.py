import numpy as np
import pytest
from pytest import approx

from kconc.errors import ContractError, DegenerateInputError, DimensionError
from kconc.losses import sigmoid_ce
from kconc.tensor import (
    Tensor,
    backward,
    concat,
    l2_normalize_segment,
    l2_normalize_segments,
    matmul,
    numerical_gradient,
    sigmoid,
    slice_columns,
    take,
)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(1e-8, float(np.max(np.abs(analytic) + np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_gradient(build_loss, point: np.ndarray) -> float:
    """Relative error between tape and finite-difference gradients of ``build_loss`` at ``point``."""
    leaf = Tensor(point, requires_grad=True)
    backward(build_loss(leaf))
    numeric = numerical_gradient(lambda p: build_loss(Tensor(p)).item(), point)
    return max_relative_error(leaf.grad, numeric)


class TestOps:
    def test_matmul_identity(self):
        out = matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
        assert out.numpy().tolist() == [[5.0, 6.0], [7.0, 8.0]]

    def test_matmul_dot_product(self):
        assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).numpy().tolist() == [[11.0]]

    def test_matmul_is_associative(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n, k, m, p = (int(v) for v in rng.integers(1, 7, size=4))
            a, b, c = rng.standard_normal((n, k)), rng.standard_normal((k, m)), rng.standard_normal((m, p))
            grads = []
            for left_first in (True, False):
                x = Tensor(a, requires_grad=True)
                out = matmul(matmul(x, Tensor(b)), Tensor(c)) if left_first else matmul(x, matmul(Tensor(b), Tensor(c)))
                backward(out.sum())
                grads.append((out.numpy(), x.grad))
            (left, left_grad), (right, right_grad) = grads
            assert left == approx(right, rel=1e-12, abs=1e-12)
            assert left_grad == approx(right_grad, rel=1e-12, abs=1e-12)

    def test_matmul_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError) as exc:
            matmul(Tensor(np.zeros((1, 2))), Tensor(np.zeros((3, 1))))
        assert "(1, 2)" in exc.value.detail
        assert "(3, 1)" in exc.value.detail

    def test_sigmoid_at_zero(self):
        assert sigmoid(Tensor([0.0])).item() == 0.5

    def test_sigmoid_stability(self):
        tiny = sigmoid(Tensor([-700.0])).item()
        assert 0.0 < tiny <= 1e-300
        far = sigmoid(Tensor([-1000.0])).item()
        assert np.isfinite(far)
        assert 0.0 <= far <= 1e-300
        assert sigmoid(Tensor([1000.0])).item() == 1.0

    def test_normalize_three_four(self):
        out = l2_normalize_segment(Tensor([3.0, 4.0]), (0, 2))
        assert out.numpy() == approx([0.6, 0.8])

    def test_normalize_full_jacobian(self):
        x = Tensor([3.0, 4.0], requires_grad=True)
        loss = (l2_normalize_segment(x, (0, 2)) * Tensor([1.0, 0.0])).sum()
        backward(loss)
        assert x.grad == approx([0.128, -0.096])

    def test_normalize_zero_segment_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            l2_normalize_segment(Tensor([0.0, 0.0, 1.0]), (0, 2))

    def test_normalize_leaves_other_columns_alone(self):
        out = l2_normalize_segments(Tensor([[3.0, 4.0, 7.0, 0.0, 2.0]]), [(0, 2), range(3, 5)])
        assert out.numpy()[0] == approx([0.6, 0.8, 7.0, 0.0, 1.0])

    def test_overlapping_segments_rejected(self):
        with pytest.raises(ContractError):
            l2_normalize_segments(Tensor([[1.0, 2.0, 3.0]]), [(0, 2), (1, 3)])

    def test_take_accumulates_repeated_indices(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(take(x, [0, 0, 1]).sum())
        assert x.grad.tolist() == [2.0, 1.0]

    def test_concat_and_slice(self):
        a, b = Tensor([[1.0, 2.0]]), Tensor([[3.0]])
        joined = concat([a, b])
        assert joined.numpy().tolist() == [[1.0, 2.0, 3.0]]
        assert slice_columns(joined, 1, 3).numpy().tolist() == [[2.0, 3.0]]


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        backward(x.sum())
        assert x.grad.tolist() == np.ones((2, 3)).tolist()

    def test_square_sum(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward((x * x).sum())
        assert x.grad.tolist() == [2.0, 4.0, 6.0]

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * x)

    def test_loss_without_grad_rejected(self):
        with pytest.raises(ContractError):
            backward(Tensor([1.0, 2.0]).sum())

    def test_gradients_accumulate_until_zeroed(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward((x * 3.0).sum())
        backward((x * 3.0).sum())
        assert x.grad.tolist() == [6.0, 6.0]
        x.zero_grad()
        assert x.grad is None

    def test_only_leaves_keep_gradients(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        hidden = x * 2.0
        backward(hidden.sum())
        assert hidden.grad is None
        assert not hidden.is_leaf

    def test_shared_subexpression(self):
        # d/dx sum((x + x) * x) = 4x
        x = Tensor([1.0, -2.0], requires_grad=True)
        y = x + x
        backward((y * x).sum())
        assert x.grad.tolist() == [4.0, -8.0]

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(11)
            w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
            x = Tensor(rng.standard_normal((5, 4)))
            backward(sigmoid(matmul(x, w)).sum())
            return w.grad

        assert np.array_equal(run(), run())


class TestFiniteDifferences:
    """Tape gradients against central differences, 100 seeded cases per op."""

    SEEDS = range(100)
    TOLERANCE = 1e-4

    @pytest.mark.parametrize("seed", SEEDS)
    def test_matmul_sigmoid(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((3, 4)))
        c = Tensor(rng.standard_normal((3, 2)))
        loss = lambda w: (sigmoid(matmul(x, w)) * c).sum()
        assert check_gradient(loss, rng.standard_normal((4, 2))) < self.TOLERANCE

    @pytest.mark.parametrize("seed", SEEDS)
    def test_segment_normalize(self, seed):
        rng = np.random.default_rng(seed)
        c = Tensor(rng.standard_normal((2, 7)))
        loss = lambda x: (l2_normalize_segments(x, [(0, 3), (3, 7)]) * c).sum()
        assert check_gradient(loss, rng.standard_normal((2, 7)) + 0.5) < self.TOLERANCE

    @pytest.mark.parametrize("seed", SEEDS)
    def test_scaled_normalize_wrt_gamma(self, seed):
        rng = np.random.default_rng(seed)
        logits = Tensor(rng.standard_normal((2, 5)) + 0.5)
        c = Tensor(rng.standard_normal((2, 5)))
        index = [0, 0, 1, 1, 1]
        loss = lambda gamma: (l2_normalize_segments(logits, [(0, 2), (2, 5)]) * take(gamma, index) * c).sum()
        assert check_gradient(loss, rng.uniform(0.5, 3.0, size=2)) < self.TOLERANCE

    @pytest.mark.parametrize("seed", SEEDS)
    def test_sigmoid_cross_entropy(self, seed):
        rng = np.random.default_rng(seed)
        targets = rng.uniform(0.0, 1.0, size=(4, 3))
        loss = lambda x: sigmoid_ce(x, targets)
        assert check_gradient(loss, rng.standard_normal((4, 3)) * 2.0) < self.TOLERANCE

    @pytest.mark.parametrize("seed", SEEDS)
    def test_concat_slice_mul(self, seed):
        rng = np.random.default_rng(seed)
        other = Tensor(rng.standard_normal((2, 2)))
        c = Tensor(rng.standard_normal((2, 3)))
        loss = lambda x: (slice_columns(concat([x, other * x]), 1, 4) * c).sum()
        assert check_gradient(loss, rng.standard_normal((2, 2))) < self.TOLERANCE
