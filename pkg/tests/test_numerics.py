import math
import pytest
import torch
from torch import nn
from pmad.exceptions import GradientCheckError, InvalidArgumentError
from pmad.numerics import (
    ParamVector, grad_check, l2_normalize_rows, matmul, module_objective, row_softmax, sigmoid, softmax,
)


def test_softmax_is_probability_vector(generator):
    """Test softmax output sums to one and stays non-negative"""
    v = torch.randn(7, generator=generator, dtype=torch.float64) * 50
    p = softmax(v, tau=0.3)
    assert torch.all(p >= 0)
    assert abs(p.sum().item() - 1.0) < 1e-12


def test_softmax_shift_invariance(generator):
    """Test adding a constant leaves softmax unchanged"""
    v = torch.randn(5, generator=generator, dtype=torch.float64)
    assert torch.allclose(softmax(v), softmax(v + 1000.0), atol=1e-12)


def test_softmax_rejects_bad_input():
    """Test empty vectors and non-positive temperatures are rejected"""
    with pytest.raises(InvalidArgumentError):
        softmax(torch.zeros(0))
    with pytest.raises(InvalidArgumentError):
        softmax(torch.ones(3), tau=0.0)


def test_row_softmax_rows_sum_to_one(generator):
    """Test every row of a row softmax is normalized"""
    a = torch.randn(4, 6, generator=generator, dtype=torch.float64)
    assert torch.allclose(row_softmax(a).sum(dim=-1), torch.ones(4, dtype=torch.float64))


def test_l2_normalize_counts_zero_rows():
    """Test zero rows stay zero and are reported as degenerate"""
    a = torch.tensor([[3.0, 4.0], [0.0, 0.0]], dtype=torch.float64)
    result = l2_normalize_rows(a)
    assert torch.allclose(result.rows[0], torch.tensor([0.6, 0.8], dtype=torch.float64))
    assert torch.equal(result.rows[1], torch.zeros(2, dtype=torch.float64))
    assert result.degenerate == 1


def test_matmul_shape_mismatch():
    """Test mismatched inner dimensions raise"""
    with pytest.raises(InvalidArgumentError):
        matmul(torch.ones(2, 3), torch.ones(2, 3))


def test_param_vector_layout_is_contiguous():
    """Test the flat parameter layout covers every parameter once"""
    module = nn.Sequential(nn.Linear(3, 4), nn.Linear(4, 2))
    vector = ParamVector.from_module(module)
    vector.check_layout()
    assert vector.values.numel() == sum(p.numel() for p in module.parameters())
    restored = vector.unflatten()
    assert torch.equal(restored["0.weight"], module[0].weight.detach())


def test_grad_check_quadratic():
    """Test autograd matches central differences on a smooth function"""
    x = torch.tensor([0.3, -1.2, 2.0], dtype=torch.float64)
    error = grad_check(lambda v: (v ** 2).sum() + torch.sin(v).prod(), x)
    assert error <= 1e-6


def test_grad_check_linear_module():
    """Test grad_check through a module via its flat parameter vector"""
    torch.manual_seed(0)
    module = nn.Linear(3, 2).double()
    inputs = torch.randn(5, 3, dtype=torch.float64)
    objective, vector = module_objective(module, lambda out: (out ** 2).mean(), inputs)
    assert grad_check(objective, vector) <= 1e-6


def test_grad_check_reports_failing_coordinate():
    """Test a non-finite evaluation names the coordinate"""
    x = torch.tensor([1.0, 1e-6], dtype=torch.float64)
    with pytest.raises(GradientCheckError) as info:
        grad_check(lambda v: torch.log(v).sum(), x, h=1e-5)
    assert info.value.coordinate == 1


def test_softmax_known_values():
    """Test softmax of (ln 2, 0) is (2/3, 1/3)"""
    p = softmax(torch.tensor([math.log(2.0), 0.0], dtype=torch.float64))
    assert torch.allclose(p, torch.tensor([2 / 3, 1 / 3], dtype=torch.float64), atol=1e-12)


def test_lower_temperature_sharpens(generator):
    """Test a lower temperature strictly raises the largest probability"""
    for _ in range(20):
        v = torch.randn(6, generator=generator, dtype=torch.float64)
        assert softmax(v, tau=0.3).max() > softmax(v, tau=1.0).max()


def test_sigmoid_known_values():
    """Test sigmoid at 0, ln 3 and a saturating input"""
    values = sigmoid(torch.tensor([0.0, math.log(3.0), 1e9], dtype=torch.float64))
    assert values[0].item() == 0.5
    assert abs(values[1].item() - 0.75) < 1e-12
    assert values[2].item() == 1.0


def test_l2_normalize_is_idempotent(generator):
    """Test normalizing twice changes nothing"""
    a = torch.randn(5, 7, generator=generator, dtype=torch.float64)
    once = l2_normalize_rows(a).rows
    twice = l2_normalize_rows(once).rows
    assert torch.allclose(once, twice, atol=1e-10, rtol=0.0)
    assert torch.allclose(torch.linalg.vector_norm(once, dim=-1), torch.ones(5, dtype=torch.float64))


def test_matmul_identity_and_zero(generator):
    """Test multiplying by the identity or zero matrix"""
    a = torch.randn(3, 4, generator=generator, dtype=torch.float64)
    assert torch.equal(matmul(a, torch.eye(4, dtype=torch.float64)), a)
    assert torch.equal(matmul(a, torch.zeros(4, 2, dtype=torch.float64)), torch.zeros(3, 2, dtype=torch.float64))


def test_grad_check_constant_function():
    """Test a constant function has zero gradient in both estimates"""
    x = torch.tensor([0.5, -2.0, 3.0], dtype=torch.float64)
    assert grad_check(lambda v: v.sum() * 0.0 + 4.0, x) <= 1e-10
    assert grad_check(lambda v: torch.tensor(4.0, dtype=torch.float64), x) <= 1e-10
