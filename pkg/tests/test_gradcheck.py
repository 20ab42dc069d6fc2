import numpy as np
import pytest

from podlearn.errors import ContractError
from podlearn.gradcheck import gradient_check
from podlearn.tensor import Tensor, square, tsum


def test_quadratic_is_exact_to_roundoff():
    rng = np.random.default_rng(0)
    for _ in range(5):
        point = Tensor(rng.normal(size=(3, 4)))
        err = gradient_check(lambda t: tsum(square(t)), point, eps=1e-5)
        assert err <= 1e-8


def test_eps_outside_range_rejected():
    point = Tensor([1.0])
    with pytest.raises(ContractError):
        gradient_check(lambda t: tsum(square(t)), point, eps=1e-2)
    with pytest.raises(ContractError):
        gradient_check(lambda t: tsum(square(t)), point, eps=1e-7)


def test_non_scalar_function_rejected():
    with pytest.raises(ContractError):
        gradient_check(lambda t: square(t), Tensor([1.0, 2.0]), eps=1e-5)
