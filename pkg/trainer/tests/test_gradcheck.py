from vtr_trainer.gradcheck import (
    gradcheck,
    masked_diagonal_gets_no_gradient,
    zero_image_grads_finite,
)


def test_finite_difference_audit():
    report = gradcheck(seed=0)
    assert len(report) >= 5
    assert all(e.rel_error <= 1e-3 for e in report)


def test_masked_diagonal_zero_gradient():
    assert masked_diagonal_gets_no_gradient(seed=0)


def test_zero_image_gradients_finite():
    assert zero_image_grads_finite(seed=0)
