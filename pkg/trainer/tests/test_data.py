import numpy as np

from vtr_trainer.data import CLASS_NAMES, make_dataset, make_image


def test_deterministic_per_seed():
    d1 = make_dataset(3, n_train=64, n_test=32)
    d2 = make_dataset(3, n_train=64, n_test=32)
    np.testing.assert_array_equal(d1.train_x, d2.train_x)
    np.testing.assert_array_equal(d1.test_y, d2.test_y)


def test_seed_changes_data():
    d1 = make_dataset(3, n_train=64, n_test=32)
    d2 = make_dataset(4, n_train=64, n_test=32)
    assert not np.array_equal(d1.train_x, d2.train_x)


def test_shapes_and_range():
    d = make_dataset(0, n_train=64, n_test=32)
    assert d.train_x.shape == (64, 32, 32, 1)
    assert d.train_x.dtype == np.float32
    assert d.train_x.min() >= 0.0 and d.train_x.max() <= 1.0


def test_classes_balanced():
    d = make_dataset(1, n_train=128, n_test=64)
    counts = np.bincount(d.train_y, minlength=4)
    assert (counts == 32).all()
    assert len(CLASS_NAMES) == 4


def test_shapes_brighter_than_background():
    rng = np.random.default_rng(0)
    for cls in range(4):
        imgs = np.stack([make_image(cls, rng) for _ in range(16)])
        # bright shape pixels must push the upper quantile well above background
        assert np.quantile(imgs, 0.99) > 0.3
