import numpy as np

from clairvoyant_io.core.policies.packing import first_fit, pack_classes

SIZES = np.array([3.0, 3.0, 5.0, 1.0])


def test_first_fit_fills_gaps_after_the_leading_run():
    taken = first_fit(np.arange(4), SIZES, 7.0)
    assert taken.tolist() == [True, True, False, True]


def test_first_fit_without_gap_filling_stops_at_the_first_miss():
    taken = first_fit(np.arange(4), SIZES, 7.0, fill_gaps=False)
    assert taken.tolist() == [True, True, False, False]


def test_first_fit_with_no_room():
    assert not first_fit(np.arange(4), SIZES, 0.0).any()
    assert not first_fit(np.arange(4), SIZES, 0.5).any()


def test_first_fit_everything_fits():
    assert first_fit(np.arange(4), SIZES, 12.0).all()


def test_first_fit_respects_order():
    taken = first_fit(np.array([2, 0, 1, 3]), SIZES, 6.0)
    # 5 fits first, then nothing but the 1 MB sample
    assert taken.tolist() == [True, False, False, True]


def test_pack_classes():
    ram, ssd = pack_classes(np.arange(4), SIZES, [4.0, 6.0])
    assert ram.tolist() == [0, 3]
    assert ssd.tolist() == [1]


def test_pack_classes_as_leading_runs():
    ram, ssd = pack_classes(np.arange(4), SIZES, [4.0, 6.0], fill_gaps=False)
    assert ram.tolist() == [0]
    assert ssd.tolist() == [1]


def test_pack_classes_never_exceeds_capacity():
    rng = np.random.default_rng(0)
    sizes = rng.uniform(0.1, 2.0, size=200)
    order = rng.permutation(200)
    placed = pack_classes(order, sizes, [10.0, 25.0, 0.0])
    for members, capacity in zip(placed, [10.0, 25.0, 0.0]):
        assert sizes[members].sum() <= capacity + 1e-9
    together = np.concatenate(placed)
    assert len(np.unique(together)) == len(together)
