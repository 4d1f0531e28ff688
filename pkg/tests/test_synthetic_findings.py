"""Planted-signal checks: poorer-looking buildings sit in more vulnerable blocks."""
import pytest

from models.correlation import correlate, pearson
from models.geocoder import Geocoder
from models.k3_index import compute_k3
from models.synthetic import SyntheticGenerator

MARGIN = 0.1


def _findings(generator):
    dataset = generator.generate()
    geocoded = Geocoder(dataset.footprints, threads=2).geocode(dataset.detections)
    k3 = compute_k3(dataset.households, dataset.schema, seed=generator.seed, threads=2)
    return dataset, geocoded, k3, correlate(geocoded.buildings, k3.blocks)


def _n_blocks(dataset):
    return len({h.block_id for h in dataset.households})


def _check(dataset, geocoded, k3, result):
    assert len(geocoded.rejects) == dataset.n_rejects
    assert len(k3.blocks) == _n_blocks(dataset)
    assert all(1.0 <= b.k3 <= 3.0 for b in k3.blocks)

    trends = {t.attribute: t for t in result.trends}
    poor, fair, good = trends['condition'].means
    assert fair - poor >= MARGIN
    assert good - fair >= MARGIN
    assert trends['condition'].slope > 0
    unconfined, confined = trends['construction_type'].means
    assert confined - unconfined >= MARGIN

    k3_values = result.table.column('k3')
    r_good = pearson(result.table.column('condition.good'), k3_values)
    r_poor = pearson(result.table.column('condition.poor'), k3_values)
    assert r_good >= 0.5
    assert r_poor <= -0.5


def test_generator_is_deterministic():
    first = SyntheticGenerator(n_blocks=5, households_per_block=4, buildings_per_block=2, seed=9).generate()
    second = SyntheticGenerator(n_blocks=5, households_per_block=4, buildings_per_block=2, seed=9).generate()
    assert first.households == second.households
    assert first.detections == second.detections
    assert first.truth == second.truth


def test_generator_rejects_bad_parameters():
    with pytest.raises(ValueError):
        SyntheticGenerator(n_blocks=2)
    with pytest.raises(ValueError):
        SyntheticGenerator(strength=1.5)


def test_synthetic_detections_land_on_their_footprints():
    dataset = SyntheticGenerator(n_blocks=12, households_per_block=2, buildings_per_block=4,
                                 reject_rate=0.0, seed=4).generate()
    geocoded = Geocoder(dataset.footprints).geocode(dataset.detections)
    assert geocoded.rejects == []
    assert len(geocoded.buildings) == len(dataset.footprints)


def test_planted_signal_small():
    generator = SyntheticGenerator(n_blocks=40, households_per_block=25, buildings_per_block=10, seed=1)
    _check(*_findings(generator))


@pytest.mark.slow
def test_planted_signal_full_size():
    generator = SyntheticGenerator(seed=0)
    dataset, geocoded, k3, result = _findings(generator)
    assert len(dataset.households) == 5000
    assert len(dataset.footprints) == 1500
    _check(dataset, geocoded, k3, result)
