"""
Shared fixtures - the hand-built six-footprint, twenty-household scene
"""
import os

import pytest

from models.census import load_schema, parse_census
from models.detection import parse_annotations, parse_detections
from models.footprint import parse_footprints
from models.settings import PipelineConfig

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures')


def fixture_path(name: str) -> str:
    return os.path.abspath(os.path.join(FIXTURES, name))


@pytest.fixture
def schema():
    return load_schema(fixture_path('schema.yaml'))


@pytest.fixture
def households(schema):
    return parse_census(fixture_path('census.csv'), schema)


@pytest.fixture
def footprints():
    return parse_footprints(fixture_path('footprints.geojson'))


@pytest.fixture
def detections():
    return parse_detections(fixture_path('detections.jsonl'))


@pytest.fixture
def annotations():
    return parse_annotations(fixture_path('annotations.jsonl'))


@pytest.fixture
def config(tmp_path):
    return PipelineConfig(
        detections=fixture_path('detections.jsonl'),
        footprints=fixture_path('footprints.geojson'),
        census=fixture_path('census.csv'),
        schema=fixture_path('schema.yaml'),
        annotations=fixture_path('annotations.jsonl'),
        out_dir=str(tmp_path / 'out'),
        seed=7,
        threads=1,
    )
