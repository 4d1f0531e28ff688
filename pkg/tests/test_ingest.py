"""Tests for the input parsers."""
import json

import numpy as np
import pytest

from conftest import fixture_path
from models.building import BuildingAttributeRecord, load_buildings
from models.census import (CensusSchema, Polarity, VariableKind, default_schema, households_to_frame,
                           load_schema, parse_census)
from models.detection import Side, parse_annotations, parse_detections
from models.errors import InputError
from models.footprint import parse_footprints
from models.taxonomy import ATTRIBUTE_NAMES, TREND_ORDER, class_names, is_member


def _detection(**overrides):
    data = {
        'image_id': 'img',
        'lon': -75.5,
        'lat': 10.4,
        'heading_deg': 90.0,
        'side': 'left',
        'bbox': [0, 0, 10, 10],
        'attributes': {name: {'class': class_names(name)[0], 'confidence': 0.9} for name in ATTRIBUTE_NAMES},
    }
    data.update(overrides)
    return data


def _write_jsonl(path, rows):
    path.write_text(''.join(json.dumps(row) + '\n' for row in rows), encoding='utf-8')
    return str(path)


def _footprint(coords, footprint_id='F1', block_id='B1', geometry_type='Polygon'):
    return {
        'type': 'Feature',
        'properties': {'footprint_id': footprint_id, 'block_id': block_id},
        'geometry': {'type': geometry_type, 'coordinates': [coords]},
    }


def _write_collection(path, features):
    path.write_text(json.dumps({'type': 'FeatureCollection', 'features': features}), encoding='utf-8')
    return str(path)


SQUARE = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]


def test_taxonomy_class_sets():
    assert class_names('construction_type') == ['confined', 'unconfined']
    assert len(class_names('material')) == 10
    assert class_names('condition') == ['poor', 'fair', 'good']
    assert is_member('use', 'mixed')
    assert not is_member('use', 'industrial')
    assert not is_member('roof', 'mixed')
    for name, order in TREND_ORDER.items():
        assert all(is_member(name, value) for value in order)


def test_parse_detections_fixture(detections):
    assert len(detections) == 8
    first = detections[0]
    assert first.image_id == 'img001'
    assert first.side is Side.LEFT
    assert first.attributes['material'].value == 'brick_or_concrete_block'
    assert first.attributes['condition'].confidence == pytest.approx(0.9)
    assert first.bbox.area == 40000


def test_detection_heading_out_of_range_names_field_and_line(tmp_path):
    path = _write_jsonl(tmp_path / 'd.jsonl', [_detection(), _detection(heading_deg=400)])
    with pytest.raises(InputError) as excinfo:
        parse_detections(path)
    assert excinfo.value.line == 2
    assert excinfo.value.field == 'camera_heading'
    assert 'line 2' in str(excinfo.value)


def test_detection_heading_360_is_rejected(tmp_path):
    path = _write_jsonl(tmp_path / 'd.jsonl', [_detection(heading_deg=360.0)])
    with pytest.raises(InputError):
        parse_detections(path)


def test_detection_unknown_class_is_rejected(tmp_path):
    bad = _detection()
    bad['attributes']['material'] = {'class': 'glass', 'confidence': 0.5}
    path = _write_jsonl(tmp_path / 'd.jsonl', [bad])
    with pytest.raises(InputError) as excinfo:
        parse_detections(path)
    assert excinfo.value.field == 'attributes.material.class'


def test_detection_confidence_bounds(tmp_path):
    bad = _detection()
    bad['attributes']['use'] = {'class': 'residential', 'confidence': 1.5}
    path = _write_jsonl(tmp_path / 'd.jsonl', [bad])
    with pytest.raises(InputError) as excinfo:
        parse_detections(path)
    assert excinfo.value.field == 'attributes.use.confidence'


def test_detection_degenerate_bbox(tmp_path):
    path = _write_jsonl(tmp_path / 'd.jsonl', [_detection(bbox=[10, 0, 10, 5])])
    with pytest.raises(InputError) as excinfo:
        parse_detections(path)
    assert excinfo.value.field == 'bbox'


def test_detection_malformed_json_reports_line(tmp_path):
    path = tmp_path / 'd.jsonl'
    path.write_text(json.dumps(_detection()) + '\n\n{not json\n', encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_detections(str(path))
    assert excinfo.value.line == 3


def test_detection_blank_lines_are_skipped(tmp_path):
    path = tmp_path / 'd.jsonl'
    path.write_text('\n' + json.dumps(_detection()) + '\n\n', encoding='utf-8')
    assert len(parse_detections(str(path))) == 1


def test_detection_round_trip_through_dict():
    from models.detection import DetectionRecord
    record = DetectionRecord.from_dict(_detection(mask=[[0, 0], [5, 0], [5, 5]]))
    again = DetectionRecord.from_dict(record.to_dict())
    assert again == record


def test_parse_annotations_fixture(annotations):
    assert len(annotations) == 7
    assert annotations[4].labels['condition'] == 'poor'
    assert annotations[6].bbox.x_min == 200


def test_annotation_missing_label(tmp_path):
    row = {'image_id': 'a', 'bbox': [0, 0, 1, 1], 'attributes': {'construction_type': 'confined'}}
    path = _write_jsonl(tmp_path / 'a.jsonl', [row])
    with pytest.raises(InputError) as excinfo:
        parse_annotations(path)
    assert excinfo.value.field == 'attributes.material'


def test_parse_footprints_fixture(footprints):
    assert [fp.footprint_id for fp in footprints] == ['N1', 'N2', 'N3', 'S1', 'S2', 'S3']
    assert [fp.block_id for fp in footprints] == ['B1', 'B1', 'B2', 'B2', 'B3', 'B3']
    assert footprints[0].polygon.is_valid


def test_footprint_unclosed_ring(tmp_path):
    path = _write_collection(tmp_path / 'f.geojson', [_footprint([[0, 0], [1, 0], [1, 1], [0, 1]])])
    with pytest.raises(InputError) as excinfo:
        parse_footprints(path)
    assert 'ring not closed' in str(excinfo.value)


def test_footprint_self_intersecting(tmp_path):
    bowtie = [[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]]
    path = _write_collection(tmp_path / 'f.geojson', [_footprint(bowtie)])
    with pytest.raises(InputError) as excinfo:
        parse_footprints(path)
    assert 'self-intersecting' in str(excinfo.value)


def test_footprint_wrong_geometry_type(tmp_path):
    path = _write_collection(tmp_path / 'f.geojson', [_footprint(SQUARE, geometry_type='LineString')])
    with pytest.raises(InputError) as excinfo:
        parse_footprints(path)
    assert 'expected Polygon' in str(excinfo.value)


def test_footprint_missing_block_id(tmp_path):
    path = _write_collection(tmp_path / 'f.geojson', [_footprint(SQUARE, block_id='')])
    with pytest.raises(InputError) as excinfo:
        parse_footprints(path)
    assert excinfo.value.field == 'features[0].properties.block_id'


def test_footprint_duplicate_id(tmp_path):
    path = _write_collection(tmp_path / 'f.geojson', [_footprint(SQUARE), _footprint(SQUARE)])
    with pytest.raises(InputError) as excinfo:
        parse_footprints(path)
    assert 'duplicate' in str(excinfo.value)


def test_load_schema_fixture(schema):
    assert schema.names == ['has_water', 'has_sewer', 'pct_literate', 'pct_employed', 'crowded']
    assert schema.variables[2].kind is VariableKind.PERCENTAGE
    assert schema.variables[4].polarity is Polarity.HIGHER_IS_WORSE


def test_schema_rejects_unknown_kind(tmp_path):
    path = tmp_path / 'schema.yaml'
    path.write_text("- {name: x, kind: ordinal}\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        load_schema(str(path))
    assert excinfo.value.field == 'variables[0].kind'


def test_schema_rejects_duplicates():
    with pytest.raises(InputError):
        CensusSchema.from_list([{'name': 'a', 'kind': 'binary'}, {'name': 'a', 'kind': 'binary'}])


def test_default_schema_matches_bundled_resource():
    bundled = load_schema(fixture_path('../../resources/schema.yaml'))
    assert bundled == default_schema()
    assert len(bundled) == 26
    assert sum(v.kind is VariableKind.BINARY for v in bundled.variables) == 15


def test_parse_census_fixture(households):
    assert len(households) == 20
    assert households[0].values == (1.0, 1.0, 100.0, 100.0, 0.0)
    assert households[2].values == (0.0, 0.0, 0.0, 0.0, 1.0)
    assert households[19].values[3] is None
    assert households[19].n_observed == 4
    assert {h.region for h in households} == {'east', 'west'}


def test_census_missing_column_names_it(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text("household_id,block_id,has_water,has_sewer,pct_literate,crowded\n"
                    "h1,B1,yes,no,10,no\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert excinfo.value.field == 'pct_employed'


def test_census_bad_binary_reports_line_and_column(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text("household_id,block_id,has_water,has_sewer,pct_literate,pct_employed,crowded\n"
                    "h1,B1,yes,no,10,20,no\n"
                    "h2,B1,maybe,no,10,20,no\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert excinfo.value.line == 3
    assert excinfo.value.field == 'has_water'


def test_census_percentage_out_of_range(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text("household_id,block_id,has_water,has_sewer,pct_literate,pct_employed,crowded\n"
                    "h1,B1,yes,no,101,20,no\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert excinfo.value.field == 'pct_literate'


def test_census_household_with_nothing_observed(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text("household_id,block_id,has_water,has_sewer,pct_literate,pct_employed,crowded\n"
                    "h1,B1,,,,,\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert excinfo.value.line == 2


CENSUS_HEADER = "household_id,block_id,has_water,has_sewer,pct_literate,pct_employed,crowded\n"


def test_census_short_row_is_rejected(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text(CENSUS_HEADER + "h1,B1,yes,no,50,50,no\nh2,B1,yes\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert excinfo.value.line == 3
    assert 'fields' in str(excinfo.value)


def test_census_long_row_is_rejected(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text(CENSUS_HEADER + "h1,B1,yes,no,50,50,no,extra\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert excinfo.value.line == 2


def test_census_line_numbers_count_blank_lines(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text(CENSUS_HEADER + "h1,B1,yes,no,10,20,no\n\nh2,B1,maybe,no,10,20,no\n", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert excinfo.value.line == 4
    assert excinfo.value.field == 'has_water'


def test_census_blank_lines_are_skipped(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text(CENSUS_HEADER + "\nh1,B1,yes,no,10,20,no\n\n\nh2,B1,no,no,,20,yes\n\n", encoding='utf-8')
    records = parse_census(str(path), schema)
    assert [r.household_id for r in records] == ['h1', 'h2']
    assert records[1].values == (0.0, 0.0, None, 20.0, 1.0)


def test_census_empty_file(tmp_path, schema):
    path = tmp_path / 'census.csv'
    path.write_text("", encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        parse_census(str(path), schema)
    assert 'empty' in str(excinfo.value)


def _near(rng, edges, n):
    offsets = rng.choice([-1e-6, -1e-12, 0.0, 1e-12, 1e-6], size=n)
    return [float(rng.choice(edges) + offset) for offset in offsets]


def test_census_percentage_range_near_edges(tmp_path, schema):
    rng = np.random.default_rng(11)
    for i, value in enumerate(_near(rng, [0.0, 100.0], 60)):
        path = tmp_path / f'census_{i}.csv'
        path.write_text(CENSUS_HEADER + f"h1,B1,yes,no,{value!r},20,no\n", encoding='utf-8')
        if 0.0 <= value <= 100.0:
            assert parse_census(str(path), schema)[0].values[2] == value
        else:
            with pytest.raises(InputError) as excinfo:
                parse_census(str(path), schema)
            assert excinfo.value.field == 'pct_literate'


def test_detection_heading_range_near_edges(tmp_path):
    rng = np.random.default_rng(12)
    for i, heading in enumerate(_near(rng, [0.0, 360.0], 60)):
        path = _write_jsonl(tmp_path / f'd_{i}.jsonl', [_detection(heading_deg=heading)])
        if 0.0 <= heading < 360.0:
            assert parse_detections(path)[0].heading_deg == heading
        else:
            with pytest.raises(InputError) as excinfo:
                parse_detections(path)
            assert excinfo.value.field == 'camera_heading'


def test_detection_confidence_range_near_edges(tmp_path):
    rng = np.random.default_rng(13)
    for i, confidence in enumerate(_near(rng, [0.0, 1.0], 60)):
        bad = _detection()
        bad['attributes']['condition'] = {'class': 'good', 'confidence': confidence}
        path = _write_jsonl(tmp_path / f'd_{i}.jsonl', [bad])
        if 0.0 <= confidence <= 1.0:
            assert parse_detections(path)[0].attributes['condition'].confidence == confidence
        else:
            with pytest.raises(InputError) as excinfo:
                parse_detections(path)
            assert excinfo.value.field == 'attributes.condition.confidence'


def test_census_frame_parses_back(tmp_path, households, schema):
    path = tmp_path / 'census.csv'
    households_to_frame(households, schema).to_csv(path, index=False, lineterminator='\n')
    assert parse_census(str(path), schema) == households


def test_building_record_validation():
    classes = {name: class_names(name)[0] for name in ATTRIBUTE_NAMES}
    weights = {name: 1.0 for name in ATTRIBUTE_NAMES}
    with pytest.raises(ValueError):
        BuildingAttributeRecord('F', 'B', 0, classes, weights)
    with pytest.raises(ValueError):
        BuildingAttributeRecord('F', 'B', 1, {**classes, 'use': 'garage'}, weights)


def test_load_buildings_reports_line(tmp_path):
    path = tmp_path / 'buildings.jsonl'
    path.write_text('{"footprint_id": "F"}\n', encoding='utf-8')
    with pytest.raises(InputError) as excinfo:
        load_buildings(str(path))
    assert excinfo.value.line == 1
