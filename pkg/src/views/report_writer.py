"""
Report writer - Serialises pipeline results as CSV, JSON, JSONL and GeoJSON artifacts

All files are UTF-8 with LF line endings. JSON documents are indented; JSONL
lines are compact. Missing CSV cells are written empty.
"""
import json
import math
from typing import Any, Dict, Iterable, List, Optional, Sequence

import pandas as pd
import yaml

from models.building import BuildingAttributeRecord
from models.census import CensusSchema, HouseholdRecord, households_to_frame
from models.correlation import BlockProfile, CorrelationMatrix, Histogram, TrendSummary, profile_columns
from models.detection import AnnotatedInstance, DetectionRecord
from models.footprint import FootprintFeature
from models.k3_index import BlockK3


def write_json(path: str, data: Any) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(data, f, indent=2, ensure_ascii=False, allow_nan=False)
        f.write('\n')


def write_jsonl(path: str, rows: Iterable[Dict[str, Any]]) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, separators=(',', ':'), allow_nan=False))
            f.write('\n')


def write_csv(path: str, rows: Sequence[Dict[str, Any]], columns: List[str]) -> None:
    frame = pd.DataFrame(list(rows), columns=columns)
    write_frame(path, frame)


def write_frame(path: str, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, lineterminator='\n', na_rep='', encoding='utf-8')


def write_buildings(path: str, buildings: Sequence[BuildingAttributeRecord]) -> None:
    write_jsonl(path, (b.to_dict() for b in buildings))


def write_rejects(path: str, rejects: Sequence[Dict[str, Any]]) -> None:
    write_jsonl(path, rejects)


def write_detections(path: str, detections: Sequence[DetectionRecord]) -> None:
    write_jsonl(path, (d.to_dict() for d in detections))


def write_annotations(path: str, annotations: Sequence[AnnotatedInstance]) -> None:
    write_jsonl(path, (a.to_dict() for a in annotations))


def write_blocks_k3(path: str, blocks: Sequence[BlockK3]) -> None:
    columns = ['block_id', 'k3', 'n_households']
    with_region = any(b.region is not None for b in blocks)
    if with_region:
        columns.append('region')
    rows = []
    for block in blocks:
        row = {'block_id': block.block_id, 'k3': block.k3, 'n_households': block.n_households}
        if with_region:
            row['region'] = block.region or ''
        rows.append(row)
    write_csv(path, rows, columns)


def write_correlation_matrix(path: str, matrix: CorrelationMatrix) -> None:
    """Square table with a leading 'column' header; undefined cells empty"""
    rows = []
    for name, values in zip(matrix.columns, matrix.values.tolist()):
        row: Dict[str, Any] = {'column': name}
        for other, value in zip(matrix.columns, values):
            row[other] = None if math.isnan(value) else value
        rows.append(row)
    write_csv(path, rows, ['column'] + list(matrix.columns))


def write_class_k3(path: str, trends: Sequence[TrendSummary]) -> None:
    rows = [row for trend in trends for row in trend.rows()]
    write_csv(path, rows, ['attribute', 'class', 'mean_k3', 'n', 'slope', 'intercept'])


def write_histogram(path: str, hist: Histogram) -> None:
    write_csv(path, hist.rows(), ['bin_lo', 'bin_hi', 'count'])


def write_region_summary(path: str, rows: Sequence[Dict[str, Any]]) -> None:
    write_csv(path, rows, ['region', 'n_blocks', 'n_households', 'mean_k3', 'share_vulnerable'])


def write_histogram_by_region(path: str, rows: Sequence[Dict[str, Any]]) -> None:
    write_csv(path, rows, ['region', 'bin_lo', 'bin_hi', 'count'])


def blocks_joined_features(footprints: Sequence[FootprintFeature], blocks: Sequence[BlockK3],
                           profiles: Sequence[BlockProfile]) -> Dict[str, Any]:
    """FeatureCollection of footprints carrying their block's K3 and class proportions"""
    k3_by_block = {b.block_id: b for b in blocks}
    profile_by_block = {p.block_id: p for p in profiles}
    features = []
    for footprint in footprints:
        block = k3_by_block.get(footprint.block_id)
        profile: Optional[BlockProfile] = profile_by_block.get(footprint.block_id)
        properties: Dict[str, Any] = {
            'k3': block.k3 if block else None,
            'n_households': block.n_households if block else None,
            'n_buildings': profile.n_buildings if profile else 0,
        }
        flat = profile.flat() if profile else {}
        for column in profile_columns():
            properties[column] = flat.get(column)
        features.append(footprint.to_feature(properties))
    return {'type': 'FeatureCollection', 'features': features}


def write_geojson(path: str, collection: Dict[str, Any]) -> None:
    write_json(path, collection)


def write_census(path: str, households: Sequence[HouseholdRecord], schema: CensusSchema) -> None:
    write_frame(path, households_to_frame(list(households), schema))


def write_schema(path: str, schema: CensusSchema) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        yaml.safe_dump({'variables': schema.to_list()}, f, sort_keys=False)


def write_footprints(path: str, footprints: Sequence[FootprintFeature]) -> None:
    write_geojson(path, {'type': 'FeatureCollection', 'features': [fp.to_feature() for fp in footprints]})
