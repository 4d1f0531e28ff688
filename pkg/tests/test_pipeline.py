"""End-to-end tests of the command-line pipeline on the fixture scene."""
import json
import logging
import os

import pandas as pd
import pytest

from conftest import fixture_path
from controllers import artifact_manager as artifacts
from controllers.pipeline_controller import PipelineController
from main import main
from models.settings import PipelineConfig

INI = fixture_path('pipeline.ini')


def _run(out_dir, *extra):
    return main(['run', '--config', INI, '--out-dir', str(out_dir), *extra])


def _read_bytes(out_dir):
    return {name: (out_dir / name).read_bytes() for name in sorted(os.listdir(out_dir))}


def test_run_writes_every_artifact(tmp_path):
    out = tmp_path / 'out'
    assert _run(out) == 0
    assert sorted(os.listdir(out)) == sorted(artifacts.ALL_ARTIFACTS)

    manifest = json.loads((out / artifacts.RUN_MANIFEST).read_text(encoding='utf-8'))
    counts = manifest['counts']
    assert counts['detections'] == 8
    assert counts['detections_matched'] + counts['detections_rejected'] == counts['detections']
    assert counts['detections_rejected'] == 1
    assert counts['buildings'] == 6
    assert counts['households'] == 20
    assert counts['blocks_k3'] == 3
    assert counts['eval_matched'] == 6
    assert counts['blocks_joined'] == 3
    assert list(counts) == sorted(counts)
    assert manifest['seed'] == 7
    assert set(manifest['inputs']) == {'detections', 'footprints', 'census', 'schema', 'annotations'}
    assert manifest['inputs']['census']['file'] == 'census.csv'
    assert len(manifest['inputs']['census']['sha256']) == 64
    assert sorted(manifest['artifacts']) == sorted(artifacts.ALL_ARTIFACTS)


def test_run_artifact_contents(tmp_path):
    out = tmp_path / 'out'
    assert _run(out) == 0

    blocks = pd.read_csv(out / artifacts.BLOCKS_K3)
    assert blocks['block_id'].tolist() == ['B1', 'B2', 'B3']
    assert blocks['k3'].tolist() == [3.0, 2.0, 1.0]
    assert blocks['n_households'].tolist() == [7, 7, 6]
    assert blocks['region'].tolist() == ['east', 'east', 'west']

    buildings = [json.loads(line) for line in (out / artifacts.BUILDINGS).read_text(encoding='utf-8').splitlines()]
    assert [b['footprint_id'] for b in buildings] == ['N1', 'N2', 'N3', 'S1', 'S2', 'S3']
    rejects = (out / artifacts.REJECTS).read_text(encoding='utf-8').splitlines()
    assert len(rejects) == 1 and json.loads(rejects[0])['image_id'] == 'img008'

    report = json.loads((out / artifacts.EVAL_REPORT).read_text(encoding='utf-8'))
    assert report['detection']['precision'] == 0.75

    matrix = pd.read_csv(out / artifacts.CORRELATION_MATRIX, index_col='column')
    assert matrix.loc['k3', 'construction_type.confined'] == pytest.approx(1.0)
    assert pd.isna(matrix.loc['k3', 'material.adobe'])
    assert matrix.loc['k3', 'k3'] == 1.0

    histogram = pd.read_csv(out / artifacts.HISTOGRAM)
    assert histogram['count'].tolist() == [1, 0, 0, 0, 1, 0, 0, 1]

    regions = pd.read_csv(out / artifacts.REGION_SUMMARY)
    assert regions['region'].tolist() == ['east', 'west']
    assert regions['n_households'].tolist() == [14, 6]

    joined = json.loads((out / artifacts.BLOCKS_JOINED).read_text(encoding='utf-8'))
    assert len(joined['features']) == 6
    assert joined['features'][0]['properties']['k3'] == 3.0
    assert joined['features'][0]['properties']['construction_type.confined'] == 1.0

    diagnostics = json.loads((out / artifacts.K3_DIAGNOSTICS).read_text(encoding='utf-8'))
    assert [c['size'] for c in diagnostics['clusters']] == [6, 7, 7]

    text = (out / artifacts.HISTOGRAM).read_bytes()
    assert b'\r\n' not in text


def test_run_is_byte_identical_across_runs_and_threads(tmp_path):
    first, second, pooled = tmp_path / 'a', tmp_path / 'b', tmp_path / 'c'
    assert _run(first, '--threads', '1') == 0
    assert _run(second, '--threads', '1') == 0
    assert _run(pooled, '--threads', '4') == 0
    assert _read_bytes(first) == _read_bytes(second)
    assert _read_bytes(first) == _read_bytes(pooled)


def test_run_without_annotations_skips_eval(tmp_path):
    config = PipelineConfig(
        detections=fixture_path('detections.jsonl'),
        footprints=fixture_path('footprints.geojson'),
        census=fixture_path('census.csv'),
        schema=fixture_path('schema.yaml'),
        out_dir=str(tmp_path / 'out'),
        threads=1,
    )
    manifest = PipelineController(config).cmd_run()
    assert not (tmp_path / 'out' / artifacts.EVAL_REPORT).exists()
    assert artifacts.EVAL_REPORT not in manifest['artifacts']
    assert 'eval_matched' not in manifest['counts']


def test_staged_commands_match_full_run(tmp_path):
    full, staged = tmp_path / 'full', tmp_path / 'staged'
    assert _run(full) == 0
    for command in ('geocode', 'k3', 'eval', 'correlate'):
        assert main([command, '--config', INI, '--out-dir', str(staged)]) == 0
    for name in (artifacts.CORRELATION_MATRIX, artifacts.CLASS_K3, artifacts.HISTOGRAM,
                 artifacts.BLOCKS_JOINED, artifacts.BLOCKS_K3, artifacts.EVAL_REPORT):
        assert (staged / name).read_bytes() == (full / name).read_bytes()
    assert not (staged / artifacts.RUN_MANIFEST).exists()


def test_correlate_needs_earlier_artifacts(tmp_path, capsys):
    assert main(['correlate', '--config', INI, '--out-dir', str(tmp_path / 'empty')]) == 1
    assert 'buildings.jsonl' in capsys.readouterr().err


def test_validate_fixture(tmp_path, capsys):
    assert main(['validate', '--config', INI, '--out-dir', str(tmp_path / 'out')]) == 0
    output = capsys.readouterr().out
    assert 'all inputs valid' in output
    assert not (tmp_path / 'out').exists()


def test_validate_names_missing_column(tmp_path, capsys):
    census = pd.read_csv(fixture_path('census.csv'), dtype=str, keep_default_na=False)
    bad = tmp_path / 'census.csv'
    census.drop(columns=['pct_employed']).to_csv(bad, index=False, lineterminator='\n')
    assert main(['validate', '--config', INI, '--census', str(bad)]) == 1
    assert 'pct_employed' in capsys.readouterr().out


def test_validate_absent_file(tmp_path, capsys):
    assert main(['validate', '--config', INI, '--census', str(tmp_path / 'absent.csv')]) == 1
    assert 'does not exist' in capsys.readouterr().out


def test_run_with_bad_input_exits_one(tmp_path, capsys):
    bad = tmp_path / 'detections.jsonl'
    lines = open(fixture_path('detections.jsonl'), encoding='utf-8').read().splitlines()
    lines[1] = lines[1].replace('"heading_deg":90.0', '"heading_deg":400.0')
    bad.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    assert _run(tmp_path / 'out', '--detections', str(bad)) == 1
    err = capsys.readouterr().err
    assert 'line 2' in err
    assert 'camera_heading' in err


def test_failed_stage_leaves_no_final_artifacts(tmp_path):
    # hh01 moves B1 into two regions, which the k3 stage rejects after geocode has written
    census = open(fixture_path('census.csv'), encoding='utf-8').read().replace('hh01,B1,east', 'hh01,B1,west')
    bad = tmp_path / 'census.csv'
    bad.write_text(census, encoding='utf-8')
    out = tmp_path / 'out'
    out.mkdir()
    (out / artifacts.BUILDINGS).write_text('stale\n', encoding='utf-8')

    assert _run(out, '--census', str(bad)) == 1
    assert not (out / artifacts.BUILDINGS).exists()
    assert (out / (artifacts.BUILDINGS + artifacts.PARTIAL_SUFFIX)).exists()
    assert not (out / artifacts.RUN_MANIFEST).exists()


def test_internal_error_exits_two(tmp_path, monkeypatch):
    def explode(self):
        raise RuntimeError("boom")

    monkeypatch.setattr(PipelineController, 'cmd_run', explode)
    assert _run(tmp_path / 'out') == 2


def test_internal_error_names_the_stage(tmp_path, monkeypatch, caplog):
    def explode(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr('controllers.pipeline_controller.compute_k3', explode)
    with caplog.at_level(logging.ERROR, logger='streetk3.pipeline'):
        assert _run(tmp_path / 'out') == 2
    assert "Stage k3 failed with an internal error: RuntimeError('boom')" in caplog.text


def test_eval_without_annotations_exits_one(tmp_path, capsys):
    ini = tmp_path / 'pipeline.ini'
    ini.write_text(f"[inputs]\ndetections = {fixture_path('detections.jsonl')}\n", encoding='utf-8')
    assert main(['eval', '--config', str(ini), '--out-dir', str(tmp_path / 'out')]) == 1
    assert 'annotations' in capsys.readouterr().err


def test_generate_then_run(tmp_path):
    target = tmp_path / 'synthetic'
    assert main(['generate', str(target), '--blocks', '6', '--households-per-block', '8',
                 '--buildings-per-block', '3', '--seed', '3']) == 0
    for name in ('census.csv', 'schema.yaml', 'footprints.geojson', 'detections.jsonl',
                 'annotations.jsonl', 'pipeline.ini'):
        assert (target / name).is_file()

    assert main(['run', '--config', str(target / 'pipeline.ini'), '--threads', '1']) == 0
    manifest = json.loads((target / 'out' / artifacts.RUN_MANIFEST).read_text(encoding='utf-8'))
    assert manifest['seed'] == 3
    assert manifest['counts']['households'] == 48
    assert manifest['counts']['footprints'] == 18
    assert manifest['counts']['blocks_k3'] == 6


def test_generate_rejects_bad_parameters(tmp_path):
    assert main(['generate', str(tmp_path / 'x'), '--blocks', '2']) == 1
