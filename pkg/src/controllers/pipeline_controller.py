"""
Pipeline controller - Runs the ingest, geocode, k3, eval and correlate stages and records the run
"""
import hashlib
import logging
import os
import platform
from typing import Any, Callable, Dict, List, Optional, TypeVar

import numpy as np
import pandas as pd
import pydantic
import shapely

from controllers import artifact_manager as artifacts
from controllers.artifact_manager import ArtifactManager
from models.building import BuildingAttributeRecord, load_buildings
from models.census import CensusSchema, HouseholdRecord, default_schema, load_schema, parse_census
from models.correlation import CorrelationResult, correlate, histogram_by_region
from models.detection import AnnotatedInstance, DetectionRecord, parse_annotations, parse_detections
from models.errors import InputError, PipelineError, StageError
from models.evaluation import EvalReport, evaluate
from models.footprint import FootprintFeature, parse_footprints
from models.geocoder import GeocodeResult, Geocoder
from models.k3_index import BlockK3, K3Result, compute_k3, load_blocks_k3, region_summary
from models.settings import PipelineConfig
from models.synthetic import SyntheticDataset, SyntheticGenerator
from views import report_writer
from views.console_report import InputCheck, ValidationReport

logger = logging.getLogger('streetk3.pipeline')

VERSION = "1.0.0"

T = TypeVar('T')


class PipelineController:
    """Main pipeline controller"""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.artifacts: Optional[ArtifactManager] = None
        self.counts: Dict[str, int] = {}

    def _stage(self, name: str, action: Callable[[], T]) -> T:
        """Run one stage, tagging user-facing failures with the stage name"""
        logger.info(f"Stage {name} started")
        try:
            result = action()
        except StageError:
            raise
        except PipelineError as e:
            logger.error(f"Stage {name} failed: {e}")
            raise StageError(name, e) from e
        except Exception as e:
            logger.error(f"Stage {name} failed with an internal error: {e!r}")
            raise
        logger.info(f"Stage {name} finished")
        return result

    def _open_artifacts(self, names: List[str]) -> ArtifactManager:
        self.artifacts = ArtifactManager(self.config.out_dir)
        self.artifacts.clear(names)
        return self.artifacts

    def _require_inputs(self, names: List[str]) -> None:
        for name in names:
            path = getattr(self.config, name)
            if path is None:
                raise InputError(f"no {name} file configured", field=name)
            if not os.path.isfile(path):
                raise InputError("input file does not exist", path=path, field=name)

    # Inputs

    def load_schema(self) -> CensusSchema:
        if self.config.schema_path is None:
            return default_schema()
        return load_schema(self.config.schema_path)

    def load_detections(self) -> List[DetectionRecord]:
        return parse_detections(self.config.detections)

    def load_footprints(self) -> List[FootprintFeature]:
        return parse_footprints(self.config.footprints)

    def load_households(self, schema: CensusSchema) -> List[HouseholdRecord]:
        return parse_census(self.config.census, schema)

    def load_annotations(self) -> List[AnnotatedInstance]:
        return parse_annotations(self.config.annotations)

    def validate(self) -> ValidationReport:
        """Parse every configured input without writing anything"""
        report = ValidationReport(problems=self.config.missing_inputs())
        if report.problems:
            for problem in report.problems:
                logger.error(f"Invalid configuration: {problem}")
            return report

        def check(name: str, path: Optional[str], parse: Callable[[], Any]) -> Any:
            try:
                records = parse()
            except InputError as e:
                logger.error(str(e))
                report.checks.append(InputCheck(name, path, error=str(e)))
                return None
            report.checks.append(InputCheck(name, path, records=len(records)))
            return records

        schema = check('schema', self.config.schema_path or '(default)', lambda: self.load_schema())
        check('detections', self.config.detections, self.load_detections)
        check('footprints', self.config.footprints, self.load_footprints)
        if schema is not None:
            check('census', self.config.census, lambda: self.load_households(schema))
        if self.config.annotations is not None:
            check('annotations', self.config.annotations, self.load_annotations)
            if self.config.predictions is not None:
                check('predictions', self.config.predictions, lambda: parse_detections(self.config.predictions))
        return report

    # Stages

    def run_geocode(self, detections: List[DetectionRecord],
                    footprints: List[FootprintFeature]) -> GeocodeResult:
        geocoder = Geocoder(footprints, self.config.max_range_m, self.config.threads)
        result = geocoder.geocode(detections)
        report_writer.write_buildings(self.artifacts.partial_path(artifacts.BUILDINGS), result.buildings)
        report_writer.write_rejects(self.artifacts.partial_path(artifacts.REJECTS), result.rejects)
        self.counts.update({
            'detections': len(detections),
            'footprints': len(footprints),
            'detections_matched': result.n_matched,
            'detections_rejected': len(result.rejects),
            'buildings': len(result.buildings),
        })
        return result

    def run_k3(self, households: List[HouseholdRecord], schema: CensusSchema) -> K3Result:
        result = compute_k3(
            households,
            schema,
            seed=self.config.seed,
            anova_threshold=self.config.anova_threshold,
            threads=self.config.threads,
            allow_large=self.config.allow_large,
            exhaustive_limit=self.config.exhaustive_limit,
        )
        report_writer.write_blocks_k3(self.artifacts.partial_path(artifacts.BLOCKS_K3), result.blocks)
        report_writer.write_json(self.artifacts.partial_path(artifacts.K3_DIAGNOSTICS), result.diagnostics)
        if any(block.region is not None for block in result.blocks):
            report_writer.write_region_summary(
                self.artifacts.partial_path(artifacts.REGION_SUMMARY),
                region_summary(result.blocks, self.config.vulnerable_below))
            report_writer.write_histogram_by_region(
                self.artifacts.partial_path(artifacts.HISTOGRAM_BY_REGION),
                histogram_by_region(result.blocks, self.config.histogram_lo,
                                    self.config.histogram_hi, self.config.histogram_bins))
        self.counts.update({
            'households': len(households),
            'variables': result.matrix.n_cols,
            'variables_dropped': len(result.matrix.dropped),
            'blocks_k3': len(result.blocks),
        })
        return result

    def run_eval(self, predictions: List[DetectionRecord],
                 annotations: List[AnnotatedInstance]) -> EvalReport:
        report = evaluate(predictions, annotations, self.config.iou_threshold,
                          self.config.mask_iou, self.config.threads)
        report_writer.write_json(self.artifacts.partial_path(artifacts.EVAL_REPORT), report.to_dict())
        self.counts.update({
            'eval_predictions': report.n_predictions,
            'eval_annotations': report.n_truths,
            'eval_matched': report.n_matched,
        })
        return report

    def run_correlate(self, buildings: List[BuildingAttributeRecord], blocks: List[BlockK3],
                      footprints: List[FootprintFeature]) -> CorrelationResult:
        result = correlate(buildings, blocks, self.config.histogram_lo,
                           self.config.histogram_hi, self.config.histogram_bins)
        report_writer.write_correlation_matrix(
            self.artifacts.partial_path(artifacts.CORRELATION_MATRIX), result.matrix)
        report_writer.write_class_k3(self.artifacts.partial_path(artifacts.CLASS_K3), result.trends)
        report_writer.write_histogram(self.artifacts.partial_path(artifacts.HISTOGRAM), result.histogram)
        report_writer.write_geojson(
            self.artifacts.partial_path(artifacts.BLOCKS_JOINED),
            report_writer.blocks_joined_features(footprints, blocks, result.profiles))
        self.counts['blocks_joined'] = len(result.table)
        return result

    # Commands

    def cmd_geocode(self) -> List[str]:
        self._require_inputs(['detections', 'footprints'])
        self._open_artifacts(artifacts.STAGE_ARTIFACTS['geocode'])
        detections = self._stage('ingest', self.load_detections)
        footprints = self._stage('ingest', self.load_footprints)
        self._stage('geocode', lambda: self.run_geocode(detections, footprints))
        return self.artifacts.commit()

    def cmd_k3(self) -> List[str]:
        self._require_inputs(['census'])
        self._open_artifacts(artifacts.STAGE_ARTIFACTS['k3'])
        schema = self._stage('ingest', self.load_schema)
        households = self._stage('ingest', lambda: self.load_households(schema))
        self._stage('k3', lambda: self.run_k3(households, schema))
        return self.artifacts.commit()

    def cmd_eval(self) -> List[str]:
        if self.config.annotations is None:
            raise InputError("the eval stage needs an annotations file", field='annotations')
        self._require_inputs(['annotations'])
        self._open_artifacts(artifacts.STAGE_ARTIFACTS['eval'])
        annotations = self._stage('ingest', self.load_annotations)
        predictions = self._stage('ingest', lambda: parse_detections(self.config.prediction_path))
        self._stage('eval', lambda: self.run_eval(predictions, annotations))
        return self.artifacts.commit()

    def cmd_correlate(self) -> List[str]:
        """Correlate the buildings.jsonl and blocks_k3.csv already in the output directory"""
        self._require_inputs(['footprints'])
        manager = ArtifactManager(self.config.out_dir)
        buildings_path = manager.existing(artifacts.BUILDINGS)
        blocks_path = manager.existing(artifacts.BLOCKS_K3)
        self._open_artifacts(artifacts.STAGE_ARTIFACTS['correlate'])
        buildings = self._stage('ingest', lambda: load_buildings(buildings_path))
        blocks = self._stage('ingest', lambda: load_blocks_k3(blocks_path))
        footprints = self._stage('ingest', self.load_footprints)
        self._stage('correlate', lambda: self.run_correlate(buildings, blocks, footprints))
        return self.artifacts.commit()

    def cmd_run(self) -> Dict[str, Any]:
        """Every stage end to end; eval only when annotations are configured"""
        problems = self.config.missing_inputs()
        if problems:
            raise InputError(f"invalid configuration: {'; '.join(problems)}")
        self._open_artifacts(artifacts.ALL_ARTIFACTS)

        schema = self._stage('ingest', self.load_schema)
        detections = self._stage('ingest', self.load_detections)
        footprints = self._stage('ingest', self.load_footprints)
        households = self._stage('ingest', lambda: self.load_households(schema))

        geocoded = self._stage('geocode', lambda: self.run_geocode(detections, footprints))
        k3 = self._stage('k3', lambda: self.run_k3(households, schema))
        if self.config.annotations is not None:
            annotations = self._stage('ingest', self.load_annotations)
            if self.config.predictions is None:
                predictions = detections
            else:
                predictions = self._stage('ingest', lambda: parse_detections(self.config.predictions))
            self._stage('eval', lambda: self.run_eval(predictions, annotations))
        else:
            logger.info("No annotations configured; skipping eval")
        self._stage('correlate', lambda: self.run_correlate(geocoded.buildings, k3.blocks, footprints))

        manifest = self.manifest()
        report_writer.write_json(self.artifacts.partial_path(artifacts.RUN_MANIFEST), manifest)
        self.artifacts.commit()
        return manifest

    def manifest(self) -> Dict[str, Any]:
        """Run record: config hash, seed, versions, input digests and per-stage counts"""
        inputs = {}
        for name in ('detections', 'footprints', 'census', 'schema', 'annotations', 'predictions'):
            path = self.config.schema_path if name == 'schema' else getattr(self.config, name)
            if path is not None:
                inputs[name] = {'file': os.path.basename(path), 'sha256': _file_digest(path)}
        return {
            'config_hash': self.config.config_hash(),
            'seed': self.config.seed,
            'versions': {
                'streetk3': VERSION,
                'python': platform.python_version(),
                'numpy': np.__version__,
                'pandas': pd.__version__,
                'shapely': shapely.__version__,
                'pydantic': pydantic.VERSION,
            },
            'inputs': inputs,
            'counts': dict(sorted(self.counts.items())),
            'artifacts': self.artifacts.pending + [artifacts.RUN_MANIFEST],
        }

    @staticmethod
    def cmd_generate(out_dir: str, generator: SyntheticGenerator) -> SyntheticDataset:
        """Write a synthetic dataset and a pipeline.ini that runs it"""
        dataset = generator.generate()
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            'census': os.path.join(out_dir, 'census.csv'),
            'schema': os.path.join(out_dir, 'schema.yaml'),
            'footprints': os.path.join(out_dir, 'footprints.geojson'),
            'detections': os.path.join(out_dir, 'detections.jsonl'),
            'annotations': os.path.join(out_dir, 'annotations.jsonl'),
        }
        report_writer.write_census(paths['census'], dataset.households, dataset.schema)
        report_writer.write_schema(paths['schema'], dataset.schema)
        report_writer.write_footprints(paths['footprints'], dataset.footprints)
        report_writer.write_detections(paths['detections'], dataset.detections)
        report_writer.write_annotations(paths['annotations'], dataset.annotations)
        config = PipelineConfig(out_dir=os.path.join(out_dir, 'out'), seed=generator.seed, **paths)
        config.save_to_file(os.path.join(out_dir, 'pipeline.ini'))
        logger.info(f"Synthetic dataset written to {out_dir}")
        return dataset


def _file_digest(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()
