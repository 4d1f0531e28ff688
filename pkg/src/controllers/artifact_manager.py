"""
Artifact manager - Handles the output directory of a pipeline run
"""
import logging
import os
from typing import Dict, List, Sequence

from models.errors import InputError

logger = logging.getLogger('streetk3.artifacts')

PARTIAL_SUFFIX = '.partial'

BUILDINGS = 'buildings.jsonl'
REJECTS = 'rejects.jsonl'
BLOCKS_K3 = 'blocks_k3.csv'
K3_DIAGNOSTICS = 'k3_diagnostics.json'
REGION_SUMMARY = 'region_summary.csv'
HISTOGRAM_BY_REGION = 'histogram_by_region.csv'
EVAL_REPORT = 'eval_report.json'
CORRELATION_MATRIX = 'correlation_matrix.csv'
CLASS_K3 = 'class_k3.csv'
HISTOGRAM = 'histogram.csv'
BLOCKS_JOINED = 'blocks_joined.geojson'
RUN_MANIFEST = 'run_manifest.json'

STAGE_ARTIFACTS: Dict[str, List[str]] = {
    'geocode': [BUILDINGS, REJECTS],
    'k3': [BLOCKS_K3, K3_DIAGNOSTICS, REGION_SUMMARY, HISTOGRAM_BY_REGION],
    'eval': [EVAL_REPORT],
    'correlate': [CORRELATION_MATRIX, CLASS_K3, HISTOGRAM, BLOCKS_JOINED],
}
ALL_ARTIFACTS = [name for names in STAGE_ARTIFACTS.values() for name in names] + [RUN_MANIFEST]


class ArtifactManager:
    """Writes artifacts under a .partial suffix and renames them once the whole invocation succeeds"""

    def __init__(self, out_dir: str):
        """Initialize the manager, creating the output directory if needed"""
        self.out_dir = out_dir
        self._pending: List[str] = []
        os.makedirs(self.out_dir, exist_ok=True)

    def final_path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def clear(self, names: Sequence[str]) -> List[str]:
        """
        Remove finals and leftover partials from earlier runs

        Args:
            names: Artifact file names this invocation will produce

        Returns:
            Names of the files that were removed
        """
        removed = []
        for name in names:
            for path in (self.final_path(name), self.final_path(name) + PARTIAL_SUFFIX):
                if os.path.isfile(path):
                    os.remove(path)
                    removed.append(os.path.basename(path))
        if removed:
            logger.info(f"Removed {len(removed)} stale artifacts from {self.out_dir}")
        return removed

    def partial_path(self, name: str) -> str:
        """Path to write an artifact to until commit()"""
        path = self.final_path(name) + PARTIAL_SUFFIX
        if name not in self._pending:
            self._pending.append(name)
        return path

    @property
    def pending(self) -> List[str]:
        return list(self._pending)

    def commit(self) -> List[str]:
        """
        Give every pending artifact its final name

        Returns:
            Final paths, in the order the artifacts were written
        """
        committed = []
        for name in self._pending:
            final = self.final_path(name)
            os.replace(final + PARTIAL_SUFFIX, final)
            committed.append(final)
        self._pending = []
        logger.info(f"Committed {len(committed)} artifacts to {self.out_dir}")
        return committed

    def existing(self, name: str) -> str:
        """Final path of an artifact a later stage reads; it must exist"""
        path = self.final_path(name)
        if not os.path.isfile(path):
            raise InputError(f"artifact not found; run the stage that produces {name} first", path=path)
        return path
