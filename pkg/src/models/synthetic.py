"""
Synthetic data - Planted-signal datasets linking building condition to household welfare

Each block gets a latent welfare in [0, 1]. Households are noisy copies of it,
rendered through the census schema; buildings take condition and construction
classes that follow welfare with probability `strength`. A full dataset
(census, footprints, detections, annotations) is produced deterministically
from the seed.
"""
from dataclasses import dataclass, field
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.census import CensusSchema, HouseholdRecord, Polarity, VariableKind, default_schema
from models.detection import AnnotatedInstance, AttributePrediction, BoundingBox, DetectionRecord, Side
from models.footprint import FootprintFeature
from models.geocoder import unproject_local
from models.taxonomy import ATTRIBUTE_NAMES, class_names

logger = logging.getLogger('streetk3.synthetic')

ORIGIN = (-75.5, 10.4)
BUILDING_WIDTH_M = 10.0
BUILDING_DEPTH_M = 10.0
BUILDING_GAP_M = 4.0
BLOCK_GAP_M = 20.0
STREET_SPACING_M = 40.0
SETBACK_M = 8.0
BLOCKS_PER_STREET = 10
IMAGE_SIZE = (640, 480)

CONFINED_MATERIALS = ('brick_or_concrete_block', 'plaster', 'mix_other_unclear')
UNCONFINED_MATERIALS = ('wood_crude_plank', 'corrugated_metal', 'wood_polished', 'adobe', 'plant_material')


@dataclass
class SyntheticDataset:
    """A generated scene together with the truth it was planted with"""
    schema: CensusSchema
    households: List[HouseholdRecord]
    footprints: List[FootprintFeature]
    detections: List[DetectionRecord]
    annotations: List[AnnotatedInstance]
    welfare: Dict[str, float] = field(default_factory=dict)
    truth: Dict[str, Dict[str, str]] = field(default_factory=dict)
    n_rejects: int = 0


class SyntheticGenerator:
    """Builds planted-signal scenes; identical arguments give identical datasets"""

    def __init__(self, n_blocks: int = 100, households_per_block: int = 50,
                 buildings_per_block: int = 15, strength: float = 0.8,
                 label_noise: float = 0.1, missing_rate: float = 0.02,
                 reject_rate: float = 0.01, seed: int = 0,
                 schema: Optional[CensusSchema] = None):
        if n_blocks < 3:
            raise ValueError("at least 3 blocks are needed")
        if households_per_block < 1 or buildings_per_block < 1:
            raise ValueError("blocks need at least one household and one building")
        for name, value in (('strength', strength), ('label_noise', label_noise),
                            ('missing_rate', missing_rate), ('reject_rate', reject_rate)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        self.n_blocks = n_blocks
        self.households_per_block = households_per_block
        self.buildings_per_block = buildings_per_block
        self.strength = strength
        self.label_noise = label_noise
        self.missing_rate = missing_rate
        self.reject_rate = reject_rate
        self.seed = seed
        self.schema = schema or default_schema()

    def generate(self) -> SyntheticDataset:
        rng = np.random.default_rng(self.seed)
        block_ids = [f"blk{i:04d}" for i in range(self.n_blocks)]
        welfare = {block_id: float(w) for block_id, w in zip(block_ids, rng.uniform(0.0, 1.0, self.n_blocks))}

        households = self._households(rng, block_ids, welfare)
        footprints, cameras = self._footprints(block_ids)
        truth = {fp.footprint_id: self._true_classes(rng, welfare[fp.block_id]) for fp in footprints}
        detections, annotations = self._detections(rng, footprints, cameras, truth)
        n_rejects = self._add_rejects(rng, detections)

        logger.info(f"Generated {len(households)} households, {len(footprints)} footprints, "
                    f"{len(detections)} detections ({n_rejects} off-map) with strength {self.strength:g}")
        return SyntheticDataset(
            schema=self.schema,
            households=households,
            footprints=footprints,
            detections=detections,
            annotations=annotations,
            welfare=welfare,
            truth=truth,
            n_rejects=n_rejects,
        )

    def _households(self, rng: np.random.Generator, block_ids: List[str],
                    welfare: Dict[str, float]) -> List[HouseholdRecord]:
        s = self.strength
        records = []
        for b, block_id in enumerate(block_ids):
            region = 'north' if (b // BLOCKS_PER_STREET) % 2 == 0 else 'south'
            for k in range(self.households_per_block):
                h = float(np.clip(welfare[block_id] + rng.normal(0.0, 0.1), 0.0, 1.0))
                values: List[Optional[float]] = []
                for variable in self.schema.variables:
                    level = 1.0 - h if variable.polarity is Polarity.HIGHER_IS_WORSE else h
                    if variable.kind is VariableKind.BINARY:
                        value = 1.0 if rng.uniform() < s * level + (1.0 - s) * 0.5 else 0.0
                    else:
                        value = round(100.0 * float(np.clip(s * level + (1.0 - s) * rng.uniform(), 0.0, 1.0)), 1)
                    values.append(None if rng.uniform() < self.missing_rate else value)
                if all(v is None for v in values):
                    values[0] = 1.0
                records.append(HouseholdRecord(f"hh{b:04d}_{k:03d}", block_id, tuple(values), region))
        return records

    def _footprints(self, block_ids: List[str]) -> Tuple[List[FootprintFeature], List[Tuple[float, float]]]:
        """Rows of square buildings north of east-west streets; one camera point per building"""
        block_width = self.buildings_per_block * (BUILDING_WIDTH_M + BUILDING_GAP_M) + BLOCK_GAP_M
        footprints, cameras = [], []
        for b, block_id in enumerate(block_ids):
            street_y = (b // BLOCKS_PER_STREET) * STREET_SPACING_M
            x0 = (b % BLOCKS_PER_STREET) * block_width
            for k in range(self.buildings_per_block):
                left = x0 + k * (BUILDING_WIDTH_M + BUILDING_GAP_M)
                bottom = street_y + SETBACK_M
                corners = [(left, bottom), (left + BUILDING_WIDTH_M, bottom),
                           (left + BUILDING_WIDTH_M, bottom + BUILDING_DEPTH_M),
                           (left, bottom + BUILDING_DEPTH_M), (left, bottom)]
                ring = tuple((float(lon), float(lat)) for lon, lat in unproject_local(corners, ORIGIN))
                footprints.append(FootprintFeature(f"{block_id}_b{k:02d}", block_id, ring))
                cameras.append((left + BUILDING_WIDTH_M / 2.0, street_y))
        return footprints, cameras

    def _true_classes(self, rng: np.random.Generator, w: float) -> Dict[str, str]:
        if rng.uniform() < self.strength:
            condition = 'poor' if w < 1.0 / 3.0 else ('fair' if w < 2.0 / 3.0 else 'good')
        else:
            condition = str(rng.choice(class_names('condition')))
        if rng.uniform() < self.strength:
            construction = 'confined' if w > 0.5 else 'unconfined'
        else:
            construction = str(rng.choice(class_names('construction_type')))
        materials = CONFINED_MATERIALS if construction == 'confined' else UNCONFINED_MATERIALS
        use = 'residential' if rng.uniform() < 0.8 else str(rng.choice(['non_residential', 'mixed']))
        return {
            'construction_type': construction,
            'material': str(rng.choice(materials)),
            'use': use,
            'condition': condition,
        }

    def _noisy(self, rng: np.random.Generator, attribute: str, value: str) -> str:
        if rng.uniform() >= self.label_noise:
            return value
        others = [c for c in class_names(attribute) if c != value]
        return str(rng.choice(others))

    def _detections(self, rng: np.random.Generator, footprints: List[FootprintFeature],
                    cameras: List[Tuple[float, float]],
                    truth: Dict[str, Dict[str, str]]) -> Tuple[List[DetectionRecord], List[AnnotatedInstance]]:
        detections, annotations = [], []
        camera_lonlat = unproject_local(cameras, ORIGIN)
        for fp, (lon, lat) in zip(footprints, camera_lonlat):
            for _ in range(int(rng.integers(1, 3))):
                image_id = f"img{len(detections):06d}"
                # both poses look north at the facade
                heading, side = (90.0, Side.LEFT) if rng.uniform() < 0.5 else (270.0, Side.RIGHT)
                x0 = float(rng.uniform(40, 200))
                y0 = float(rng.uniform(40, 120))
                bbox = BoundingBox(x0, y0, x0 + 300.0, y0 + 250.0)
                attributes = {
                    name: AttributePrediction(self._noisy(rng, name, truth[fp.footprint_id][name]),
                                              round(float(rng.uniform(0.5, 1.0)), 3))
                    for name in ATTRIBUTE_NAMES
                }
                detections.append(DetectionRecord(image_id, float(lon), float(lat), heading, side,
                                                  bbox, attributes))
                shift = float(rng.uniform(-6.0, 6.0))
                annotations.append(AnnotatedInstance(
                    image_id,
                    BoundingBox(x0 + shift, y0 - shift, x0 + 300.0 + shift, y0 + 250.0 - shift),
                    dict(truth[fp.footprint_id]),
                ))
        return detections, annotations

    def _add_rejects(self, rng: np.random.Generator, detections: List[DetectionRecord]) -> int:
        """Detections captured far outside the mapped area"""
        n_rejects = int(round(self.reject_rate * len(detections)))
        far = unproject_local([(-5000.0 - 100.0 * i, -5000.0) for i in range(n_rejects)], ORIGIN)
        for lon, lat in far:
            attributes = {name: AttributePrediction(class_names(name)[0], 0.5) for name in ATTRIBUTE_NAMES}
            detections.append(DetectionRecord(f"img{len(detections):06d}", float(lon), float(lat), 90.0,
                                              Side.LEFT, BoundingBox(10.0, 10.0, 110.0, 110.0), attributes))
        return n_rejects
