"""
Geocoder - Links image detections to building footprints by casting the camera's viewing ray
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon, box
from shapely.strtree import STRtree

from models.building import BuildingAttributeRecord
from models.detection import DetectionRecord, Side
from models.errors import AnalysisError
from models.footprint import FootprintFeature
from models.taxonomy import ATTRIBUTE_NAMES, class_names

logger = logging.getLogger('streetk3.geocoder')

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_MAX_RANGE_M = 50.0
MIN_HIT_DISTANCE_M = 1e-9

LonLat = Tuple[float, float]


def project_local(points: Sequence[LonLat], origin: LonLat) -> np.ndarray:
    """Equirectangular projection of lon/lat degrees to metres about origin"""
    coords = np.asarray(points, dtype=float).reshape(-1, 2)
    lon0, lat0 = origin
    x = EARTH_RADIUS_M * np.radians(coords[:, 0] - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(coords[:, 1] - lat0)
    return np.column_stack((x, y))


def unproject_local(xy: np.ndarray, origin: LonLat) -> np.ndarray:
    """Inverse of project_local"""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    lon0, lat0 = origin
    lon = lon0 + np.degrees(xy[:, 0] / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    lat = lat0 + np.degrees(xy[:, 1] / EARTH_RADIUS_M)
    return np.column_stack((lon, lat))


@dataclass(frozen=True)
class ViewRay:
    """Viewing ray in the local planar frame; bearing is clockwise from north"""
    origin: Tuple[float, float]
    bearing: float
    max_range: float

    def __post_init__(self):
        if not self.max_range > 0:
            raise ValueError(f"max_range must be positive, got {self.max_range}")
        if not 0.0 <= self.bearing < 360.0:
            raise ValueError(f"bearing must be in [0, 360), got {self.bearing}")

    @property
    def direction(self) -> Tuple[float, float]:
        theta = math.radians(self.bearing)
        return (math.sin(theta), math.cos(theta))

    @property
    def end(self) -> Tuple[float, float]:
        dx, dy = self.direction
        return (self.origin[0] + self.max_range * dx, self.origin[1] + self.max_range * dy)

    def segment(self) -> LineString:
        return LineString([self.origin, self.end])


def cast_ray(detection: DetectionRecord, max_range: float = DEFAULT_MAX_RANGE_M,
             origin: Optional[LonLat] = None) -> ViewRay:
    """Ray perpendicular to the travel direction, on the side the camera faced.

    origin is the projection origin; by default the capture point itself.
    """
    offset = 90.0 if detection.side is Side.RIGHT else -90.0
    bearing = (detection.heading_deg + offset) % 360.0
    if bearing >= 360.0:  # -tiny % 360 rounds up to 360.0
        bearing = 0.0
    if origin is None:
        position = (0.0, 0.0)
    else:
        x, y = project_local([detection.capture_point], origin)[0]
        position = (float(x), float(y))
    return ViewRay(origin=position, bearing=bearing, max_range=max_range)


class SpatialIndex:
    """Packed R-tree over footprint polygons in the local planar frame (immutable)"""

    def __init__(self, polygons: Sequence[Polygon]):
        self.polygons: Tuple[Polygon, ...] = tuple(polygons)
        self._tree = STRtree(list(self.polygons)) if self.polygons else None

    @classmethod
    def from_footprints(cls, footprints: Sequence[FootprintFeature], origin: LonLat) -> 'SpatialIndex':
        polygons = [Polygon(project_local(fp.ring, origin)) for fp in footprints]
        return cls(polygons)

    def __len__(self) -> int:
        return len(self.polygons)

    def query(self, bounds: Tuple[float, float, float, float]) -> List[int]:
        """Positions of polygons whose bounding boxes intersect bounds (minx, miny, maxx, maxy)"""
        if self._tree is None:
            return []
        hits = self._tree.query(box(*bounds))
        return sorted(int(i) for i in hits)


def hit_distance(ray: ViewRay, polygon: Polygon) -> Optional[float]:
    """Smallest positive distance along the ray to the polygon boundary, if within range"""
    crossing = ray.segment().intersection(polygon.exterior)
    if crossing.is_empty:
        return None
    coords = shapely.get_coordinates(crossing)
    distances = np.hypot(coords[:, 0] - ray.origin[0], coords[:, 1] - ray.origin[1])
    distances = distances[distances > MIN_HIT_DISTANCE_M]
    if distances.size == 0:
        return None
    return float(distances.min())


def first_hit(ray: ViewRay, polygons: Sequence[Polygon],
              candidates: Optional[Sequence[int]] = None) -> Optional[Tuple[int, float]]:
    """(position, distance) of the nearest polygon hit; equal distances go to the lower position"""
    best: Optional[Tuple[int, float]] = None
    positions = range(len(polygons)) if candidates is None else candidates
    for position in positions:
        distance = hit_distance(ray, polygons[position])
        if distance is None:
            continue
        if best is None or distance < best[1] or (distance == best[1] and position < best[0]):
            best = (position, distance)
    return best


def match_footprint(ray: ViewRay, index: SpatialIndex,
                    footprints: Sequence[FootprintFeature]) -> Optional[str]:
    """Footprint id whose boundary the ray meets first, or None"""
    hit = _indexed_hit(ray, index)
    if hit is None:
        return None
    return footprints[hit[0]].footprint_id


def _indexed_hit(ray: ViewRay, index: SpatialIndex) -> Optional[Tuple[int, float]]:
    (x0, y0), (x1, y1) = ray.origin, ray.end
    candidates = index.query((min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)))
    return first_hit(ray, index.polygons, candidates)


def consensus_attributes(detections: Sequence[DetectionRecord], footprint_id: str,
                         block_id: str) -> BuildingAttributeRecord:
    """Fuse detections of one footprint: per attribute the class with the largest summed confidence"""
    if not detections:
        raise AnalysisError(f"no detections to fuse for footprint {footprint_id!r}")

    classes: Dict[str, str] = {}
    weights: Dict[str, float] = {}
    for name in ATTRIBUTE_NAMES:
        votes: Dict[str, List[float]] = {value: [] for value in class_names(name)}
        for detection in detections:
            prediction = detection.attributes[name]
            votes[prediction.value].append(prediction.confidence)
        # fsum is exact, so the winner does not depend on detection order
        totals = [(math.fsum(votes[value]), value) for value in class_names(name)]
        best_weight, best_value = totals[0]
        for weight, value in totals[1:]:
            if weight > best_weight:
                best_weight, best_value = weight, value
        classes[name] = best_value
        weights[name] = best_weight

    return BuildingAttributeRecord(
        footprint_id=footprint_id,
        block_id=block_id,
        n_detections=len(detections),
        classes=classes,
        weights=weights,
    )


@dataclass
class GeocodeResult:
    """Fused buildings, unmatched detections, and the per-detection assignment"""
    buildings: List[BuildingAttributeRecord]
    rejects: List[Dict]
    assignments: List[Optional[str]]

    @property
    def n_matched(self) -> int:
        return sum(a is not None for a in self.assignments)


class Geocoder:
    """Assigns detections to footprints and fuses them into building records"""

    def __init__(self, footprints: Sequence[FootprintFeature],
                 max_range_m: float = DEFAULT_MAX_RANGE_M, threads: int = 1):
        if not max_range_m > 0:
            raise AnalysisError(f"max range must be positive, got {max_range_m}")
        self.footprints = list(footprints)
        self.max_range_m = max_range_m
        self.threads = max(1, threads)
        self.origin = self._frame_origin(self.footprints)
        self.index = SpatialIndex.from_footprints(self.footprints, self.origin)

    @staticmethod
    def _frame_origin(footprints: Sequence[FootprintFeature]) -> LonLat:
        """Centre of the footprints' lon/lat bounding box"""
        if not footprints:
            return (0.0, 0.0)
        coords = np.array([p for fp in footprints for p in fp.ring], dtype=float)
        lo, hi = coords.min(axis=0), coords.max(axis=0)
        return (float((lo[0] + hi[0]) / 2.0), float((lo[1] + hi[1]) / 2.0))

    def ray_for(self, detection: DetectionRecord) -> ViewRay:
        return cast_ray(detection, self.max_range_m, self.origin)

    def locate(self, detection: DetectionRecord) -> Optional[Tuple[int, float]]:
        """(footprint position, hit distance) for one detection"""
        return _indexed_hit(self.ray_for(detection), self.index)

    def geocode(self, detections: Sequence[DetectionRecord]) -> GeocodeResult:
        """Match every detection, then fuse per footprint (output in footprint input order)"""
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            hits = list(pool.map(self.locate, detections))

        grouped: Dict[int, List[DetectionRecord]] = {}
        assignments: List[Optional[str]] = []
        rejects: List[Dict] = []
        for position, (detection, hit) in enumerate(zip(detections, hits)):
            if hit is None:
                assignments.append(None)
                rejects.append({
                    'index': position,
                    'image_id': detection.image_id,
                    'reason': f"no footprint within {self.max_range_m:g} m of the viewing ray",
                    'detection': detection.to_dict(),
                })
                continue
            grouped.setdefault(hit[0], []).append(detection)
            assignments.append(self.footprints[hit[0]].footprint_id)

        buildings = []
        for position in sorted(grouped):
            footprint = self.footprints[position]
            buildings.append(consensus_attributes(grouped[position], footprint.footprint_id, footprint.block_id))

        if rejects:
            logger.warning(f"{len(rejects)} of {len(detections)} detections matched no footprint")
        logger.info(f"Geocoded {len(detections) - len(rejects)} detections onto {len(buildings)} footprints")
        return GeocodeResult(buildings=buildings, rejects=rejects, assignments=assignments)
