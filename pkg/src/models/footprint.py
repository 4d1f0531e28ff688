"""
Footprint model - Building polygons linked to census blocks
"""
from dataclasses import dataclass
import json
import logging
from typing import Any, Dict, List, Optional, Tuple

from shapely.geometry import Polygon

from models.errors import InputError

logger = logging.getLogger('streetk3.footprint')

LonLat = Tuple[float, float]


@dataclass(frozen=True)
class FootprintFeature:
    """A building footprint: closed exterior ring in lon/lat plus its ids"""
    footprint_id: str
    block_id: str
    ring: Tuple[LonLat, ...]

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.ring)

    def to_feature(self, properties: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """GeoJSON Feature for this footprint, with optional extra properties"""
        props: Dict[str, Any] = {'footprint_id': self.footprint_id, 'block_id': self.block_id}
        if properties:
            props.update(properties)
        return {
            'type': 'Feature',
            'geometry': {'type': 'Polygon', 'coordinates': [[list(p) for p in self.ring]]},
            'properties': props,
        }

    @classmethod
    def from_feature(cls, feature: Dict[str, Any], index: int,
                     path: Optional[str] = None) -> 'FootprintFeature':
        """Create a validated footprint from a GeoJSON Feature"""
        where = f"features[{index}]"

        def fail(field: str, message: str) -> InputError:
            return InputError(message, path=path, field=f"{where}.{field}")

        if not isinstance(feature, dict) or feature.get('type') != 'Feature':
            raise InputError("not a GeoJSON Feature", path=path, field=where)

        properties = feature.get('properties') or {}
        ids = {}
        for key in ('footprint_id', 'block_id'):
            value = properties.get(key)
            if value is None or value == '':
                raise fail(f"properties.{key}", "missing property")
            ids[key] = str(value)

        geometry = feature.get('geometry') or {}
        if geometry.get('type') != 'Polygon':
            raise fail('geometry', f"expected Polygon geometry, got {geometry.get('type')!r}")
        rings = geometry.get('coordinates')
        if not isinstance(rings, list) or not rings:
            raise fail('geometry.coordinates', "polygon has no rings")

        ring = _read_ring(rings[0], fail)
        if len(ring) < 4 or ring[0] != ring[-1]:
            raise fail('geometry.coordinates', "ring not closed")

        polygon = Polygon(ring)
        if not polygon.is_valid:
            raise fail('geometry.coordinates', "ring is self-intersecting")
        if polygon.area <= 0.0:
            raise fail('geometry.coordinates', "ring has zero area")

        return cls(footprint_id=ids['footprint_id'], block_id=ids['block_id'], ring=ring)


def parse_footprints(path: str) -> List[FootprintFeature]:
    """Parse a GeoJSON FeatureCollection of footprint polygons"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise InputError(f"cannot read file: {e.strerror}", path=path)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed JSON ({e.msg})", path=path, line=e.lineno)

    if not isinstance(data, dict) or data.get('type') != 'FeatureCollection':
        raise InputError("expected a GeoJSON FeatureCollection", path=path)
    features = data.get('features')
    if not isinstance(features, list):
        raise InputError("FeatureCollection has no 'features' list", path=path, field='features')

    footprints = [FootprintFeature.from_feature(feat, i, path) for i, feat in enumerate(features)]

    seen = set()
    for i, footprint in enumerate(footprints):
        if footprint.footprint_id in seen:
            raise InputError(f"duplicate footprint_id {footprint.footprint_id!r}",
                             path=path, field=f"features[{i}].properties.footprint_id")
        seen.add(footprint.footprint_id)

    logger.info(f"Parsed {len(footprints)} footprints from {path}")
    return footprints


def _read_ring(raw: Any, fail) -> Tuple[LonLat, ...]:
    if not isinstance(raw, list):
        raise fail('geometry.coordinates', "ring must be a list of positions")
    points = []
    for position in raw:
        if (not isinstance(position, list) or len(position) < 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in position[:2])):
            raise fail('geometry.coordinates', "positions must be [lon, lat]")
        points.append((float(position[0]), float(position[1])))
    return tuple(points)
