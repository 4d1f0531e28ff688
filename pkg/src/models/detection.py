"""
Detection model - Building instances predicted on (or annotated in) street-view images
"""
from dataclasses import dataclass, field
from enum import Enum
import json
import logging
import math
from typing import Any, Dict, Iterator, List, Optional, Tuple

from models.errors import InputError
from models.taxonomy import ATTRIBUTE_NAMES, is_member

logger = logging.getLogger('streetk3.detection')

Point2D = Tuple[float, float]


class Side(Enum):
    """Side of the vehicle the camera faced"""
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class BoundingBox:
    """Pixel rectangle (x_min, y_min, x_max, y_max)"""
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def to_list(self) -> List[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class AttributePrediction:
    """One attribute's predicted class and its confidence"""
    value: str
    confidence: float


@dataclass(frozen=True)
class DetectionRecord:
    """One detected building in one image, with the camera pose it was seen from"""
    image_id: str
    lon: float
    lat: float
    heading_deg: float
    side: Side
    bbox: BoundingBox
    attributes: Dict[str, AttributePrediction]
    mask: Optional[Tuple[Point2D, ...]] = None

    @property
    def capture_point(self) -> Point2D:
        return (self.lon, self.lat)

    def to_dict(self) -> Dict[str, Any]:
        """Convert the detection to its JSONL representation"""
        data: Dict[str, Any] = {
            'image_id': self.image_id,
            'lon': self.lon,
            'lat': self.lat,
            'heading_deg': self.heading_deg,
            'side': self.side.value,
            'bbox': self.bbox.to_list(),
            'attributes': {
                name: {'class': pred.value, 'confidence': pred.confidence}
                for name, pred in self.attributes.items()
            },
        }
        if self.mask is not None:
            data['mask'] = [list(p) for p in self.mask]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], line: Optional[int] = None,
                  path: Optional[str] = None) -> 'DetectionRecord':
        """Create a validated DetectionRecord from a decoded JSON object"""
        check = _FieldChecker(data, line, path)
        image_id = check.string('image_id')
        lon = check.number('lon', -180.0, 180.0)
        lat = check.number('lat', -90.0, 90.0)
        heading = check.number('heading_deg', 0.0, 360.0, upper_open=True, label='camera_heading')
        side_value = check.string('side')
        try:
            side = Side(side_value)
        except ValueError:
            raise check.error('side', f"must be 'left' or 'right', got {side_value!r}")
        bbox = check.bbox('bbox')
        mask = check.mask('mask')

        raw_attributes = check.mapping('attributes')
        attributes: Dict[str, AttributePrediction] = {}
        for name in ATTRIBUTE_NAMES:
            entry = raw_attributes.get(name)
            where = f"attributes.{name}"
            if not isinstance(entry, dict):
                raise check.error(where, "missing attribute prediction")
            value = entry.get('class')
            if not isinstance(value, str) or not is_member(name, value):
                raise check.error(f"{where}.class", f"unknown class {value!r}")
            confidence = entry.get('confidence')
            if not _is_number(confidence):
                raise check.error(f"{where}.confidence", "missing or non-numeric")
            if not 0.0 <= confidence <= 1.0:
                raise check.error(f"{where}.confidence", f"{confidence} outside [0, 1]")
            attributes[name] = AttributePrediction(value, float(confidence))

        return cls(
            image_id=image_id,
            lon=lon,
            lat=lat,
            heading_deg=heading,
            side=side,
            bbox=bbox,
            attributes=attributes,
            mask=mask,
        )


@dataclass(frozen=True)
class AnnotatedInstance:
    """A ground-truth building box with its four attribute labels"""
    image_id: str
    bbox: BoundingBox
    labels: Dict[str, str] = field(default_factory=dict)
    mask: Optional[Tuple[Point2D, ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'image_id': self.image_id,
            'bbox': self.bbox.to_list(),
            'attributes': dict(self.labels),
        }
        if self.mask is not None:
            data['mask'] = [list(p) for p in self.mask]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], line: Optional[int] = None,
                  path: Optional[str] = None) -> 'AnnotatedInstance':
        check = _FieldChecker(data, line, path)
        image_id = check.string('image_id')
        bbox = check.bbox('bbox')
        mask = check.mask('mask')
        raw = check.mapping('attributes')
        labels: Dict[str, str] = {}
        for name in ATTRIBUTE_NAMES:
            value = raw.get(name)
            if not isinstance(value, str) or not is_member(name, value):
                raise check.error(f"attributes.{name}", f"unknown or missing class {value!r}")
            labels[name] = value
        return cls(image_id=image_id, bbox=bbox, labels=labels, mask=mask)


def parse_detections(path: str) -> List[DetectionRecord]:
    """Parse a detections JSONL file; fails on the first invalid line"""
    records = [DetectionRecord.from_dict(obj, line, path) for line, obj in _read_jsonl(path)]
    logger.info(f"Parsed {len(records)} detections from {path}")
    return records


def parse_annotations(path: str) -> List[AnnotatedInstance]:
    """Parse a ground-truth annotations JSONL file"""
    records = [AnnotatedInstance.from_dict(obj, line, path) for line, obj in _read_jsonl(path)]
    logger.info(f"Parsed {len(records)} annotated instances from {path}")
    return records


def _read_jsonl(path: str) -> Iterator[Tuple[int, Dict[str, Any]]]:
    try:
        handle = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise InputError(f"cannot read file: {e.strerror}", path=path)
    with handle:
        for number, text in enumerate(handle, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as e:
                raise InputError(f"malformed JSON ({e.msg})", path=path, line=number)
            if not isinstance(obj, dict):
                raise InputError("expected a JSON object", path=path, line=number)
            yield number, obj


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


class _FieldChecker:
    """Pulls typed fields out of a JSON object, raising InputError with the line and field name"""

    def __init__(self, data: Dict[str, Any], line: Optional[int], path: Optional[str]):
        self.data = data
        self.line = line
        self.path = path

    def error(self, field_name: str, message: str) -> InputError:
        return InputError(message, path=self.path, line=self.line, field=field_name)

    def _get(self, name: str) -> Any:
        if name not in self.data:
            raise self.error(name, "missing field")
        return self.data[name]

    def string(self, name: str) -> str:
        value = self._get(name)
        if not isinstance(value, str) or not value:
            raise self.error(name, "must be a non-empty string")
        return value

    def number(self, name: str, lo: float, hi: float, upper_open: bool = False,
               label: Optional[str] = None) -> float:
        value = self._get(name)
        reported = label or name
        if not _is_number(value):
            raise self.error(reported, f"'{name}' must be a number")
        above = value >= hi if upper_open else value > hi
        if value < lo or above:
            bracket = ')' if upper_open else ']'
            raise self.error(reported, f"'{name}' value {value} out of range [{lo:g}, {hi:g}{bracket}")
        return float(value)

    def mapping(self, name: str) -> Dict[str, Any]:
        value = self._get(name)
        if not isinstance(value, dict):
            raise self.error(name, "must be an object")
        return value

    def bbox(self, name: str) -> BoundingBox:
        value = self._get(name)
        if not isinstance(value, list) or len(value) != 4 or not all(_is_number(v) for v in value):
            raise self.error(name, "must be [x_min, y_min, x_max, y_max]")
        x0, y0, x1, y1 = (float(v) for v in value)
        if not (x0 < x1 and y0 < y1):
            raise self.error(name, "requires x_min < x_max and y_min < y_max")
        return BoundingBox(x0, y0, x1, y1)

    def mask(self, name: str) -> Optional[Tuple[Point2D, ...]]:
        value = self.data.get(name)
        if value is None:
            return None
        if not isinstance(value, list) or len(value) < 3:
            raise self.error(name, "must be a list of at least 3 [x, y] points")
        points = []
        for point in value:
            if not isinstance(point, list) or len(point) != 2 or not all(_is_number(v) for v in point):
                raise self.error(name, "points must be [x, y] number pairs")
            points.append((float(point[0]), float(point[1])))
        return tuple(points)
