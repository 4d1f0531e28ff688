"""
Building model - Consensus attributes of a geocoded building footprint
"""
from dataclasses import dataclass, field
import json
import logging
from typing import Any, Dict, List

from models.errors import InputError
from models.taxonomy import ATTRIBUTE_NAMES, is_member

logger = logging.getLogger('streetk3.building')


@dataclass(frozen=True)
class BuildingAttributeRecord:
    """Fused attribute record for one footprint"""
    footprint_id: str
    block_id: str
    n_detections: int
    classes: Dict[str, str] = field(default_factory=dict)
    weights: Dict[str, float] = field(default_factory=dict)  # summed confidence of the winning class

    def __post_init__(self):
        if self.n_detections < 1:
            raise ValueError("a building record needs at least one detection")
        for name in ATTRIBUTE_NAMES:
            if not is_member(name, self.classes.get(name, '')):
                raise ValueError(f"invalid {name} class {self.classes.get(name)!r}")

    def to_dict(self) -> Dict[str, Any]:
        """Convert the record to its buildings.jsonl representation"""
        data: Dict[str, Any] = {
            'footprint_id': self.footprint_id,
            'block_id': self.block_id,
            'n_detections': self.n_detections,
        }
        for name in ATTRIBUTE_NAMES:
            data[name] = self.classes[name]
        data['weights'] = {name: self.weights[name] for name in ATTRIBUTE_NAMES}
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BuildingAttributeRecord':
        """Create a record from a buildings.jsonl object"""
        return cls(
            footprint_id=str(data['footprint_id']),
            block_id=str(data['block_id']),
            n_detections=int(data['n_detections']),
            classes={name: data[name] for name in ATTRIBUTE_NAMES},
            weights={name: float(data['weights'][name]) for name in ATTRIBUTE_NAMES},
        )


def load_buildings(path: str) -> List[BuildingAttributeRecord]:
    """Read a buildings.jsonl artifact written by the geocode stage"""
    records = []
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for number, text in enumerate(f, start=1):
                if not text.strip():
                    continue
                try:
                    records.append(BuildingAttributeRecord.from_dict(json.loads(text)))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise InputError(f"invalid building record ({e})", path=path, line=number)
    except OSError as e:
        raise InputError(f"cannot read file: {e.strerror}", path=path)
    logger.info(f"Loaded {len(records)} buildings from {path}")
    return records
