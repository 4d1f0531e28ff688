"""
Attribute taxonomy - Closed class sets for the four building attributes
"""
from enum import Enum
from typing import Dict, List, Tuple, Type


class ConstructionType(Enum):
    """Structural system of the facade"""
    CONFINED = "confined"
    UNCONFINED = "unconfined"


class Material(Enum):
    """Dominant facade material"""
    PLASTER = "plaster"
    MIX_OTHER_UNCLEAR = "mix_other_unclear"
    BRICK_OR_CONCRETE_BLOCK = "brick_or_concrete_block"
    WOOD_CRUDE_PLANK = "wood_crude_plank"
    WOOD_POLISHED = "wood_polished"
    CORRUGATED_METAL = "corrugated_metal"
    ADOBE = "adobe"
    STONE_WITH_MUD_ASHLAR_WITH_LIME_OR_CEMENT = "stone_with_mud_ashlar_with_lime_or_cement"
    CONTAINER_TRAILER = "container_trailer"
    PLANT_MATERIAL = "plant_material"


class Use(Enum):
    """Occupancy of the building"""
    RESIDENTIAL = "residential"
    NON_RESIDENTIAL = "non_residential"
    MIXED = "mixed"


class Condition(Enum):
    """Visible maintenance state"""
    POOR = "poor"
    FAIR = "fair"
    GOOD = "good"


# Declaration order matters: it is the tie-break order for consensus voting.
ATTRIBUTES: Dict[str, Type[Enum]] = {
    'construction_type': ConstructionType,
    'material': Material,
    'use': Use,
    'condition': Condition,
}

ATTRIBUTE_NAMES: Tuple[str, ...] = tuple(ATTRIBUTES)

# Rank orders for trend lines against K3 (x-axis of the per-class plots)
TREND_ORDER: Dict[str, Tuple[str, ...]] = {
    'construction_type': ('unconfined', 'confined'),
    'material': (
        'wood_polished',
        'wood_crude_plank',
        'corrugated_metal',
        'brick_or_concrete_block',
        'plaster',
        'mix_other_unclear',
    ),
    'use': ('residential', 'non_residential', 'mixed'),
    'condition': ('poor', 'fair', 'good'),
}


def class_names(attribute: str) -> List[str]:
    """Class values of an attribute in declaration order"""
    return [member.value for member in ATTRIBUTES[attribute]]


def is_member(attribute: str, value: str) -> bool:
    """Check whether value is a class of the attribute"""
    enum_type = ATTRIBUTES.get(attribute)
    if enum_type is None:
        return False
    return value in enum_type._value2member_map_
