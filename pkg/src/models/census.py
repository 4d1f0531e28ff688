"""
Census model - Household microdata and the variable schema that describes it
"""
import csv
from dataclasses import dataclass
from enum import Enum
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
import yaml

from models.errors import InputError

logger = logging.getLogger('streetk3.census')

BINARY_TRUE = {'yes', '1'}
BINARY_FALSE = {'no', '0'}


class VariableKind(Enum):
    """How a census variable is recorded"""
    BINARY = "binary"
    PERCENTAGE = "percentage"


class Polarity(Enum):
    """Direction in which a variable indicates welfare"""
    HIGHER_IS_BETTER = "higher_is_better"
    HIGHER_IS_WORSE = "higher_is_worse"


@dataclass(frozen=True)
class CensusVariable:
    """One column of the census file"""
    name: str
    kind: VariableKind
    polarity: Polarity = Polarity.HIGHER_IS_BETTER
    label: str = ""

    def to_dict(self) -> Dict[str, Any]:
        data = {'name': self.name, 'kind': self.kind.value, 'polarity': self.polarity.value}
        if self.label:
            data['label'] = self.label
        return data


@dataclass(frozen=True)
class CensusSchema:
    """Ordered, uniquely named list of census variables"""
    variables: Tuple[CensusVariable, ...]

    def __post_init__(self):
        if not self.variables:
            raise InputError("census schema must declare at least one variable")
        names = [v.name for v in self.variables]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise InputError(f"duplicate variable names in schema: {', '.join(duplicates)}")

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    def to_list(self) -> List[Dict[str, Any]]:
        return [v.to_dict() for v in self.variables]

    @classmethod
    def from_list(cls, entries: Any, path: Optional[str] = None) -> 'CensusSchema':
        if not isinstance(entries, list):
            raise InputError("schema must be a list of variables", path=path)
        variables = []
        for i, entry in enumerate(entries):
            where = f"variables[{i}]"
            if not isinstance(entry, dict) or not entry.get('name'):
                raise InputError("variable needs a name", path=path, field=where)
            try:
                kind = VariableKind(entry.get('kind'))
            except ValueError:
                raise InputError(f"unknown kind {entry.get('kind')!r}", path=path, field=f"{where}.kind")
            try:
                polarity = Polarity(entry.get('polarity', Polarity.HIGHER_IS_BETTER.value))
            except ValueError:
                raise InputError(f"unknown polarity {entry.get('polarity')!r}",
                                 path=path, field=f"{where}.polarity")
            variables.append(CensusVariable(str(entry['name']), kind, polarity, str(entry.get('label', ''))))
        try:
            return cls(tuple(variables))
        except InputError as e:
            raise InputError(e.reason, path=path)


@dataclass(frozen=True)
class HouseholdRecord:
    """One census household; values align with the schema (None = missing)"""
    household_id: str
    block_id: str
    values: Tuple[Optional[float], ...]
    region: Optional[str] = None

    @property
    def n_observed(self) -> int:
        return sum(v is not None for v in self.values)


def load_schema(path: str) -> CensusSchema:
    """Load a schema sidecar (YAML list of name / kind / polarity entries)"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise InputError(f"cannot read file: {e.strerror}", path=path)
    except yaml.YAMLError as e:
        raise InputError(f"malformed YAML ({e})", path=path)
    if isinstance(data, dict):
        data = data.get('variables')
    return CensusSchema.from_list(data, path)


def default_schema() -> CensusSchema:
    """The 26 housing-unit and household-member variables of the K3 index"""
    binary = [
        ('multiple_households', "More than one household per housing unit", Polarity.HIGHER_IS_WORSE),
        ('walls_industrial', "Walls made of industrial materials", Polarity.HIGHER_IS_BETTER),
        ('floor_industrial', "Floor made of industrial materials", Polarity.HIGHER_IS_BETTER),
        ('electricity', "Access to electricity", Polarity.HIGHER_IS_BETTER),
        ('water', "Access to water", Polarity.HIGHER_IS_BETTER),
        ('sewerage', "Access to sewerage", Polarity.HIGHER_IS_BETTER),
        ('natural_gas', "Access to natural gas", Polarity.HIGHER_IS_BETTER),
        ('waste_collection', "Access to waste collection services", Polarity.HIGHER_IS_BETTER),
        ('waste_collection_frequent', "Waste collection more than 3 times a week", Polarity.HIGHER_IS_BETTER),
        ('internet', "Access to internet connection (fixed or mobile)", Polarity.HIGHER_IS_BETTER),
        ('wc_sewage', "WC connected to sewage network", Polarity.HIGHER_IS_BETTER),
        ('has_bedroom', "At least one room in the house is a bedroom", Polarity.HIGHER_IS_BETTER),
        ('kitchen_room', "Independent room for the kitchen", Polarity.HIGHER_IS_BETTER),
        ('kitchen_water', "Kitchen connected to the water network", Polarity.HIGHER_IS_BETTER),
        ('under_3_per_bedroom', "Less than 3 persons per bedroom", Polarity.HIGHER_IS_BETTER),
    ]
    percentage = [
        ('pct_men', "Members that are men"),
        ('pct_over_64', "Members older than 64"),
        ('pct_non_indigenous', "Households without members of indigenous origin"),
        ('pct_native_municipality', "Members that live in the municipality they were born"),
        ('pct_not_sick', "Members that did not get sick"),
        ('pct_no_disability', "Members without any disability"),
        ('pct_literate', "Members that are not illiterate"),
        ('pct_college_over_24', "Members above 24 years old with college or higher education"),
        ('pct_working_15_64', "Members between the ages of 15 and 64 that are working"),
        ('pct_partnered', "Members that are married or in another partnership arrangement"),
        ('pct_women_with_children', "Women that have children"),
    ]
    variables = [CensusVariable(name, VariableKind.BINARY, polarity, label)
                 for name, label, polarity in binary]
    variables += [CensusVariable(name, VariableKind.PERCENTAGE, Polarity.HIGHER_IS_BETTER, label)
                  for name, label in percentage]
    return CensusSchema(tuple(variables))


def parse_census(path: str, schema: CensusSchema) -> List[HouseholdRecord]:
    """Parse a census CSV against the schema; empty cells become missing values"""
    try:
        lines = _record_lines(path)
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except FileNotFoundError:
        raise InputError("cannot read file: not found", path=path)
    except pd.errors.EmptyDataError:
        raise InputError("file is empty (header row required)", path=path)
    except (csv.Error, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputError(f"malformed CSV ({e})", path=path)
    if len(lines) != len(frame):
        raise InputError(f"malformed CSV ({len(lines)} records but {len(frame)} table rows)", path=path)

    frame.columns = [str(c).strip() for c in frame.columns]
    for column in ['household_id', 'block_id'] + schema.names:
        if column not in frame.columns:
            raise InputError("missing column", path=path, field=column)
    has_region = 'region' in frame.columns

    records = []
    for line, row in zip(lines, frame.itertuples(index=False)):
        cells = dict(zip(frame.columns, row))
        household_id = cells['household_id'].strip()
        block_id = cells['block_id'].strip()
        if not household_id:
            raise InputError("empty household_id", path=path, line=line, field='household_id')
        if not block_id:
            raise InputError("empty block_id", path=path, line=line, field='block_id')

        values = tuple(_parse_cell(cells[v.name], v, path, line) for v in schema.variables)
        if all(v is None for v in values):
            raise InputError("household has no observed variable", path=path, line=line)

        region = (cells['region'].strip() or None) if has_region else None
        records.append(HouseholdRecord(household_id, block_id, values, region))

    logger.info(f"Parsed {len(records)} households ({len(schema)} variables) from {path}")
    return records


def _record_lines(path: str) -> List[int]:
    """Physical line on which each non-blank data record starts.

    Every record must have exactly as many fields as the header.
    """
    lines = []
    width = None
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        start = 1
        for fields in reader:
            line, start = start, reader.line_num + 1
            if not fields:
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise InputError(f"row has {len(fields)} fields but the header has {width}",
                                 path=path, line=line)
            else:
                lines.append(line)
    if width is None:
        raise InputError("file is empty (header row required)", path=path)
    return lines


def _parse_cell(raw: str, variable: CensusVariable, path: str, line: int) -> Optional[float]:
    text = raw.strip().lower()
    if text == '':
        return None
    if variable.kind is VariableKind.BINARY:
        if text in BINARY_TRUE:
            return 1.0
        if text in BINARY_FALSE:
            return 0.0
        raise InputError(f"unparseable binary value {raw!r} (expected yes/no/1/0)",
                         path=path, line=line, field=variable.name)
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"unparseable percentage {raw!r}", path=path, line=line, field=variable.name)
    if not math.isfinite(value) or not 0.0 <= value <= 100.0:
        raise InputError(f"percentage {raw} out of range [0, 100]", path=path, line=line, field=variable.name)
    return value


def households_to_frame(records: List[HouseholdRecord], schema: CensusSchema) -> pd.DataFrame:
    """Tabulate households in the census CSV layout (inverse of parse_census)"""
    has_region = any(r.region is not None for r in records)
    rows = []
    for record in records:
        row: Dict[str, Any] = {'household_id': record.household_id, 'block_id': record.block_id}
        if has_region:
            row['region'] = record.region or ''
        for variable, value in zip(schema.variables, record.values):
            if value is None:
                row[variable.name] = ''
            elif variable.kind is VariableKind.BINARY:
                row[variable.name] = 'yes' if value == 1.0 else 'no'
            else:
                row[variable.name] = repr(float(value))
        rows.append(row)
    columns = ['household_id', 'block_id']
    if has_region:
        columns.append('region')
    columns += schema.names
    return pd.DataFrame(rows, columns=columns)
