"""
Settings model - Pipeline configuration loaded from an INI file and overridden by flags
"""
import configparser
import hashlib
import json
import os
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from models.errors import InputError

ENV_LOG_LEVEL = 'STREETK3_LOG_LEVEL'
ENV_THREADS = 'STREETK3_THREADS'

# INI section of every configurable field
SECTIONS: Dict[str, List[str]] = {
    'inputs': ['detections', 'footprints', 'census', 'schema', 'annotations', 'predictions'],
    'output': ['out_dir'],
    'geocode': ['max_range_m'],
    'k3': ['seed', 'anova_threshold', 'exhaustive_limit', 'allow_large'],
    'eval': ['iou_threshold', 'mask_iou'],
    'correlate': ['histogram_bins', 'histogram_lo', 'histogram_hi', 'vulnerable_below'],
    'runtime': ['threads'],
}
PATH_FIELDS = SECTIONS['inputs'] + SECTIONS['output']
REQUIRED_INPUTS = ('detections', 'footprints', 'census')

# Fields that do not change results and stay out of the config hash
UNHASHED_FIELDS = {'out_dir', 'threads'}


def _default_threads() -> int:
    value = os.environ.get(ENV_THREADS, '')
    return int(value) if value.isdigit() and int(value) > 0 else 4


class PipelineConfig(BaseModel):
    """Input paths and analysis parameters for one pipeline run"""
    model_config = ConfigDict(extra='forbid', validate_assignment=True, populate_by_name=True)

    detections: Optional[str] = None
    footprints: Optional[str] = None
    census: Optional[str] = None
    schema_path: Optional[str] = Field(None, alias='schema')
    annotations: Optional[str] = None
    predictions: Optional[str] = None
    out_dir: str = 'out'

    max_range_m: float = Field(50.0, gt=0)
    seed: int = Field(0, ge=0)
    anova_threshold: float = Field(3.0, ge=0)
    exhaustive_limit: int = Field(2300, ge=0)
    allow_large: bool = False
    iou_threshold: float = Field(0.75, ge=0, lt=1)
    mask_iou: bool = False
    histogram_bins: int = Field(8, ge=1)
    histogram_lo: float = 1.0
    histogram_hi: float = 3.0
    vulnerable_below: float = 1.5
    threads: int = Field(default_factory=_default_threads, ge=1)

    @model_validator(mode='after')
    def _check_range(self) -> 'PipelineConfig':
        if not self.histogram_lo < self.histogram_hi:
            raise ValueError(f"histogram_lo ({self.histogram_lo}) must be below histogram_hi ({self.histogram_hi})")
        return self

    @property
    def prediction_path(self) -> Optional[str]:
        """Predictions scored against annotations; the detections file unless set"""
        return self.predictions or self.detections

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode='json', by_alias=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: Optional[str] = None) -> 'PipelineConfig':
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            error = e.errors()[0]
            name = '.'.join(str(part) for part in error['loc']) or None
            raise InputError(error['msg'], path=source, field=name)

    def with_overrides(self, **overrides: Any) -> 'PipelineConfig':
        """Copy with the non-None overrides applied and re-validated"""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return self.from_dict(data)

    def missing_inputs(self) -> List[str]:
        """Descriptions of required inputs that are unset and of configured paths that do not exist"""
        problems = []
        for name in REQUIRED_INPUTS:
            if getattr(self, name) is None:
                problems.append(f"{name}: not configured")
        for name in SECTIONS['inputs']:
            path = self.schema_path if name == 'schema' else getattr(self, name)
            if path is not None and not os.path.isfile(path):
                problems.append(f"{name}: {path} does not exist")
        return problems

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every result-affecting field"""
        data = {k: v for k, v in self.to_dict().items() if k not in UNHASHED_FIELDS}
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def save_to_file(self, file_path: str) -> None:
        """Write the config as INI (paths relative to the file's directory where possible)"""
        base = os.path.dirname(os.path.abspath(file_path))
        data = self.to_dict()
        parser = configparser.ConfigParser()
        for section, keys in SECTIONS.items():
            parser[section] = {}
            for key in keys:
                value = data.get(key)
                if value is None or key == 'threads':
                    continue
                if key in PATH_FIELDS:
                    value = os.path.relpath(os.path.abspath(value), base)
                elif isinstance(value, bool):
                    value = 'true' if value else 'false'
                parser[section][key] = str(value)
        os.makedirs(base, exist_ok=True)
        with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
            parser.write(f)

    @classmethod
    def load_from_file(cls, file_path: str) -> 'PipelineConfig':
        """Load an INI config; relative paths resolve against the file's directory"""
        parser = configparser.ConfigParser()
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                parser.read_file(f)
        except OSError as e:
            raise InputError(f"cannot read config: {e.strerror}", path=file_path)
        except configparser.Error as e:
            raise InputError(f"malformed config ({e.message})", path=file_path)

        base = os.path.dirname(os.path.abspath(file_path))
        data: Dict[str, Any] = {}
        for section in parser.sections():
            if section not in SECTIONS:
                raise InputError("unknown section", path=file_path, field=f"[{section}]")
            for key, value in parser[section].items():
                if key not in SECTIONS[section]:
                    raise InputError("unknown key", path=file_path, field=f"{section}.{key}")
                value = value.strip()
                if key in PATH_FIELDS:
                    if not value:
                        continue
                    value = os.path.normpath(os.path.join(base, os.path.expanduser(value)))
                data[key] = value
        return cls.from_dict(data, source=file_path)
