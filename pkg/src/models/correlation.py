"""
Correlation - Joins block K3 values with building attribute profiles and summarises how they relate
"""
from dataclasses import dataclass, field
import logging
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from models.building import BuildingAttributeRecord
from models.errors import AnalysisError
from models.k3_index import BlockK3
from models.taxonomy import ATTRIBUTE_NAMES, TREND_ORDER, class_names

logger = logging.getLogger('streetk3.correlation')

K3_COLUMN = 'k3'


def profile_column(attribute: str, value: str) -> str:
    return f"{attribute}.{value}"


def profile_columns() -> List[str]:
    return [profile_column(name, value) for name in ATTRIBUTE_NAMES for value in class_names(name)]


@dataclass(frozen=True)
class BlockProfile:
    """Share of a block's buildings in each class, per attribute"""
    block_id: str
    n_buildings: int
    proportions: Dict[str, Dict[str, float]]

    def flat(self) -> Dict[str, float]:
        return {profile_column(name, value): share
                for name in ATTRIBUTE_NAMES
                for value, share in self.proportions[name].items()}


def block_profile(buildings: Sequence[BuildingAttributeRecord]) -> List[BlockProfile]:
    """Class proportions per block, sorted by block id"""
    grouped: Dict[str, List[BuildingAttributeRecord]] = {}
    for building in buildings:
        grouped.setdefault(building.block_id, []).append(building)

    profiles = []
    for block_id, members in sorted(grouped.items()):
        n = len(members)
        proportions = {}
        for name in ATTRIBUTE_NAMES:
            counts = {value: 0 for value in class_names(name)}
            for building in members:
                counts[building.classes[name]] += 1
            proportions[name] = {value: count / n for value, count in counts.items()}
        profiles.append(BlockProfile(block_id, n, proportions))
    return profiles


@dataclass
class JoinedTable:
    """Blocks present in both K3 output and building profiles; no missing cells"""
    block_ids: List[str]
    columns: List[str]
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.block_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


def join_tables(blocks: Sequence[BlockK3], profiles: Sequence[BlockProfile]) -> JoinedTable:
    """Inner join on block id; columns are k3 followed by every class proportion"""
    k3_by_block = {b.block_id: b.k3 for b in blocks}
    columns = [K3_COLUMN] + profile_columns()
    block_ids, rows = [], []
    for profile in sorted(profiles, key=lambda p: p.block_id):
        if profile.block_id not in k3_by_block:
            continue
        flat = profile.flat()
        block_ids.append(profile.block_id)
        rows.append([k3_by_block[profile.block_id]] + [flat[c] for c in columns[1:]])

    skipped = len(profiles) - len(block_ids)
    if skipped:
        logger.warning(f"{skipped} building blocks have no K3 value and are left out of the join")
    values = np.array(rows, dtype=float) if rows else np.empty((0, len(columns)))
    return JoinedTable(block_ids=block_ids, columns=columns, values=values)


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Sample Pearson correlation; None when either side has zero variance"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise AnalysisError("pearson needs two vectors of equal length")
    if x.size < 2:
        raise AnalysisError(f"pearson needs at least 2 values, got {x.size}")
    if x.max() == x.min() or y.max() == y.min():
        return None
    dx = x - math.fsum(x.tolist()) / x.size
    dy = y - math.fsum(y.tolist()) / y.size
    sxy = math.fsum((dx * dy).tolist())
    sxx = math.fsum((dx * dx).tolist())
    syy = math.fsum((dy * dy).tolist())
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class CorrelationMatrix:
    """Symmetric matrix of pairwise Pearson r; NaN marks an undefined cell"""
    columns: List[str]
    values: np.ndarray


def correlation_matrix(table: JoinedTable) -> CorrelationMatrix:
    if len(table) < 2:
        raise AnalysisError(f"correlation needs at least 2 joined blocks, got {len(table)}")
    k = len(table.columns)
    values = np.full((k, k), np.nan)
    for i in range(k):
        values[i, i] = 1.0
        for j in range(i + 1, k):
            r = pearson(table.values[:, i], table.values[:, j])
            if r is not None:
                values[i, j] = values[j, i] = r
    return CorrelationMatrix(columns=list(table.columns), values=values)


@dataclass
class TrendSummary:
    """Mean block K3 of the buildings in each class, with a least-squares line over class rank"""
    attribute: str
    classes: List[str]
    means: List[Optional[float]]
    counts: List[int]
    slope: Optional[float] = None
    intercept: Optional[float] = None

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {
                'attribute': self.attribute,
                'class': value,
                'mean_k3': mean,
                'n': count,
                'slope': self.slope,
                'intercept': self.intercept,
            }
            for value, mean, count in zip(self.classes, self.means, self.counts)
        ]


def class_k3_trend(buildings: Sequence[BuildingAttributeRecord], blocks: Sequence[BlockK3],
                   attribute: str, class_order: Optional[Sequence[str]] = None) -> TrendSummary:
    """Each building takes its block's K3; classes outside class_order are ignored"""
    order = list(class_order if class_order is not None else TREND_ORDER[attribute])
    k3_by_block = {b.block_id: b.k3 for b in blocks}
    inherited: Dict[str, List[float]] = {value: [] for value in order}
    orphans = 0
    for building in buildings:
        if building.block_id not in k3_by_block:
            orphans += 1
            continue
        value = building.classes[attribute]
        if value in inherited:
            inherited[value].append(k3_by_block[building.block_id])
    if orphans:
        logger.warning(f"{orphans} buildings sit in blocks without a K3 value")

    means: List[Optional[float]] = []
    counts = []
    ranks, fitted = [], []
    for rank, value in enumerate(order):
        samples = inherited[value]
        counts.append(len(samples))
        if not samples:
            means.append(None)
            continue
        mean = math.fsum(samples) / len(samples)
        means.append(mean)
        ranks.append(float(rank))
        fitted.append(mean)

    slope = intercept = None
    if len(ranks) >= 2:
        slope, intercept = (float(c) for c in np.polyfit(ranks, fitted, 1))
    return TrendSummary(attribute, order, means, counts, slope, intercept)


@dataclass
class Histogram:
    """Equal-width bin counts over [lo, hi] plus values that fell outside"""
    edges: List[float]
    counts: List[int]
    below: int = 0
    above: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts) + self.below + self.above

    def rows(self) -> List[Dict[str, Any]]:
        return [{'bin_lo': self.edges[i], 'bin_hi': self.edges[i + 1], 'count': count}
                for i, count in enumerate(self.counts)]


def histogram(values: Sequence[float], lo: float = 1.0, hi: float = 3.0, bins: int = 8) -> Histogram:
    """Interior edges belong to the upper bin; the last bin includes hi"""
    if bins < 1:
        raise AnalysisError(f"histogram needs at least one bin, got {bins}")
    if not lo < hi:
        raise AnalysisError(f"histogram range needs lo < hi, got [{lo}, {hi}]")
    data = np.asarray(values, dtype=float)
    inside = data[(data >= lo) & (data <= hi)]
    counts, edges = np.histogram(inside, bins=bins, range=(lo, hi))
    return Histogram(
        edges=[float(e) for e in edges],
        counts=[int(c) for c in counts],
        below=int(np.sum(data < lo)),
        above=int(np.sum(data > hi)),
    )


def histogram_by_region(blocks: Sequence[BlockK3], lo: float = 1.0, hi: float = 3.0,
                        bins: int = 8) -> List[Dict[str, Any]]:
    """Block K3 histogram per region (blocks without a region under '')"""
    grouped: Dict[str, List[float]] = {}
    for block in blocks:
        grouped.setdefault(block.region or '', []).append(block.k3)
    rows = []
    for region, values in sorted(grouped.items()):
        for row in histogram(values, lo, hi, bins).rows():
            rows.append({'region': region, **row})
    return rows


@dataclass
class CorrelationResult:
    """Everything the correlate stage produces"""
    profiles: List[BlockProfile]
    table: JoinedTable
    matrix: CorrelationMatrix
    trends: List[TrendSummary]
    histogram: Histogram
    region_histograms: List[Dict[str, Any]] = field(default_factory=list)


def correlate(buildings: Sequence[BuildingAttributeRecord], blocks: Sequence[BlockK3],
              lo: float = 1.0, hi: float = 3.0, bins: int = 8) -> CorrelationResult:
    profiles = block_profile(buildings)
    table = join_tables(blocks, profiles)
    matrix = correlation_matrix(table)
    trends = [class_k3_trend(buildings, blocks, name) for name in ATTRIBUTE_NAMES]
    hist = histogram([b.k3 for b in blocks], lo, hi, bins)
    logger.info(f"Joined {len(table)} blocks ({len(profiles)} with buildings, {len(blocks)} with K3)")
    return CorrelationResult(
        profiles=profiles,
        table=table,
        matrix=matrix,
        trends=trends,
        histogram=hist,
        region_histograms=histogram_by_region(blocks, lo, hi, bins),
    )
