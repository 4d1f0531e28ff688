"""
K3 index - Household vulnerability clustering from census microdata

Households are standardized to [0, 1], compared with the Gower dissimilarity,
partitioned into three clusters with PAM k-medoids, ordered from most to least
vulnerable, checked with one-way ANOVA, and averaged per census block.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.census import CensusSchema, HouseholdRecord, Polarity, VariableKind
from models.errors import AnalysisError, InputError

logger = logging.getLogger('streetk3.k3')

N_CLUSTERS = 3
MAX_HOUSEHOLDS = 100_000
DEFAULT_EXHAUSTIVE_LIMIT = 2300
DEFAULT_ANOVA_THRESHOLD = 3.0
SWAP_TOLERANCE = 1e-12
MAX_SWAP_ITERATIONS = 10_000


@dataclass
class StandardizedMatrix:
    """Households x variables in [0, 1] (NaN = missing); higher always means better off"""
    household_ids: List[str]
    block_ids: List[str]
    columns: List[str]
    values: np.ndarray
    dropped: List[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass
class AnovaResult:
    """One-way ANOVA outcome; f is math.inf when within-group variance vanishes"""
    f: float
    df_between: int
    df_within: int
    infinite: bool = False


@dataclass
class ClusterAssignment:
    """Partition of households into three clusters.

    raw holds the cluster id (0..2, ordered by medoid index) of each household;
    labels, once ordered, hold the K3 label 1 (most vulnerable) .. 3.
    """
    raw: np.ndarray
    medoids: Tuple[int, ...]
    objective: float
    trace: List[float] = field(default_factory=list)
    seed: int = 0
    labels: Optional[np.ndarray] = None
    label_of_raw: Dict[int, int] = field(default_factory=dict)
    welfare: Dict[int, float] = field(default_factory=dict)
    anova: Dict[str, Optional[AnovaResult]] = field(default_factory=dict)

    @property
    def sizes(self) -> Dict[int, int]:
        return {c: int(np.sum(self.raw == c)) for c in range(len(self.medoids))}


@dataclass(frozen=True)
class BlockK3:
    """K3 value of a census block: mean household label, in [1, 3]"""
    block_id: str
    k3: float
    n_households: int
    region: Optional[str] = None


@dataclass
class K3Result:
    """Everything the K3 stage produces"""
    matrix: StandardizedMatrix
    assignment: ClusterAssignment
    blocks: List[BlockK3]
    diagnostics: Dict[str, Any]


def rescale_columns(values: np.ndarray, names: Sequence[str],
                    flip: Sequence[bool]) -> Tuple[np.ndarray, List[str], List[str]]:
    """Min-max rescale each column over its observed cells, flipping where asked.

    Returns the kept matrix, kept names and dropped (constant) names.
    """
    values = np.asarray(values, dtype=float)
    kept_columns, kept, dropped = [], [], []
    for j, name in enumerate(names):
        column = values[:, j]
        observed = column[~np.isnan(column)]
        if observed.size == 0:
            raise AnalysisError(f"variable '{name}' has no observed value")
        lo, hi = observed.min(), observed.max()
        if hi == lo:
            logger.warning(f"Dropping constant variable '{name}' (every household = {lo:g})")
            dropped.append(name)
            continue
        scaled = (column - lo) / (hi - lo)
        if flip[j]:
            scaled = 1.0 - scaled
        kept_columns.append(scaled)
        kept.append(name)
    if kept_columns:
        matrix = np.column_stack(kept_columns)
    else:
        matrix = np.empty((values.shape[0], 0))
    return matrix, kept, dropped


def standardize(records: Sequence[HouseholdRecord], schema: CensusSchema) -> StandardizedMatrix:
    """Map every variable to [0, 1] with higher = less vulnerable"""
    if not records:
        raise AnalysisError("no households to standardize")
    raw = np.array([[np.nan if v is None else v for v in r.values] for r in records], dtype=float)
    if raw.shape[1] != len(schema):
        raise AnalysisError(f"households have {raw.shape[1]} values but the schema has {len(schema)}")
    for j, variable in enumerate(schema.variables):
        if variable.kind is VariableKind.PERCENTAGE:
            raw[:, j] = raw[:, j] / 100.0
    flip = [v.polarity is Polarity.HIGHER_IS_WORSE for v in schema.variables]
    values, kept, dropped = rescale_columns(raw, schema.names, flip)
    return StandardizedMatrix(
        household_ids=[r.household_id for r in records],
        block_ids=[r.block_id for r in records],
        columns=kept,
        values=values,
        dropped=dropped,
    )


def gower(matrix, threads: int = 1, allow_large: bool = False) -> np.ndarray:
    """Gower dissimilarity: mean absolute difference over mutually observed variables"""
    values = matrix.values if isinstance(matrix, StandardizedMatrix) else np.asarray(matrix, dtype=float)
    n, k = values.shape
    if k == 0:
        raise AnalysisError("Gower dissimilarity needs at least one variable")
    if n > MAX_HOUSEHOLDS and not allow_large:
        raise AnalysisError(f"{n} households exceed the {MAX_HOUSEHOLDS} limit of the N x N "
                            f"dissimilarity matrix; pass --allow-large to proceed")

    observed = ~np.isnan(values)
    filled = np.where(observed, values, 0.0)
    as_float = observed.astype(float)
    counts = as_float @ as_float.T
    if np.any(counts == 0):
        i, j = (int(v) for v in np.argwhere(counts == 0)[0])
        raise AnalysisError(f"households {i} and {j} share no observed variable")

    out = np.empty((n, n), dtype=float)
    rows_per_block = max(1, 2_000_000 // max(1, n * k))

    def fill(start: int) -> None:
        stop = min(start + rows_per_block, n)
        diff = np.abs(filled[start:stop, None, :] - filled[None, :, :])
        diff *= observed[start:stop, None, :] & observed[None, :, :]
        out[start:stop] = diff.sum(axis=2) / counts[start:stop]

    starts = range(0, n, rows_per_block)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    else:
        for start in starts:
            fill(start)
    np.fill_diagonal(out, 0.0)
    return out


def pam_objective(d: np.ndarray, medoids: Sequence[int]) -> float:
    return float(d[list(medoids)].min(axis=0).sum())


def _build(d: np.ndarray, k: int) -> List[int]:
    """PAM BUILD: greedy medoids, each maximizing the reduction in total cost"""
    first = int(np.argmin(d.sum(axis=1)))
    medoids = [first]
    nearest = d[first].copy()
    for _ in range(1, k):
        gains = np.maximum(nearest[None, :] - d, 0.0).sum(axis=1)
        gains[medoids] = -np.inf
        chosen = int(np.argmax(gains))
        medoids.append(chosen)
        nearest = np.minimum(nearest, d[chosen])
    return medoids


def _best_swap(d: np.ndarray, medoids: List[int], threads: int) -> Tuple[float, int, int]:
    """Best (delta, slot, candidate) over all medoid/non-medoid exchanges"""
    n = d.shape[0]
    k = len(medoids)
    dm = d[medoids]
    order = np.argsort(dm, axis=0, kind='stable')
    columns = np.arange(n)
    nearest_slot = order[0]
    nearest = dm[order[0], columns]
    second = dm[order[1], columns]
    current = nearest.sum()

    candidates = np.setdiff1d(columns, medoids)
    chunk = max(1, 4_000_000 // max(1, n))

    def evaluate(slot: int) -> Tuple[float, int, int]:
        without = np.where(nearest_slot == slot, second, nearest)
        best = (math.inf, medoids[slot], -1)
        for start in range(0, candidates.size, chunk):
            block = candidates[start:start + chunk]
            costs = np.minimum(without[None, :], d[block]).sum(axis=1)
            pos = int(np.argmin(costs))
            delta = float(costs[pos] - current)
            key = (delta, medoids[slot], int(block[pos]))
            if key < best:
                best = key
        return best

    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, k)) as pool:
            results = list(pool.map(evaluate, range(k)))
    else:
        results = [evaluate(slot) for slot in range(k)]
    delta, medoid, candidate = min(results)
    return delta, medoids.index(medoid), candidate


def _exhaustive(d: np.ndarray, k: int) -> Tuple[List[int], float]:
    combos = np.array(list(itertools.combinations(range(d.shape[0]), k)), dtype=int)
    nearest = d[combos[:, 0]]
    for col in range(1, k):
        nearest = np.minimum(nearest, d[combos[:, col]])
    costs = nearest.sum(axis=1)
    best = int(np.argmin(costs))
    return [int(i) for i in combos[best]], float(costs[best])


def assign_to_medoids(d: np.ndarray, medoids: Sequence[int]) -> np.ndarray:
    """Nearest-medoid cluster ids; medoids keep their own cluster, ties go to the lower id"""
    raw = np.argmin(d[list(medoids)], axis=0)
    for slot, medoid in enumerate(medoids):
        raw[medoid] = slot
    return raw


def cluster_k3(d: np.ndarray, seed: int = 0, threads: int = 1,
               exhaustive_limit: int = DEFAULT_EXHAUSTIVE_LIMIT) -> ClusterAssignment:
    """PAM k-medoids with k = 3 (BUILD, then SWAP until no exchange lowers the cost).

    Ties are resolved by lowest index, so the result is a function of d alone;
    the seed is carried for the run record.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if d.ndim != 2 or d.shape[1] != n:
        raise AnalysisError("dissimilarity matrix must be square")
    if n < N_CLUSTERS:
        raise AnalysisError(f"clustering needs at least {N_CLUSTERS} households, got {n}")

    medoids = _build(d, N_CLUSTERS)
    cost = pam_objective(d, medoids)
    trace = [cost]
    logger.debug(f"PAM BUILD medoids={medoids} objective={cost:.6f}")

    for iteration in range(MAX_SWAP_ITERATIONS):
        delta, slot, candidate = _best_swap(d, medoids, threads)
        if not delta < -SWAP_TOLERANCE * max(1.0, cost):
            break
        medoids[slot] = candidate
        cost = pam_objective(d, medoids)
        trace.append(cost)
        logger.debug(f"PAM SWAP {iteration + 1}: medoids={medoids} objective={cost:.6f}")

    if math.comb(n, N_CLUSTERS) <= exhaustive_limit:
        exact, exact_cost = _exhaustive(d, N_CLUSTERS)
        if exact_cost < cost - SWAP_TOLERANCE * max(1.0, cost):
            logger.debug(f"Exhaustive search improved PAM objective {cost:.6f} -> {exact_cost:.6f}")
            medoids, cost = exact, pam_objective(d, exact)
            trace.append(cost)

    medoids = sorted(medoids)
    return ClusterAssignment(
        raw=assign_to_medoids(d, medoids),
        medoids=tuple(medoids),
        objective=cost,
        trace=trace,
        seed=seed,
    )


def order_clusters(assignment: ClusterAssignment, matrix: StandardizedMatrix) -> ClusterAssignment:
    """Label clusters 1..3 by ascending mean standardized welfare.

    Ties: the larger cluster gets the lower label, then the lower medoid index.
    """
    n_clusters = len(assignment.medoids)
    welfare: Dict[int, float] = {}
    sizes = assignment.sizes
    for c in range(n_clusters):
        cells = matrix.values[assignment.raw == c]
        cells = cells[~np.isnan(cells)]
        welfare[c] = math.fsum(cells.tolist()) / cells.size if cells.size else 0.0

    order = sorted(range(n_clusters), key=lambda c: (welfare[c], -sizes[c], assignment.medoids[c]))
    label_of_raw = {c: rank + 1 for rank, c in enumerate(order)}
    labels = np.array([label_of_raw[int(c)] for c in assignment.raw], dtype=int)

    return ClusterAssignment(
        raw=assignment.raw,
        medoids=assignment.medoids,
        objective=assignment.objective,
        trace=list(assignment.trace),
        seed=assignment.seed,
        labels=labels,
        label_of_raw=label_of_raw,
        welfare=welfare,
        anova=dict(assignment.anova),
    )


def _exact_mean(x: np.ndarray) -> float:
    if x.size and x.max() == x.min():
        return float(x[0])
    return math.fsum(x.tolist()) / x.size


def anova_f(values: Sequence[float], groups: Sequence[Any]) -> AnovaResult:
    """One-way ANOVA F = [SSB / (k - 1)] / [SSW / (N - k)]"""
    x = np.asarray(values, dtype=float)
    g = np.asarray(groups)
    if x.shape != g.shape:
        raise AnalysisError("values and groups differ in length")
    levels = sorted(set(g.tolist()))
    k, n = len(levels), x.size
    if k < 2:
        raise AnalysisError(f"ANOVA needs at least 2 groups, got {k}")
    if n <= k:
        raise AnalysisError(f"ANOVA needs more values ({n}) than groups ({k})")

    grand = _exact_mean(x)
    ssb_terms, ssw_terms = [], []
    for level in levels:
        member = x[g == level]
        mean = _exact_mean(member)
        ssb_terms.append(member.size * (mean - grand) ** 2)
        ssw_terms.extend(((member - mean) ** 2).tolist())
    ssb = math.fsum(ssb_terms)
    ssw = math.fsum(ssw_terms)
    df_between, df_within = k - 1, n - k

    if ssw == 0.0:
        if ssb == 0.0:
            return AnovaResult(0.0, df_between, df_within)
        return AnovaResult(math.inf, df_between, df_within, infinite=True)
    return AnovaResult((ssb / df_between) / (ssw / df_within), df_between, df_within)


def cluster_anova(assignment: ClusterAssignment,
                  matrix: StandardizedMatrix) -> Dict[str, Optional[AnovaResult]]:
    """Per-variable ANOVA across the clusters (None where the test is undefined)"""
    groups = assignment.labels if assignment.labels is not None else assignment.raw
    results: Dict[str, Optional[AnovaResult]] = {}
    for j, name in enumerate(matrix.columns):
        column = matrix.values[:, j]
        observed = ~np.isnan(column)
        try:
            results[name] = anova_f(column[observed], groups[observed])
        except AnalysisError as e:
            logger.debug(f"ANOVA skipped for '{name}': {e}")
            results[name] = None
    return results


def block_k3(assignment: ClusterAssignment, households: Sequence[HouseholdRecord]) -> List[BlockK3]:
    """Mean household label per block, sorted by block id"""
    if assignment.labels is None:
        raise AnalysisError("clusters must be ordered before block averaging")
    if len(households) != len(assignment.labels):
        raise AnalysisError("households and cluster labels differ in length")

    members: Dict[str, List[int]] = {}
    regions: Dict[str, Optional[str]] = {}
    for household, label in zip(households, assignment.labels.tolist()):
        members.setdefault(household.block_id, []).append(label)
        if household.block_id not in regions:
            regions[household.block_id] = household.region
        elif regions[household.block_id] != household.region:
            raise InputError(f"block {household.block_id!r} spans regions "
                             f"{regions[household.block_id]!r} and {household.region!r}",
                             field='region')

    return [
        BlockK3(block_id, math.fsum(labels) / len(labels), len(labels), regions[block_id])
        for block_id, labels in sorted(members.items())
    ]


def region_summary(blocks: Sequence[BlockK3], vulnerable_below: float = 1.5) -> List[Dict[str, Any]]:
    """Per-region block statistics; blocks without a region are grouped under ''"""
    grouped: Dict[str, List[BlockK3]] = {}
    for block in blocks:
        grouped.setdefault(block.region or '', []).append(block)
    rows = []
    for region, members in sorted(grouped.items()):
        rows.append({
            'region': region,
            'n_blocks': len(members),
            'n_households': sum(b.n_households for b in members),
            'mean_k3': math.fsum(b.k3 for b in members) / len(members),
            'share_vulnerable': sum(b.k3 < vulnerable_below for b in members) / len(members),
        })
    return rows


def diagnostics(result_matrix: StandardizedMatrix, assignment: ClusterAssignment,
                anova_threshold: float) -> Dict[str, Any]:
    """Summary written to k3_diagnostics.json (clusters listed by label)"""
    by_label = sorted(assignment.label_of_raw.items(), key=lambda item: item[1])
    sizes = assignment.sizes
    anova_rows = []
    finite_or_inf = []
    for name, res in assignment.anova.items():
        if res is None:
            anova_rows.append({'variable': name, 'f': None, 'f_infinite': False,
                               'df_between': None, 'df_within': None})
            continue
        finite_or_inf.append(res.f)
        anova_rows.append({
            'variable': name,
            'f': None if res.infinite else res.f,
            'f_infinite': res.infinite,
            'df_between': res.df_between,
            'df_within': res.df_within,
        })
    above = sum(f > anova_threshold for f in finite_or_inf)
    min_f = min(finite_or_inf) if finite_or_inf else None
    return {
        'n_households': result_matrix.n_rows,
        'n_variables': result_matrix.n_cols,
        'dropped_columns': list(result_matrix.dropped),
        'seed': assignment.seed,
        'objective': assignment.objective,
        'swap_trace': list(assignment.trace),
        'clusters': [
            {
                'label': label,
                'medoid_index': assignment.medoids[raw],
                'medoid_household': result_matrix.household_ids[assignment.medoids[raw]],
                'size': sizes[raw],
                'welfare': assignment.welfare.get(raw),
            }
            for raw, label in by_label
        ],
        'anova': anova_rows,
        'anova_threshold': anova_threshold,
        'anova_min_f': None if min_f is None or math.isinf(min_f) else min_f,
        'anova_min_f_infinite': min_f is not None and math.isinf(min_f),
        'anova_fraction_above_threshold': above / len(finite_or_inf) if finite_or_inf else None,
    }


def compute_k3(records: Sequence[HouseholdRecord], schema: CensusSchema, seed: int = 0,
               anova_threshold: float = DEFAULT_ANOVA_THRESHOLD, threads: int = 1,
               allow_large: bool = False,
               exhaustive_limit: int = DEFAULT_EXHAUSTIVE_LIMIT) -> K3Result:
    """Standardize, cluster, order, validate and average households into block K3 values"""
    if len(records) > MAX_HOUSEHOLDS and not allow_large:
        raise AnalysisError(f"{len(records)} households exceed the {MAX_HOUSEHOLDS} limit; "
                            f"pass --allow-large to proceed")
    matrix = standardize(records, schema)
    logger.info(f"Standardized {matrix.n_rows} households over {matrix.n_cols} variables "
                f"({len(matrix.dropped)} dropped)")

    d = gower(matrix, threads=threads, allow_large=allow_large)
    raw = cluster_k3(d, seed=seed, threads=threads, exhaustive_limit=exhaustive_limit)
    del d
    assignment = order_clusters(raw, matrix)
    assignment.anova = cluster_anova(assignment, matrix)
    blocks = block_k3(assignment, records)
    report = diagnostics(matrix, assignment, anova_threshold)

    fraction = report['anova_fraction_above_threshold']
    if fraction is not None and fraction < 1.0:
        logger.warning(f"Only {fraction:.0%} of variables separate the clusters with F > {anova_threshold:g}")
    logger.info(f"Clustered {matrix.n_rows} households into sizes "
                f"{[c['size'] for c in report['clusters']]}; {len(blocks)} blocks")
    return K3Result(matrix=matrix, assignment=assignment, blocks=blocks, diagnostics=report)


def load_blocks_k3(path: str) -> List[BlockK3]:
    """Read a blocks_k3.csv artifact written by the k3 stage"""
    try:
        frame = pd.read_csv(path, dtype={'block_id': str, 'region': str}, keep_default_na=False)
    except FileNotFoundError:
        raise InputError("cannot read file: not found", path=path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise InputError(f"malformed CSV ({e})", path=path)
    for column in ('block_id', 'k3', 'n_households'):
        if column not in frame.columns:
            raise InputError("missing column", path=path, field=column)

    blocks = []
    for offset, row in enumerate(frame.to_dict('records')):
        try:
            k3 = float(row['k3'])
            n_households = int(row['n_households'])
        except (TypeError, ValueError):
            raise InputError("k3 and n_households must be numeric", path=path, line=offset + 2)
        if not 1.0 <= k3 <= 3.0:
            raise InputError(f"k3 {k3} outside [1, 3]", path=path, line=offset + 2, field='k3')
        region = str(row.get('region') or '') or None
        blocks.append(BlockK3(str(row['block_id']), k3, n_households, region))
    logger.info(f"Loaded {len(blocks)} block K3 values from {path}")
    return blocks
