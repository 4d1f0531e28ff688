"""
Evaluation - Matches predicted building instances to annotations and scores the attribute classifiers
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon
from shapely.validation import make_valid

from models.detection import AnnotatedInstance, BoundingBox, DetectionRecord, Point2D
from models.errors import AnalysisError
from models.taxonomy import ATTRIBUTE_NAMES, class_names

logger = logging.getLogger('streetk3.evaluation')

DEFAULT_IOU_THRESHOLD = 0.75


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two pixel rectangles"""
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def mask_iou(a: Sequence[Point2D], b: Sequence[Point2D]) -> float:
    """Intersection over union of two polygon masks"""
    pa, pb = make_valid(Polygon(a)), make_valid(Polygon(b))
    union = pa.union(pb).area
    if union <= 0.0:
        return 0.0
    return min(1.0, pa.intersection(pb).area / union)


def instance_iou(pred: DetectionRecord, truth: AnnotatedInstance, use_masks: bool = False) -> float:
    """Mask IoU when asked for and both sides carry a mask, box IoU otherwise"""
    if use_masks and pred.mask is not None and truth.mask is not None:
        return mask_iou(pred.mask, truth.mask)
    return iou(pred.bbox, truth.bbox)


@dataclass(frozen=True)
class MatchedPair:
    """One prediction matched to one annotation, with both label sets"""
    prediction: int
    truth: int
    iou: float
    predicted: Dict[str, str] = field(default_factory=dict)
    actual: Dict[str, str] = field(default_factory=dict)


@dataclass
class MatchSet:
    """One-to-one matching between predictions and truths (indices into the input lists)"""
    pairs: List[MatchedPair]
    unmatched_predictions: List[int]
    unmatched_truths: List[int]
    threshold: float = DEFAULT_IOU_THRESHOLD

    def __len__(self) -> int:
        return len(self.pairs)


def _match_image(preds: Sequence[Tuple[int, DetectionRecord]], truths: Sequence[Tuple[int, AnnotatedInstance]],
                 threshold: float, use_masks: bool) -> List[MatchedPair]:
    """Greedy matching within one image: highest IoU first, ties by (truth, prediction) index"""
    candidates = []
    for p_index, pred in preds:
        for t_index, truth in truths:
            overlap = instance_iou(pred, truth, use_masks)
            if overlap > threshold:
                candidates.append((-overlap, t_index, p_index))
    candidates.sort()

    used_preds, used_truths = set(), set()
    pairs = []
    by_pred = dict(preds)
    by_truth = dict(truths)
    for neg_overlap, t_index, p_index in candidates:
        if p_index in used_preds or t_index in used_truths:
            continue
        used_preds.add(p_index)
        used_truths.add(t_index)
        pred = by_pred[p_index]
        pairs.append(MatchedPair(
            prediction=p_index,
            truth=t_index,
            iou=-neg_overlap,
            predicted={name: pred.attributes[name].value for name in ATTRIBUTE_NAMES},
            actual=dict(by_truth[t_index].labels),
        ))
    return pairs


def match_instances(preds: Sequence[DetectionRecord], truths: Sequence[AnnotatedInstance],
                    threshold: float = DEFAULT_IOU_THRESHOLD, use_masks: bool = False,
                    threads: int = 1) -> MatchSet:
    """Per-image greedy one-to-one matching at IoU strictly above threshold"""
    images: Dict[str, Tuple[list, list]] = {}
    for i, pred in enumerate(preds):
        images.setdefault(pred.image_id, ([], []))[0].append((i, pred))
    for j, truth in enumerate(truths):
        images.setdefault(truth.image_id, ([], []))[1].append((j, truth))

    groups = [images[key] for key in sorted(images)]

    def run(group):
        return _match_image(group[0], group[1], threshold, use_masks)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(run, groups))
    else:
        per_image = [run(group) for group in groups]

    pairs = sorted((pair for image_pairs in per_image for pair in image_pairs), key=lambda p: p.prediction)
    matched_preds = {p.prediction for p in pairs}
    matched_truths = {p.truth for p in pairs}
    return MatchSet(
        pairs=pairs,
        unmatched_predictions=[i for i in range(len(preds)) if i not in matched_preds],
        unmatched_truths=[j for j in range(len(truths)) if j not in matched_truths],
        threshold=threshold,
    )


@dataclass
class AttributeMetrics:
    """Confusion matrix (truth rows x predicted columns) and scores for one attribute"""
    attribute: str
    classes: List[str]
    confusion: np.ndarray
    accuracy: float
    f1_macro: float
    per_class: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'classes': list(self.classes),
            'confusion': self.confusion.tolist(),
            'accuracy': self.accuracy,
            'f1_macro': self.f1_macro,
            'per_class': self.per_class,
        }


def attribute_metrics(matches: MatchSet, attribute: str) -> AttributeMetrics:
    """Accuracy and macro F1 of one attribute over the matched pairs"""
    if not matches.pairs:
        raise AnalysisError(f"cannot score '{attribute}': no matched instance pairs")
    classes = class_names(attribute)
    position = {name: i for i, name in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for pair in matches.pairs:
        confusion[position[pair.actual[attribute]], position[pair.predicted[attribute]]] += 1

    total = int(confusion.sum())
    accuracy = int(np.trace(confusion)) / total

    per_class: Dict[str, Dict[str, float]] = {}
    f1_scores = []
    for i, name in enumerate(classes):
        tp = int(confusion[i, i])
        support = int(confusion[i].sum())
        predicted = int(confusion[:, i].sum())
        if support == 0 and predicted == 0:
            continue
        fp, fn = predicted - tp, support - tp
        f1 = 2 * tp / (2 * tp + fp + fn)
        f1_scores.append(f1)
        per_class[name] = {
            'precision': tp / predicted if predicted else 0.0,
            'recall': tp / support if support else 0.0,
            'f1': f1,
            'support': support,
        }

    return AttributeMetrics(
        attribute=attribute,
        classes=classes,
        confusion=confusion,
        accuracy=accuracy,
        f1_macro=math.fsum(f1_scores) / len(f1_scores),
        per_class=per_class,
    )


@dataclass
class EvalReport:
    """Detection-level and per-attribute scores"""
    threshold: float
    use_masks: bool
    n_predictions: int
    n_truths: int
    n_matched: int
    attributes: Dict[str, AttributeMetrics]

    @property
    def precision(self) -> float:
        return self.n_matched / self.n_predictions if self.n_predictions else 0.0

    @property
    def recall(self) -> float:
        return self.n_matched / self.n_truths if self.n_truths else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iou_threshold': self.threshold,
            'mask_iou': self.use_masks,
            'detection': {
                'n_predictions': self.n_predictions,
                'n_truths': self.n_truths,
                'n_matched': self.n_matched,
                'precision': self.precision,
                'recall': self.recall,
            },
            'attributes': {name: metrics.to_dict() for name, metrics in self.attributes.items()},
        }


def evaluate(preds: Sequence[DetectionRecord], truths: Sequence[AnnotatedInstance],
             threshold: float = DEFAULT_IOU_THRESHOLD, use_masks: bool = False,
             threads: int = 1) -> EvalReport:
    """Match instances and score every attribute"""
    matches = match_instances(preds, truths, threshold, use_masks, threads)
    logger.info(f"Matched {len(matches)} of {len(preds)} predictions to {len(truths)} annotations "
                f"at IoU > {threshold:g}")
    if matches.unmatched_truths:
        logger.warning(f"{len(matches.unmatched_truths)} annotations have no matching prediction")
    attributes = {name: attribute_metrics(matches, name) for name in ATTRIBUTE_NAMES}
    for name, metrics in attributes.items():
        logger.info(f"{name}: accuracy {metrics.accuracy:.4f}, macro F1 {metrics.f1_macro:.4f}")
    return EvalReport(
        threshold=threshold,
        use_masks=use_masks,
        n_predictions=len(preds),
        n_truths=len(truths),
        n_matched=len(matches),
        attributes=attributes,
    )
