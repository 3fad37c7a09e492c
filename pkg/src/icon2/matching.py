"""Detection matching, precision/recall curves, count-normalized AP, per-group
AP sweeps and bootstrap intervals.

Matching is greedy per image in descending confidence. Equal confidences are
ordered by box coordinates and then input index, so the outcome does not depend
on the order detections arrive in. PR points are taken at each distinct
confidence value: tied detections enter the curve together.

Precision at a cut uses the group-size normalization

    P = R*N / (R*N + F)  ==  TP*N / (TP*N + F*N_i)

where ``N`` (``n_bar``) replaces the group's own positive count ``N_i``. The
right-hand form is what gets evaluated; with integer ``N`` it is bitwise equal
to plain ``TP / (TP + F)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .data_model import (
    UNKNOWN,
    AttributeLevel,
    BBox,
    Dataset,
    DetectionInstance,
    GroundTruthInstance,
    Identifier,
    id_key,
    resolve_attribute,
)
from .errors import Icon2Error, UndefinedAPError

TP, FP, IGNORED = "TP", "FP", "ignored"
INTERPOLATIONS = ("all-points", "101-point")
TIEBREAK_RULE = "confidence desc, then image_id, box (x_min, y_min, x_max, y_max), input index"


class InsufficientDataError(Icon2Error):
    """Too few images to resample."""


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5
    interpolation: str = "all-points"
    score_tiebreak: str = TIEBREAK_RULE
    min_support: int = 50

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        aliases = {"all": "all-points", "101": "101-point"}
        object.__setattr__(self, "interpolation", aliases.get(self.interpolation, self.interpolation))
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        if self.min_support < 0:
            raise ValueError("min_support must be non-negative")


@dataclass(frozen=True)
class MatchResult:
    detections: Tuple[DetectionInstance, ...]
    labels: Tuple[str, ...]
    matched_gt: Tuple[Optional[Identifier], ...]
    num_positives: int

    @property
    def tp_count(self) -> int:
        return sum(1 for lab in self.labels if lab == TP)


@dataclass(frozen=True)
class PRCurve:
    recall: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    confidence: np.ndarray
    n_i: int

    @property
    def empty(self) -> bool:
        return self.n_i == 0 or self.tp.size == 0

    @property
    def points(self) -> List[Tuple[float, int, int, float]]:
        return list(zip(self.recall.tolist(), self.tp.tolist(), self.fp.tolist(),
                        self.confidence.tolist()))


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    level: float

    @property
    def half_width(self) -> float:
        return (self.high - self.low) / 2.0


@dataclass
class APResult:
    class_id: Identifier
    attribute: str
    value: str
    ap: Optional[float]
    n_i: int
    n_bar: Optional[float]
    images_used: int
    ci: Optional[ConfidenceInterval] = None
    reliable: bool = True
    status: str = "ok"
    note: Optional[str] = None

    @property
    def defined(self) -> bool:
        return self.ap is not None

    @property
    def ap_pp(self) -> Optional[float]:
        return None if self.ap is None else 100.0 * self.ap


# -- geometry -----------------------------------------------------------------


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two corner-form boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _iou_matrix(det_boxes: np.ndarray, gt_boxes: np.ndarray) -> np.ndarray:
    x0 = np.maximum(det_boxes[:, None, 0], gt_boxes[None, :, 0])
    y0 = np.maximum(det_boxes[:, None, 1], gt_boxes[None, :, 1])
    x1 = np.minimum(det_boxes[:, None, 2], gt_boxes[None, :, 2])
    y1 = np.minimum(det_boxes[:, None, 3], gt_boxes[None, :, 3])
    inter = np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)
    area_d = (det_boxes[:, 2] - det_boxes[:, 0]) * (det_boxes[:, 3] - det_boxes[:, 1])
    area_g = (gt_boxes[:, 2] - gt_boxes[:, 0]) * (gt_boxes[:, 3] - gt_boxes[:, 1])
    union = area_d[:, None] + area_g[None, :] - inter
    return np.where(inter > 0, inter / union, 0.0)


def _det_key(d: DetectionInstance):
    return (-d.confidence, id_key(d.image_id), d.box.as_tuple(), d.index)


def _gt_key(g: GroundTruthInstance):
    return (g.box.as_tuple(), id_key(g.gt_id))


# -- per-image matching core --------------------------------------------------


class _ImageTable:
    """One image's ground truths and detections of one class, canonically
    ordered, with each detection's qualifying ground truths pre-sorted by
    descending IoU."""

    __slots__ = ("gts", "dets", "confs", "candidates")

    def __init__(self, gts: Sequence[GroundTruthInstance], dets: Sequence[DetectionInstance],
                 threshold: float):
        self.gts = sorted(gts, key=_gt_key)
        self.dets = sorted(dets, key=_det_key)
        self.confs = np.array([d.confidence for d in self.dets], dtype=float)
        self.candidates: List[List[int]] = []
        if self.gts and self.dets:
            m = _iou_matrix(np.array([d.box.as_tuple() for d in self.dets], dtype=float),
                            np.array([g.box.as_tuple() for g in self.gts], dtype=float))
            for row in m.tolist():
                # stable sort keeps canonical gt order among equal IoUs
                cands = [j for j, v in enumerate(row) if v >= threshold]
                cands.sort(key=lambda j: -row[j])
                self.candidates.append(cands)
        else:
            self.candidates = [[] for _ in self.dets]

    def match(self, ignore: Optional[Sequence[bool]]) -> Tuple[List[str], List[int]]:
        """Labels and matched gt positions (or -1), in canonical detection order."""
        matched = [False] * len(self.gts)
        labels: List[str] = []
        hits: List[int] = []
        for cands in self.candidates:
            pick_non, pick_ign = -1, -1
            for j in cands:
                if matched[j]:
                    continue
                if ignore is not None and ignore[j]:
                    if pick_ign < 0:
                        pick_ign = j
                else:
                    pick_non = j
                    break
            if pick_non >= 0:
                matched[pick_non] = True
                labels.append(TP)
                hits.append(pick_non)
            elif pick_ign >= 0:
                matched[pick_ign] = True
                labels.append(IGNORED)
                hits.append(pick_ign)
            else:
                labels.append(FP)
                hits.append(-1)
        return labels, hits


def match_detections(
    gts: Sequence[GroundTruthInstance],
    dets: Sequence[DetectionInstance],
    ignore_mask: Optional[Sequence[bool]] = None,
    cfg: MatchConfig = MatchConfig(),
) -> MatchResult:
    """Greedy matching of ``dets`` to ``gts`` (one class, any number of images).

    ``ignore_mask[k]`` marks ``gts[k]`` as ignored: it is never a positive, and a
    detection whose only qualifying overlap is an ignored ground truth is
    labelled ``ignored`` instead of FP.
    """
    if ignore_mask is None:
        ignore_mask = [False] * len(gts)
    if len(ignore_mask) != len(gts):
        raise ValueError("ignore_mask must align with gts")
    ignored_ids = {g.gt_id for g, flag in zip(gts, ignore_mask) if flag}
    by_image_g: Dict[Identifier, List[GroundTruthInstance]] = {}
    by_image_d: Dict[Identifier, List[DetectionInstance]] = {}
    for g in gts:
        by_image_g.setdefault(g.image_id, []).append(g)
    for d in dets:
        by_image_d.setdefault(d.image_id, []).append(d)

    outcome: List[Tuple[DetectionInstance, str, Optional[Identifier]]] = []
    for image_id in set(by_image_g) | set(by_image_d):
        table = _ImageTable(by_image_g.get(image_id, []), by_image_d.get(image_id, []),
                            cfg.iou_threshold)
        mask = [g.gt_id in ignored_ids for g in table.gts]
        labels, hits = table.match(mask)
        for d, lab, j in zip(table.dets, labels, hits):
            outcome.append((d, lab, table.gts[j].gt_id if j >= 0 else None))
    outcome.sort(key=lambda t: _det_key(t[0]))
    return MatchResult(
        detections=tuple(t[0] for t in outcome),
        labels=tuple(t[1] for t in outcome),
        matched_gt=tuple(t[2] for t in outcome),
        num_positives=len(gts) - len(ignored_ids),
    )


# -- curves and AP --------------------------------------------------------------


def _curve_arrays(conf: np.ndarray, is_tp: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative (TP, FP, confidence) at each distinct confidence cut."""
    order = np.argsort(-conf, kind="stable")
    conf = conf[order]
    hit = is_tp[order].astype(np.int64)
    ctp = np.cumsum(hit)
    cfp = np.arange(1, hit.size + 1, dtype=np.int64) - ctp
    last = np.ones(conf.size, dtype=bool)
    last[:-1] = conf[1:] != conf[:-1]
    return ctp[last], cfp[last], conf[last]


def pr_curve(match: MatchResult) -> PRCurve:
    """Cumulative counts over the confidence ordering; ignored detections do not count."""
    keep = [k for k, lab in enumerate(match.labels) if lab != IGNORED]
    n_i = match.num_positives
    conf = np.array([match.detections[k].confidence for k in keep], dtype=float)
    is_tp = np.array([match.labels[k] == TP for k in keep], dtype=bool)
    if n_i == 0 or conf.size == 0:
        empty = np.zeros(0)
        return PRCurve(empty, empty.astype(np.int64), empty.astype(np.int64), empty, n_i)
    ctp, cfp, cconf = _curve_arrays(conf, is_tp)
    return PRCurve(ctp / n_i, ctp, cfp, cconf, n_i)


def normalized_precision(recall: float, n_bar: float, false_pos: float) -> float:
    """``R*N / (R*N + F)``; 0 when R=0 and F>0, 1 when R>0 and F=0."""
    if n_bar <= 0:
        raise ValueError("n_bar must be positive")
    if false_pos == 0:
        return 1.0 if recall > 0 else 0.0
    rn = recall * n_bar
    return rn / (rn + false_pos)


def _precision(tp: np.ndarray, fp: np.ndarray, n_i: int, n_bar: float) -> np.ndarray:
    num = tp * float(n_bar)
    den = num + fp * float(n_i)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return p


def precision_curve(curve: PRCurve, n_bar: Optional[float] = None) -> np.ndarray:
    """Normalized precision at each cut of ``curve`` (before the envelope)."""
    if n_bar is None:
        n_bar = curve.n_i
    if n_bar <= 0:
        raise ValueError("n_bar must be positive")
    return _precision(curve.tp, curve.fp, curve.n_i, n_bar)


def _ap_from_counts(tp: np.ndarray, fp: np.ndarray, n_i: int, n_bar: float,
                    interpolation: str) -> float:
    prec = _precision(tp, fp, n_i, n_bar)
    # envelope: best precision at any recall >= this one
    env = np.maximum.accumulate(prec[::-1])[::-1]
    if interpolation == "all-points":
        recall = tp / n_i
        prev = np.concatenate(([0.0], recall[:-1]))
        return float(np.sum((recall - prev) * env))
    # 101-point: recall >= k/100  <=>  100*TP >= k*N_i, compared in integers
    targets = np.arange(101, dtype=np.int64) * n_i
    idx = np.searchsorted(100 * tp, targets, side="left")
    vals = np.where(idx < env.size, env[np.minimum(idx, env.size - 1)], 0.0)
    return float(np.sum(vals) / 101.0)


def average_precision(curve: PRCurve, n_bar: Optional[float] = None,
                      cfg: MatchConfig = MatchConfig()) -> float:
    """Area under the precision envelope, precision normalized with ``n_bar``.

    ``n_bar`` defaults to the curve's own positive count (plain AP).
    """
    if curve.empty:
        raise UndefinedAPError(
            f"AP undefined: {curve.n_i} positives, {curve.tp.size} scored cuts", n_i=curve.n_i
        )
    if n_bar is None:
        n_bar = curve.n_i
    if n_bar <= 0:
        raise ValueError("n_bar must be positive")
    return _ap_from_counts(curve.tp, curve.fp, curve.n_i, n_bar, cfg.interpolation)


# -- group filtering ------------------------------------------------------------

# A condition (attribute, value) restricts evaluation: for an image-level
# attribute it keeps only images holding that value; for an instance-level one
# it marks ground truths with any other value (including unknown) as ignored.
Condition = Tuple[str, str]


def _gt_values(dataset: Dataset, attr: str) -> Dict[Identifier, str]:
    key = ("gt_values", attr)
    cached = dataset._cache.get(key)
    if cached is None:
        cached = {g.gt_id: resolve_attribute(dataset, attr, g) for g in dataset.ground_truth}
        dataset._cache[key] = cached
    return cached


def _image_values(dataset: Dataset, attr: str) -> Dict[Identifier, str]:
    key = ("image_values", attr)
    cached = dataset._cache.get(key)
    if cached is None:
        values = dataset.schema(attr).values
        cached = {}
        for im in dataset.images:
            v = im.image_attributes.get(attr, UNKNOWN)
            cached[im.image_id] = v if v in values else UNKNOWN
        dataset._cache[key] = cached
    return cached


def _image_table(dataset: Dataset, class_id: Identifier, image_id: Identifier,
                 threshold: float) -> _ImageTable:
    key = ("table", class_id, image_id, threshold)
    table = dataset._cache.get(key)
    if table is None:
        table = _ImageTable(dataset.gt_by_image_class.get((image_id, class_id), []),
                            dataset.dets_by_image_class.get((image_id, class_id), []),
                            threshold)
        dataset._cache[key] = table
    return table


@dataclass
class CellEvaluation:
    """Matched detections of one evaluation cell, kept per image so the cell
    can be resampled by image."""

    image_ids: List[Identifier]
    conf: List[np.ndarray]
    is_tp: List[np.ndarray]
    n_pos: np.ndarray

    @property
    def n_i(self) -> int:
        return int(self.n_pos.sum())

    def curve(self) -> PRCurve:
        conf = np.concatenate(self.conf) if self.conf else np.zeros(0)
        is_tp = np.concatenate(self.is_tp) if self.is_tp else np.zeros(0, dtype=bool)
        n_i = self.n_i
        if n_i == 0 or conf.size == 0:
            empty = np.zeros(0)
            return PRCurve(empty, empty.astype(np.int64), empty.astype(np.int64), empty, n_i)
        ctp, cfp, cconf = _curve_arrays(conf, is_tp)
        return PRCurve(ctp / n_i, ctp, cfp, cconf, n_i)


def _split_conditions(dataset: Dataset, conditions: Sequence[Condition]):
    image_conds, inst_conds = [], []
    for attr, value in conditions:
        schema = dataset.schema(attr)
        if schema.level is AttributeLevel.IMAGE:
            image_conds.append((attr, value))
        else:
            inst_conds.append((attr, value))
    return image_conds, inst_conds


def cell_images(dataset: Dataset, class_id: Identifier, conditions: Sequence[Condition]) -> List[Identifier]:
    image_conds, _ = _split_conditions(dataset, conditions)
    lookups = [(_image_values(dataset, a), v) for a, v in image_conds]
    return [
        i for i in dataset.images_with_class(class_id)
        if all(table[i] == v for table, v in lookups)
    ]


def evaluate_cell(dataset: Dataset, class_id: Identifier, conditions: Sequence[Condition],
                  cfg: MatchConfig = MatchConfig()) -> CellEvaluation:
    """Match every image of the cell and collect scored detections."""
    _, inst_conds = _split_conditions(dataset, conditions)
    inst_lookups = [(_gt_values(dataset, a), v) for a, v in inst_conds]
    image_ids = cell_images(dataset, class_id, conditions)
    confs, tps, npos = [], [], []
    for image_id in image_ids:
        table = _image_table(dataset, class_id, image_id, cfg.iou_threshold)
        if inst_lookups:
            mask = tuple(any(lk[g.gt_id] != v for lk, v in inst_lookups) for g in table.gts)
            if not any(mask):
                mask = None
        else:
            mask = None
        key = ("match", class_id, image_id, cfg.iou_threshold, mask)
        hit = dataset._cache.get(key)
        if hit is None:
            labels, _ = table.match(mask)
            keep = np.array([lab != IGNORED for lab in labels], dtype=bool)
            is_tp = np.array([lab == TP for lab in labels], dtype=bool)
            n = len(table.gts) - (sum(mask) if mask else 0)
            hit = (table.confs[keep], is_tp[keep], n)
            dataset._cache[key] = hit
        confs.append(hit[0])
        tps.append(hit[1])
        npos.append(hit[2])
    return CellEvaluation(image_ids, confs, tps, np.array(npos, dtype=np.int64))


def _cell_result(dataset: Dataset, class_id: Identifier, attribute: str, value: str,
                 cell: CellEvaluation, n_bar: Optional[float], cfg: MatchConfig) -> APResult:
    n_i = cell.n_i
    if n_i == 0:
        raise UndefinedAPError(f"no positives for {attribute}={value}", n_i=0)
    ap = average_precision(cell.curve(), n_bar if n_bar is not None else n_i, cfg)
    reliable = n_i >= cfg.min_support
    return APResult(
        class_id=class_id, attribute=attribute, value=value, ap=ap, n_i=n_i,
        n_bar=float(n_bar if n_bar is not None else n_i), images_used=len(cell.image_ids),
        reliable=reliable,
        note=None if reliable else f"unreliable: {n_i} positives < min_support {cfg.min_support}",
    )


def group_ap(dataset: Dataset, class_id: Identifier, attr: str, value: str,
             cfg: MatchConfig = MatchConfig(), n_bar: Optional[float] = None) -> APResult:
    """AP of ``class_id`` restricted to ``attr == value``.

    Raises :class:`UndefinedAPError` when the group has no positives or no
    scored detections. Groups below ``cfg.min_support`` positives come back
    with ``reliable=False``.
    """
    dataset.schema(attr)
    cell = evaluate_cell(dataset, class_id, [(attr, value)], cfg)
    return _cell_result(dataset, class_id, attr, value, cell, n_bar, cfg)


def undefined_result(class_id: Identifier, attribute: str, value: str, n_i: int,
                     n_bar: Optional[float], images_used: int, reason: str) -> APResult:
    return APResult(class_id=class_id, attribute=attribute, value=value, ap=None, n_i=n_i,
                    n_bar=n_bar, images_used=images_used, reliable=False,
                    status="undefined", note=reason)


def mean_positive_count(counts: Iterable[int]) -> Optional[float]:
    nonzero = [c for c in counts if c > 0]
    return sum(nonzero) / len(nonzero) if nonzero else None


def attribute_ap_sweep(dataset: Dataset, class_id: Identifier, attr: str,
                       cfg: MatchConfig = MatchConfig(),
                       extra_conditions: Sequence[Condition] = ()) -> List[APResult]:
    """Normalized AP for every value of ``attr``, sharing one ``n_bar``.

    ``n_bar`` is the mean positive count over values that have positives.
    Values whose AP is undefined are returned with ``status="undefined"``;
    if no value is defined, :class:`UndefinedAPError` is raised.
    """
    schema = dataset.schema(attr)
    cells = {v: evaluate_cell(dataset, class_id, [(attr, v), *extra_conditions], cfg)
             for v in schema.values}
    n_bar = mean_positive_count(c.n_i for c in cells.values())
    results = []
    for v in schema.values:
        cell = cells[v]
        if n_bar is None or cell.n_i == 0:
            results.append(undefined_result(class_id, attr, v, cell.n_i, n_bar,
                                            len(cell.image_ids), "no positives"))
            continue
        try:
            results.append(_cell_result(dataset, class_id, attr, v, cell, n_bar, cfg))
        except UndefinedAPError as exc:
            results.append(undefined_result(class_id, attr, v, cell.n_i, n_bar,
                                            len(cell.image_ids), str(exc)))
    if not any(r.defined for r in results):
        raise UndefinedAPError(f"no value of {attr!r} has a defined AP for class {class_id!r}")
    return results


# -- bootstrap ------------------------------------------------------------------

MIN_BOOTSTRAP_IMAGES = 10


def bootstrap_cell(cell: CellEvaluation, n_bar: float, cfg: MatchConfig = MatchConfig(),
                   replicates: int = 200, level: float = 0.95, seed: int = 0,
                   point: Optional[float] = None) -> ConfidenceInterval:
    """Percentile interval from resampling the cell's images with replacement.

    Replicate ``r`` draws from ``default_rng(seed + r)``. A replicate without
    positives is discarded; one with positives but no scored detections has
    AP 0. The interval is widened to contain ``point`` when given.
    """
    if replicates < 100:
        raise ValueError("at least 100 bootstrap replicates are required")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    m = len(cell.image_ids)
    if m < MIN_BOOTSTRAP_IMAGES:
        raise InsufficientDataError(f"{m} images; bootstrap needs at least {MIN_BOOTSTRAP_IMAGES}")
    lens = np.array([c.size for c in cell.conf], dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(lens)[:-1]))
    flat_conf = np.concatenate(cell.conf) if m else np.zeros(0)
    flat_tp = np.concatenate(cell.is_tp) if m else np.zeros(0, dtype=bool)

    aps = []
    for r in range(replicates):
        rng = np.random.default_rng(seed + r)
        pick = rng.integers(0, m, size=m)
        n_i = int(cell.n_pos[pick].sum())
        if n_i == 0:
            continue
        sel_lens = lens[pick]
        total = int(sel_lens.sum())
        if total == 0:
            aps.append(0.0)
            continue
        offsets = np.repeat(starts[pick] - np.cumsum(sel_lens) + sel_lens, sel_lens)
        idx = offsets + np.arange(total)
        ctp, cfp, _ = _curve_arrays(flat_conf[idx], flat_tp[idx])
        aps.append(_ap_from_counts(ctp, cfp, n_i, n_bar, cfg.interpolation))
    if not aps:
        raise InsufficientDataError("no bootstrap replicate had positives")
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(np.asarray(aps), [tail, 1.0 - tail])
    low, high = float(low), float(high)
    if point is not None:
        low, high = min(low, point), max(high, point)
    return ConfidenceInterval(low, high, level)


def bootstrap_ci(dataset: Dataset, class_id: Identifier, attr: str, value: str,
                 cfg: MatchConfig = MatchConfig(), replicates: int = 200, level: float = 0.95,
                 seed: int = 0, n_bar: Optional[float] = None) -> Tuple[float, float]:
    """Percentile bootstrap interval for ``group_ap``; ``n_bar`` stays fixed
    (by default, the one from :func:`attribute_ap_sweep`)."""
    if n_bar is None:
        sweep = attribute_ap_sweep(dataset, class_id, attr, cfg)
        n_bar = next(r.n_bar for r in sweep if r.n_bar is not None)
    cell = evaluate_cell(dataset, class_id, [(attr, value)], cfg)
    point = _cell_result(dataset, class_id, attr, value, cell, n_bar, cfg).ap
    ci = bootstrap_cell(cell, n_bar, cfg, replicates, level, seed, point)
    return ci.low, ci.high


def attach_bootstrap(dataset: Dataset, results: Sequence[APResult],
                     extra_conditions: Sequence[Condition] = (),
                     cfg: MatchConfig = MatchConfig(), replicates: int = 200,
                     level: float = 0.95, seed: int = 0) -> None:
    """Fill ``ci`` on each defined result in place; refusals go to ``note``."""
    for res in results:
        if not res.defined:
            continue
        cell = evaluate_cell(dataset, res.class_id, [(res.attribute, res.value), *extra_conditions], cfg)
        try:
            res.ci = bootstrap_cell(cell, res.n_bar, cfg, replicates, level, seed, res.ap)
        except InsufficientDataError as exc:
            res.ci = None
            res.note = "; ".join(filter(None, [res.note, f"CI refused: {exc}"]))
