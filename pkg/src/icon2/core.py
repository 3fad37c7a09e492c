"""Performance spread, confounder ranking and stratified (controlled) AP.

All APs are fractions in [0, 1]; percentage points appear only when rendering.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .data_model import UNKNOWN, AttributeKind, Dataset, Identifier
from .errors import ProxyUndefinedError, SpreadUndefinedError, UndefinedAPError, UsageError
from .matching import (
    APResult,
    MatchConfig,
    _cell_result,
    _gt_values,
    attach_bootstrap,
    attribute_ap_sweep,
    bootstrap_cell,
    evaluate_cell,
    InsufficientDataError,
    mean_positive_count,
    undefined_result,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("sample", "population")
SPREAD_STATISTICS = ("std", "variance")


@dataclass(frozen=True)
class SpreadStats:
    mean: float
    variance: float
    std: float
    values: Mapping[str, float]
    estimator: str

    @property
    def std_pp(self) -> float:
        return 100.0 * self.std

    @property
    def mean_pp(self) -> float:
        return 100.0 * self.mean


def ap_spread(values: Mapping[str, float], estimator: str = "sample") -> SpreadStats:
    """Mean and spread of per-value APs.

    ``population`` divides the squared deviations by |A|, ``sample`` by |A|-1.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    if len(values) < 2:
        raise SpreadUndefinedError(f"spread needs at least 2 values, got {len(values)}")
    arr = np.array(list(values.values()), dtype=float)
    # shift by the first value so identical inputs give exactly zero deviations
    shifted = arr - arr[0]
    mean = float(arr[0] + shifted.sum() / arr.size)
    dev = shifted - shifted.sum() / arr.size
    ddof = 1 if estimator == "sample" else 0
    variance = float(np.sum(dev ** 2) / (arr.size - ddof))
    return SpreadStats(mean, variance, math.sqrt(variance), dict(values), estimator)


def spread_of(stats: SpreadStats, statistic: str = "std") -> float:
    return stats.std if statistic == "std" else stats.variance


# -- conditional distribution ---------------------------------------------------


@dataclass(frozen=True)
class ConditionalDistribution:
    sensitive: str
    explanatory: str
    sensitive_values: Tuple[str, ...]
    explanatory_values: Tuple[str, ...]
    matrix: np.ndarray          # rows: sensitive values, columns: explanatory values
    counts: np.ndarray          # raw instance counts, same shape
    excluded_rows: Tuple[str, ...] = ()

    def row(self, sensitive_value: str) -> Dict[str, float]:
        i = self.sensitive_values.index(sensitive_value)
        return dict(zip(self.explanatory_values, self.matrix[i].tolist()))

    @property
    def rows(self) -> Dict[str, Dict[str, float]]:
        return {a: self.row(a) for a in self.sensitive_values if a not in self.excluded_rows}


def conditional_distribution(dataset: Dataset, class_id: Identifier, explanatory: str,
                             sensitive: str) -> ConditionalDistribution:
    """Empirical ``P(e | a)`` over ground-truth instances of ``class_id``.

    Instances with an unknown value for either attribute are not counted.
    Sensitive values with no counted instances keep an all-zero row and are
    listed in ``excluded_rows``.
    """
    a_schema = dataset.schema(sensitive)
    e_schema = dataset.schema(explanatory)
    a_vals = _gt_values(dataset, sensitive)
    e_vals = _gt_values(dataset, explanatory)
    a_pos = {v: i for i, v in enumerate(a_schema.values)}
    e_pos = {v: j for j, v in enumerate(e_schema.values)}
    counts = np.zeros((len(a_schema.values), len(e_schema.values)), dtype=np.int64)
    for g in dataset.gts_of_class(class_id):
        a, e = a_vals[g.gt_id], e_vals[g.gt_id]
        if a == UNKNOWN or e == UNKNOWN:
            continue
        counts[a_pos[a], e_pos[e]] += 1
    totals = counts.sum(axis=1)
    matrix = np.zeros(counts.shape, dtype=float)
    excluded = []
    for i, a in enumerate(a_schema.values):
        if totals[i] == 0:
            excluded.append(a)
        else:
            matrix[i] = counts[i] / totals[i]
    return ConditionalDistribution(sensitive, explanatory, a_schema.values, e_schema.values,
                                   matrix, counts, tuple(excluded))


def proxy_ap(ap_by_explanatory: Mapping[str, Optional[float]], row: Mapping[str, float]) -> float:
    """Expected AP under the explanatory-value mix ``row``: sum of P(e|a) * AP_e."""
    total = 0.0
    for e, p in row.items():
        if p == 0:
            continue
        ap = ap_by_explanatory.get(e)
        if ap is None:
            raise ProxyUndefinedError(f"value {e!r} has probability {p:.3g} but no defined AP", e)
        total += p * ap
    return total


# -- ranking ----------------------------------------------------------------------


@dataclass
class RankingEntry:
    attribute: str
    proxy_ap: Dict[str, float]
    std: Optional[float]
    variance: Optional[float]
    rank: int = 0
    ap_by_value: Dict[str, Optional[float]] = field(default_factory=dict)
    distribution: Dict[str, Dict[str, float]] = field(default_factory=dict)
    flagged: bool = False
    note: Optional[str] = None

    @property
    def std_pp(self) -> Optional[float]:
        return None if self.std is None else 100.0 * self.std


def _sensitive_with_support(dataset: Dataset, class_id: Identifier, sensitive: str) -> List[str]:
    values = _gt_values(dataset, sensitive)
    present = Counter(values[g.gt_id] for g in dataset.gts_of_class(class_id))
    return [v for v in dataset.schema(sensitive).values if present.get(v, 0) > 0]


def rank_confounders(dataset: Dataset, class_id: Identifier, sensitive: str,
                     explanatory_set: Sequence[str], cfg: MatchConfig = MatchConfig(),
                     estimator: str = "sample", statistic: str = "std") -> List[RankingEntry]:
    """Order explanatory attributes by the spread of their ProxyAP across
    sensitive values, largest first; ties go alphabetically.

    Attributes whose ProxyAP cannot be formed for some sensitive value are
    flagged and placed after all others.
    """
    if not explanatory_set:
        raise UsageError("explanatory_set must not be empty")
    if statistic not in SPREAD_STATISTICS:
        raise ValueError(f"statistic must be one of {SPREAD_STATISTICS}")
    dataset.schema(sensitive)
    supported = _sensitive_with_support(dataset, class_id, sensitive)
    if len(supported) < 2:
        raise SpreadUndefinedError(
            f"sensitive attribute {sensitive!r} has {len(supported)} supported value(s) for class {class_id!r}"
        )

    entries: List[RankingEntry] = []
    for attr in explanatory_set:
        entry = RankingEntry(attr, {}, None, None)
        try:
            sweep = attribute_ap_sweep(dataset, class_id, attr, cfg)
        except UndefinedAPError as exc:
            entry.flagged, entry.note = True, f"AP undefined: {exc}"
            entries.append(entry)
            continue
        entry.ap_by_value = {r.value: r.ap for r in sweep}
        dist = conditional_distribution(dataset, class_id, attr, sensitive)
        entry.distribution = dist.rows
        try:
            for a in dist.sensitive_values:
                if a in dist.excluded_rows:
                    continue
                entry.proxy_ap[a] = proxy_ap(entry.ap_by_value, dist.row(a))
            stats = ap_spread(entry.proxy_ap, estimator)
        except (ProxyUndefinedError, SpreadUndefinedError) as exc:
            entry.flagged, entry.note = True, str(exc)
            entries.append(entry)
            continue
        entry.std, entry.variance = stats.std, stats.variance
        unreliable = [r.value for r in sweep if r.defined and not r.reliable]
        if unreliable:
            entry.note = f"unreliable AP for values {unreliable}"
        entries.append(entry)

    def key(e: RankingEntry):
        if e.flagged:
            return (1, 0.0, e.attribute)
        score = e.std if statistic == "std" else e.variance
        return (0, -score, e.attribute)

    entries.sort(key=key)
    for k, e in enumerate(entries, start=1):
        e.rank = k
    return entries


# -- controlled AP ---------------------------------------------------------------


@dataclass
class ControlReport:
    class_id: Identifier
    sensitive: str
    explanatory: str
    sensitive_values: Tuple[str, ...]
    explanatory_values: Tuple[str, ...]
    grid: Dict[str, Dict[str, APResult]]        # explanatory value -> sensitive value -> cell
    stratum_spread: Dict[str, Optional[float]]  # explanatory value -> std across sensitive values
    n_bar: Dict[str, Optional[float]]           # per-stratum normalization constant
    mean_controlled: Optional[float]
    baseline: Optional[float]
    delta: Optional[float]
    excluded_strata: Dict[str, str] = field(default_factory=dict)
    estimator: str = "sample"


def variance_reduction(baseline: Optional[float],
                       stratum_spreads: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    """Mean of the per-stratum spreads and ``delta = baseline - mean``.

    Either is None when it cannot be formed (no strata, or no baseline).
    """
    if not stratum_spreads:
        return None, None
    mean = sum(stratum_spreads) / len(stratum_spreads)
    return mean, (None if baseline is None else baseline - mean)


def controlled_ap(dataset: Dataset, class_id: Identifier, sensitive: str, explanatory: str,
                  cfg: MatchConfig = MatchConfig(), estimator: str = "sample",
                  baseline: Optional[float] = None,
                  bootstrap: Optional[Mapping[str, float]] = None) -> ControlReport:
    """AP on every (sensitive value, explanatory value) stratum and the
    resulting drop in spread.

    Each explanatory stratum is normalized with its own ``n_bar`` (mean
    positive count over the sensitive values inside it). A stratum enters the
    mean controlled spread only if every sensitive cell in it is defined and
    reliable; other strata are listed in ``excluded_strata``. ``delta`` is
    ``baseline - mean_controlled``.

    ``bootstrap`` (keys ``replicates``, ``level``, ``seed``) adds intervals to
    the grid cells.
    """
    a_schema = dataset.schema(sensitive)
    e_schema = dataset.schema(explanatory)
    if baseline is None:
        try:
            sweep = attribute_ap_sweep(dataset, class_id, sensitive, cfg)
            defined = {r.value: r.ap for r in sweep if r.defined}
            baseline = ap_spread(defined, estimator).std
        except (UndefinedAPError, SpreadUndefinedError):
            baseline = None

    grid: Dict[str, Dict[str, APResult]] = {}
    spreads: Dict[str, Optional[float]] = {}
    n_bars: Dict[str, Optional[float]] = {}
    excluded: Dict[str, str] = {}
    for e in e_schema.values:
        cells = {a: evaluate_cell(dataset, class_id, [(sensitive, a), (explanatory, e)], cfg)
                 for a in a_schema.values}
        n_bar = mean_positive_count(c.n_i for c in cells.values())
        n_bars[e] = n_bar
        row: Dict[str, APResult] = {}
        for a, cell in cells.items():
            if n_bar is None or cell.n_i == 0:
                res = undefined_result(class_id, sensitive, a, cell.n_i, n_bar,
                                       len(cell.image_ids), "no positives")
            else:
                try:
                    res = _cell_result(dataset, class_id, sensitive, a, cell, n_bar, cfg)
                except UndefinedAPError as exc:
                    res = undefined_result(class_id, sensitive, a, cell.n_i, n_bar,
                                           len(cell.image_ids), str(exc))
            if bootstrap and res.defined:
                try:
                    res.ci = bootstrap_cell(cell, n_bar, cfg, int(bootstrap["replicates"]),
                                            float(bootstrap["level"]), int(bootstrap["seed"]), res.ap)
                except InsufficientDataError as exc:
                    res.note = "; ".join(filter(None, [res.note, f"CI refused: {exc}"]))
            row[a] = res
        grid[e] = row

        undefined = [a for a, r in row.items() if not r.defined]
        unreliable = [a for a, r in row.items() if r.defined and not r.reliable]
        defined = {a: r.ap for a, r in row.items() if r.defined}
        spreads[e] = ap_spread(defined, estimator).std if len(defined) >= 2 else None
        if undefined:
            excluded[e] = f"undefined AP for {undefined}"
        elif unreliable:
            excluded[e] = f"unreliable AP for {unreliable}"
        elif spreads[e] is None:
            excluded[e] = "fewer than 2 sensitive values"

    valid = [spreads[e] for e in e_schema.values if e not in excluded]
    mean_controlled, delta = variance_reduction(baseline, valid)
    return ControlReport(
        class_id=class_id, sensitive=sensitive, explanatory=explanatory,
        sensitive_values=a_schema.values, explanatory_values=e_schema.values,
        grid=grid, stratum_spread=spreads, n_bar=n_bars, mean_controlled=mean_controlled,
        baseline=baseline, delta=delta, excluded_strata=excluded, estimator=estimator,
    )


# -- audit ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditConfig:
    match: MatchConfig = MatchConfig()
    estimator: str = "sample"
    bootstrap_replicates: int = 0
    bootstrap_level: float = 0.95
    seed: int = 0
    top_k: Optional[int] = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.bootstrap_replicates and self.bootstrap_replicates < 100:
            raise ValueError("bootstrap replicates must be 0 (off) or at least 100")
        if self.top_k is not None and self.top_k < 0:
            raise ValueError("top_k must be non-negative")

    @property
    def bootstrap(self) -> Optional[Dict[str, float]]:
        if not self.bootstrap_replicates:
            return None
        return {"replicates": self.bootstrap_replicates, "level": self.bootstrap_level,
                "seed": self.seed}


@dataclass
class ClassAudit:
    class_id: Identifier
    class_name: str
    status: str = "ok"
    note: Optional[str] = None
    ap_by_value: List[APResult] = field(default_factory=list)
    overall_ap: Optional[float] = None
    spread: Optional[SpreadStats] = None
    spread_note: Optional[str] = None
    ranking: List[RankingEntry] = field(default_factory=list)
    ranking_note: Optional[str] = None
    controls: List[ControlReport] = field(default_factory=list)


@dataclass
class FairnessReport:
    sensitive: str
    sensitive_values: Tuple[str, ...]
    explanatory: Tuple[str, ...]
    config: AuditConfig
    classes: List[ClassAudit]
    all_classes: Dict[str, Optional[float]] = field(default_factory=dict)
    all_classes_overall: Optional[float] = None
    all_classes_spread: Optional[SpreadStats] = None
    warnings: Dict[str, int] = field(default_factory=dict)

    @property
    def has_unreliable(self) -> bool:
        for c in self.classes:
            if c.status != "ok":
                return True
            if any(not r.reliable for r in c.ap_by_value):
                return True
            for ctl in c.controls:
                if any(not r.reliable for row in ctl.grid.values() for r in row.values()):
                    return True
        return False


def evaluate_class(dataset: Dataset, class_id: Identifier, sensitive: str,
                   cfg: AuditConfig = AuditConfig()) -> ClassAudit:
    """Per-value normalized AP, overall AP and spread for one class."""
    out = ClassAudit(class_id, dataset.class_name(class_id))
    try:
        out.ap_by_value = attribute_ap_sweep(dataset, class_id, sensitive, cfg.match)
    except UndefinedAPError as exc:
        out.status, out.note = "skipped", f"baseline sweep undefined: {exc}"
        return out
    cell = evaluate_cell(dataset, class_id, [], cfg.match)
    try:
        out.overall_ap = _cell_result(dataset, class_id, "all", "all", cell, None, cfg.match).ap
    except UndefinedAPError:
        out.overall_ap = None
    if cfg.bootstrap:
        attach_bootstrap(dataset, out.ap_by_value, (), cfg.match, cfg.bootstrap_replicates,
                         cfg.bootstrap_level, cfg.seed)
    defined = {r.value: r.ap for r in out.ap_by_value if r.defined}
    try:
        out.spread = ap_spread(defined, cfg.estimator)
    except SpreadUndefinedError as exc:
        out.spread_note = f"spread undefined: {exc}"
    return out


def audit(dataset: Dataset, class_ids: Sequence[Identifier], sensitive: str,
          explanatory_set: Sequence[str], cfg: AuditConfig = AuditConfig()) -> FairnessReport:
    """Evaluate, rank and control for every class; classes whose baseline
    sweep is undefined are reported as skipped."""
    if not class_ids:
        raise UsageError("at least one class is required")
    schema = dataset.schema(sensitive)
    if schema.kind is not AttributeKind.SENSITIVE:
        log.warning("attribute %r is registered as %s but audited as sensitive",
                    sensitive, schema.kind.value)
    for attr in explanatory_set:
        dataset.schema(attr)

    classes: List[ClassAudit] = []
    for class_id in class_ids:
        ca = evaluate_class(dataset, class_id, sensitive, cfg)
        classes.append(ca)
        if ca.status != "ok" or not explanatory_set:
            continue
        if ca.spread is None:
            ca.ranking_note = "ranking skipped: sensitive spread undefined"
            continue
        try:
            ca.ranking = rank_confounders(dataset, class_id, sensitive, explanatory_set,
                                          cfg.match, cfg.estimator)
        except (SpreadUndefinedError, UndefinedAPError) as exc:
            ca.ranking_note = f"ranking skipped: {exc}"
            continue
        k = len(ca.ranking) if cfg.top_k is None else cfg.top_k
        for entry in ca.ranking[:k]:
            ca.controls.append(controlled_ap(dataset, class_id, sensitive, entry.attribute,
                                             cfg.match, cfg.estimator, baseline=ca.spread.std,
                                             bootstrap=cfg.bootstrap))

    report = FairnessReport(sensitive, schema.values, tuple(explanatory_set), cfg, classes,
                            warnings=dict(dataset.warnings))
    # class-averaged row: mean AP per sensitive value over classes where it is defined
    for v in schema.values:
        aps = [r.ap for c in classes for r in c.ap_by_value if r.value == v and r.defined]
        report.all_classes[v] = sum(aps) / len(aps) if aps else None
    overall = [c.overall_ap for c in classes if c.overall_ap is not None]
    report.all_classes_overall = sum(overall) / len(overall) if overall else None
    defined = {v: ap for v, ap in report.all_classes.items() if ap is not None}
    if len(defined) >= 2:
        report.all_classes_spread = ap_spread(defined, cfg.estimator)
    return report
