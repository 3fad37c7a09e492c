"""Loading COCO-style documents and attribute sidecars, binning, and
geometry-derived explanatory attributes.

Loaders never mutate a :class:`Dataset`; each returns a new one. Warnings
(clamped boxes, dropped degenerate boxes, clamped scores, ...) are counted per
type on ``Dataset.warnings``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .data_model import (
    UNKNOWN,
    AttributeKind,
    AttributeLevel,
    AttributeSchema,
    BBox,
    Dataset,
    DetectionInstance,
    GroundTruthInstance,
    Identifier,
    ImageRecord,
)
from .errors import BinningError, FormatError, IntegrityError, ParseError, UsageError

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_SIZE_EDGES = (32.0**2, 96.0**2)
SIZE_LABELS = ("small", "medium", "large")
DEFAULT_ASPECT_EDGES = (0.75, 1.33)
ASPECT_LABELS = ("tall", "square", "wide")
DEFAULT_CROWD_EDGES = (4, 10)
CROWD_LABELS = ("sparse", "moderate", "crowded")


def _merge_warnings(*parts) -> Dict[str, int]:
    total: Counter = Counter()
    for p in parts:
        total.update(p)
    return dict(sorted(total.items()))


def _read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror or exc})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _field(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    return obj[key]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ParseError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _xywh(value: Any, where: str) -> Tuple[float, float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ParseError(f"{where}: expected [x, y, width, height]")
    x, y, w, h = (_number(v, where) for v in value)
    return x, y, w, h


def _clamped_box(
    xywh: Tuple[float, float, float, float], image: ImageRecord, warnings: Counter
) -> Optional[BBox]:
    """Corner-form box clipped to the image, or None when degenerate."""
    x, y, w, h = xywh
    if w <= 0 or h <= 0:
        warnings["degenerate_box_dropped"] += 1
        return None
    x0, y0, x1, y1 = x, y, x + w, y + h
    cx0, cy0 = min(max(x0, 0.0), image.width), min(max(y0, 0.0), image.height)
    cx1, cy1 = min(max(x1, 0.0), image.width), min(max(y1, 0.0), image.height)
    if (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1):
        warnings["box_clamped"] += 1
    if not (cx0 < cx1 and cy0 < cy1):
        warnings["degenerate_box_dropped"] += 1
        return None
    return BBox(cx0, cy0, cx1, cy1)


# -- ground truth / detections ------------------------------------------------


def parse_ground_truth(doc: Any, source: str = "<document>") -> Dataset:
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be an object")
    warnings: Counter = Counter()

    images: List[ImageRecord] = []
    seen_images = set()
    for k, raw in enumerate(_field(doc, "images", source)):
        where = f"{source}: images[{k}]"
        image_id = _field(raw, "id", where)
        if image_id in seen_images:
            raise IntegrityError(f"{where}: duplicate image id {image_id!r}")
        seen_images.add(image_id)
        width = _number(_field(raw, "width", where), where + ".width")
        height = _number(_field(raw, "height", where), where + ".height")
        if width <= 0 or height <= 0:
            raise ParseError(f"{where}: width and height must be positive")
        images.append(ImageRecord(image_id, width, height, {}, raw.get("file_name")))
    image_index = {im.image_id: im for im in images}

    class_table: Dict[Identifier, str] = {}
    for k, raw in enumerate(_field(doc, "categories", source)):
        where = f"{source}: categories[{k}]"
        cid = _field(raw, "id", where)
        if cid in class_table:
            raise IntegrityError(f"{where}: duplicate category id {cid!r}")
        class_table[cid] = str(raw.get("name", cid))

    gts: List[GroundTruthInstance] = []
    seen_gt = set()
    for k, raw in enumerate(_field(doc, "annotations", source)):
        where = f"{source}: annotations[{k}]"
        gt_id = _field(raw, "id", where)
        if gt_id in seen_gt:
            raise IntegrityError(f"{where}: duplicate annotation id {gt_id!r}")
        seen_gt.add(gt_id)
        image_id = _field(raw, "image_id", where)
        if image_id not in image_index:
            raise IntegrityError(f"{where}: image_id {image_id!r} does not exist")
        class_id = _field(raw, "category_id", where)
        if class_id not in class_table:
            raise IntegrityError(f"{where}: category_id {class_id!r} does not exist")
        box = _clamped_box(_xywh(_field(raw, "bbox", where), where + ".bbox"),
                           image_index[image_id], warnings)
        if box is None:
            continue
        gts.append(GroundTruthInstance(gt_id, image_id, class_id, box, {}))

    return Dataset(images=images, ground_truth=gts, class_table=class_table,
                   warnings=_merge_warnings(warnings))


def load_ground_truth(path: PathLike) -> Dataset:
    """Read a COCO-style annotation file into a new :class:`Dataset`."""
    ds = parse_ground_truth(_read_json(path), str(path))
    if ds.warnings:
        log.warning("%s: %s", path, ds.warnings)
    return ds


def parse_detections(doc: Any, dataset: Dataset, source: str = "<document>") -> Dataset:
    if isinstance(doc, dict) and "annotations" in doc:
        doc = doc["annotations"]
    if not isinstance(doc, list):
        raise ParseError(f"{source}: expected a list of detection results")
    warnings: Counter = Counter()
    offending: List[str] = []
    dets: List[DetectionInstance] = []
    for k, raw in enumerate(doc):
        where = f"{source}: [{k}]"
        image_id = _field(raw, "image_id", where)
        class_id = _field(raw, "category_id", where)
        xywh = _xywh(_field(raw, "bbox", where), where + ".bbox")
        score = _number(_field(raw, "score", where), where + ".score")
        image = dataset.image_index.get(image_id)
        if image is None or class_id not in dataset.class_table:
            offending.append(f"row {k} (image_id={image_id!r}, category_id={class_id!r})")
            continue
        if not 0.0 <= score <= 1.0:
            warnings["score_clamped"] += 1
            score = min(max(score, 0.0), 1.0)
        box = _clamped_box(xywh, image, warnings)
        if box is None:
            continue
        dets.append(DetectionInstance(image_id, class_id, box, score, k))
    if offending:
        shown = "; ".join(offending[:20])
        more = f" (+{len(offending) - 20} more)" if len(offending) > 20 else ""
        raise IntegrityError(f"{source}: unknown image_id/category_id in {shown}{more}")
    return replace(dataset, detections=dets,
                   warnings=_merge_warnings(dataset.warnings, warnings))


def load_detections(path: PathLike, dataset: Dataset) -> Dataset:
    """Attach a COCO-style results list to ``dataset``."""
    out = parse_detections(_read_json(path), dataset, str(path))
    return out


def dump_ground_truth(dataset: Dataset) -> Dict[str, Any]:
    return {
        "images": [
            {"id": im.image_id, "width": im.width, "height": im.height,
             **({"file_name": im.file_name} if im.file_name is not None else {})}
            for im in dataset.images
        ],
        "annotations": [
            {"id": g.gt_id, "image_id": g.image_id, "category_id": g.class_id,
             "bbox": g.box.to_xywh(), "area": g.box.area, "iscrowd": 0}
            for g in dataset.ground_truth
        ],
        "categories": [{"id": cid, "name": name} for cid, name in dataset.class_table.items()],
    }


def dump_detections(dataset: Dataset) -> List[Dict[str, Any]]:
    return [
        {"image_id": d.image_id, "category_id": d.class_id,
         "bbox": d.box.to_xywh(), "score": d.confidence}
        for d in dataset.detections
    ]


def write_json(path: PathLike, doc: Any) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


# -- sidecars -----------------------------------------------------------------


@dataclass
class SidecarAttributeFile:
    """One attribute's assignments: ``rows`` of (id, value).

    ``id`` is an image id for image-level attributes and a ground-truth id for
    instance-level ones; ids are compared as strings.
    """

    name: str
    level: AttributeLevel
    rows: List[Tuple[str, Union[str, float]]] = field(default_factory=list)
    kind: Optional[AttributeKind] = None
    # declared label order for categorical files; first-seen order otherwise
    values: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        self.level = AttributeLevel(self.level)
        if self.values is not None:
            self.values = tuple(str(v) for v in self.values)
        if self.kind is not None:
            self.kind = AttributeKind(self.kind)

    @property
    def is_continuous(self) -> bool:
        kinds = {isinstance(v, float) for _, v in self.rows}
        if len(kinds) > 1:
            raise FormatError(f"sidecar {self.name!r} mixes continuous and categorical values")
        return kinds == {True}


def _coerce_value(text: str) -> Union[str, float]:
    try:
        value = float(text)
    except ValueError:
        return text
    return value if math.isfinite(value) else text


def parse_sidecar(
    text: str,
    name: Optional[str] = None,
    level: Optional[str] = None,
    kind: Optional[str] = None,
    value_type: str = "auto",
    source: str = "<sidecar>",
) -> SidecarAttributeFile:
    """Parse an ``id,value`` CSV.

    An optional first line ``# {json}`` declares ``name``, ``level``, ``kind``
    and ``value_type``; explicit arguments override it. With
    ``value_type="auto"`` a column of numbers is continuous and anything else
    categorical. A column mixing numbers and labels is a :class:`FormatError`.
    """
    meta: Dict[str, Any] = {}
    lines = text.splitlines(keepends=True)
    if lines and lines[0].lstrip().startswith("#"):
        header = lines.pop(0).lstrip()[1:].strip()
        if header:
            try:
                meta = json.loads(header)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{source}: line 1: bad JSON preamble: {exc.msg}") from exc
    name = name or meta.get("name")
    level = level or meta.get("level")
    kind = kind or meta.get("kind")
    value_type = meta.get("value_type", value_type) if value_type == "auto" else value_type
    if not name or not level:
        raise UsageError(f"{source}: attribute name and level must be given (flags or preamble)")

    reader = csv.reader(io.StringIO("".join(lines)))
    try:
        header_row = next(reader)
    except StopIteration:
        raise ParseError(f"{source}: missing header row 'id,value'") from None
    if [h.strip() for h in header_row] != ["id", "value"]:
        raise ParseError(f"{source}: header must be 'id,value', got {header_row!r}")
    raw_rows = []
    for lineno, row in enumerate(reader, start=2 + (1 if meta else 0)):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"{source}: line {lineno}: expected 2 fields, got {len(row)}")
        raw_rows.append((row[0], row[1]))

    if value_type == "categorical":
        rows = [(i, v) for i, v in raw_rows]
    elif value_type == "continuous":
        rows = []
        for i, v in raw_rows:
            c = _coerce_value(v)
            if not isinstance(c, float):
                raise FormatError(f"{source}: value {v!r} for id {i!r} is not numeric")
            rows.append((i, c))
    elif value_type == "auto":
        rows = [(i, _coerce_value(v)) for i, v in raw_rows]
    else:
        raise UsageError(f"unknown value_type {value_type!r}")
    declared = meta.get("values")
    if declared is not None and not isinstance(declared, list):
        raise ParseError(f"{source}: preamble 'values' must be a list")
    sidecar = SidecarAttributeFile(name, AttributeLevel(level), rows,
                                   AttributeKind(kind) if kind else None, declared)
    sidecar.is_continuous  # raises on mixed columns
    return sidecar


def read_sidecar(path: PathLike, **kwargs) -> SidecarAttributeFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror or exc})") from exc
    return parse_sidecar(text, source=str(path), **kwargs)


def format_sidecar(sidecar: SidecarAttributeFile, value_type: Optional[str] = None) -> str:
    buf = io.StringIO()
    meta = {"name": sidecar.name, "level": sidecar.level.value}
    if sidecar.kind is not None:
        meta["kind"] = sidecar.kind.value
    if value_type:
        meta["value_type"] = value_type
    if sidecar.values is not None:
        meta["values"] = list(sidecar.values)
    buf.write("# " + json.dumps(meta) + "\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["id", "value"])
    for i, v in sidecar.rows:
        writer.writerow([i, repr(v) if isinstance(v, float) else v])
    return buf.getvalue()


def sidecar_from_dataset(dataset: Dataset, name: str) -> SidecarAttributeFile:
    """Export one registered attribute's known assignments."""
    schema = dataset.schema(name)
    rows: List[Tuple[str, Union[str, float]]] = []
    if schema.level is AttributeLevel.IMAGE:
        for im in dataset.images:
            v = im.image_attributes.get(name)
            if v is not None and v != UNKNOWN:
                rows.append((str(im.image_id), v))
    else:
        for g in dataset.ground_truth:
            v = g.instance_attributes.get(name)
            if v is not None and v != UNKNOWN:
                rows.append((str(g.gt_id), v))
    return SidecarAttributeFile(name, schema.level, rows, schema.kind, schema.values)


# -- binning ------------------------------------------------------------------


@dataclass(frozen=True)
class BinningSpec:
    num_bins: int
    strategy: str = "equal-count"
    edges: Optional[Tuple[float, ...]] = None
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.num_bins < 1:
            raise BinningError("num_bins must be positive")
        if self.strategy not in ("equal-count", "explicit-edges"):
            raise BinningError(f"unknown binning strategy {self.strategy!r}")
        if self.strategy == "explicit-edges":
            if self.edges is None or len(self.edges) + 1 != self.num_bins:
                raise BinningError("explicit-edges requires num_bins == len(edges) + 1")
            if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
                raise BinningError("edges must be strictly increasing")
        if self.labels is not None and len(self.labels) != self.num_bins:
            raise BinningError("one label per bin required")

    def bin_labels(self) -> Tuple[str, ...]:
        if self.labels is not None:
            return tuple(self.labels)
        return default_bin_labels(self.num_bins)


def default_bin_labels(k: int) -> Tuple[str, ...]:
    if k == 2:
        return ("low", "high")
    if k == 3:
        return ("low", "middle", "high")
    return tuple(f"q{i + 1}" for i in range(k))


def bin_continuous(values: Sequence[float], spec: BinningSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(edges, bin_index)``.

    A value equal to an edge goes to the upper bin, so identical values never
    split. Equal-count edges are placed at the sorted positions ``floor(b*n/k)``;
    when ties collapse two edges, the later one moves up to the next distinct
    value, and edges that would run past the maximum are pulled back down so
    every bin keeps at least one distinct value.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise BinningError("cannot bin an empty list")
    if spec.strategy == "explicit-edges":
        edges = np.asarray(spec.edges, dtype=float)
    else:
        distinct = np.unique(arr)
        k, d = spec.num_bins, distinct.size
        if k > d:
            raise BinningError(f"{k} bins requested but only {d} distinct values")
        s = np.sort(arr)
        n = s.size
        # edge b starts bin b at distinct value pos[b-1]
        pos = [int(np.searchsorted(distinct, s[(b * n) // k])) for b in range(1, k)]
        for b in range(len(pos)):
            pos[b] = max(pos[b], (pos[b - 1] if b else 0) + 1)
        for b in reversed(range(len(pos))):
            pos[b] = min(pos[b], (pos[b + 1] if b + 1 < len(pos) else d) - 1)
        edges = distinct[pos] if pos else np.zeros(0)
    index = np.searchsorted(edges, arr, side="right")
    return edges, index


# -- attaching ----------------------------------------------------------------


def _replace_schema(dataset: Dataset, schema: AttributeSchema) -> Tuple[AttributeSchema, ...]:
    kept = tuple(s for s in dataset.schemas if s.name != schema.name)
    if len(kept) != len(dataset.schemas):
        log.warning("attribute %r re-registered; previous schema replaced", schema.name)
    return kept + (schema,)


def _assign(
    dataset: Dataset,
    schema: AttributeSchema,
    assignments: Dict[str, str],
    extra_warnings: Optional[Dict[str, int]] = None,
) -> Dataset:
    """New dataset with ``assignments`` (string id -> label) applied for ``schema``.

    Items absent from ``assignments`` get ``unknown``.
    """
    name = schema.name
    images, gts = dataset.images, dataset.ground_truth
    if schema.level is AttributeLevel.IMAGE:
        images = tuple(
            replace(im, image_attributes={**im.image_attributes,
                                          name: assignments.get(str(im.image_id), UNKNOWN)})
            for im in images
        )
        gts = tuple(
            g if name not in g.instance_attributes else
            replace(g, instance_attributes={k: v for k, v in g.instance_attributes.items() if k != name})
            for g in gts
        )
    else:
        gts = tuple(
            replace(g, instance_attributes={**g.instance_attributes,
                                            name: assignments.get(str(g.gt_id), UNKNOWN)})
            for g in gts
        )
        images = tuple(
            im if name not in im.image_attributes else
            replace(im, image_attributes={k: v for k, v in im.image_attributes.items() if k != name})
            for im in images
        )
    return replace(
        dataset,
        images=images,
        ground_truth=gts,
        schemas=_replace_schema(dataset, schema),
        warnings=_merge_warnings(dataset.warnings, extra_warnings or {}),
    )


def attach_attributes(
    dataset: Dataset,
    file: SidecarAttributeFile,
    schema_kind: Union[AttributeKind, str, None] = None,
    binning: Optional[BinningSpec] = None,
) -> Dataset:
    """Register ``file`` as a new attribute on ``dataset``.

    Continuous values must come with ``binning``; the resulting labels are the
    bin labels (``low``/``middle``/``high`` for three bins). Categorical labels
    keep the order declared in the file's preamble, else they are sorted.
    """
    kind = AttributeKind(schema_kind or file.kind or AttributeKind.EXPLANATORY)
    if file.level is AttributeLevel.IMAGE:
        valid_ids = {str(i) for i in dataset.image_index}
    else:
        valid_ids = {str(i) for i in dataset.gt_index}
    missing = [i for i, _ in file.rows if i not in valid_ids]
    if missing:
        raise IntegrityError(
            f"sidecar {file.name!r}: ids not in dataset ({file.level.value} level): {missing[:10]}"
        )
    seen: Counter = Counter(i for i, _ in file.rows)
    dups = [i for i, c in seen.items() if c > 1]
    if dups:
        raise IntegrityError(f"sidecar {file.name!r}: duplicate ids {dups[:10]}")

    warnings: Dict[str, int] = {}
    if file.is_continuous:
        if binning is None:
            raise UsageError(f"sidecar {file.name!r} holds continuous values; a binning is required")
        numbers = [float(v) for _, v in file.rows]
        edges, index = bin_continuous(numbers, binning)
        labels = binning.bin_labels()
        assignments = {i: labels[b] for (i, _), b in zip(file.rows, index)}
        counts = np.bincount(index, minlength=binning.num_bins)
        if binning.strategy == "equal-count" and counts.max() - counts.min() > 1:
            warnings["binning_unequal_populations"] = 1
            log.warning("attribute %r: tied values give unequal bin populations %s",
                        file.name, counts.tolist())
        values = labels
    else:
        if binning is not None:
            raise UsageError(f"sidecar {file.name!r} is categorical; binning does not apply")
        assignments = {i: str(v) for i, v in file.rows if v != UNKNOWN}
        seen_values = tuple(dict.fromkeys(str(v) for _, v in file.rows if v != UNKNOWN))
        if file.values is not None:
            extra = [v for v in seen_values if v not in file.values]
            if extra:
                raise FormatError(f"sidecar {file.name!r}: values {extra} not among declared {list(file.values)}")
            values = tuple(v for v in file.values if v != UNKNOWN)
        else:
            # sorted so the schema does not depend on row order
            values = tuple(sorted(seen_values))
        if not values:
            raise FormatError(f"sidecar {file.name!r} has no known values")
    schema = AttributeSchema(file.name, kind, file.level, values)
    return _assign(dataset, schema, assignments, warnings)


# -- geometry-derived attributes ----------------------------------------------


def _bucket(x: float, edges: Sequence[float]) -> int:
    """Index of the bucket holding ``x``; a value equal to an edge goes up."""
    return int(np.searchsorted(np.asarray(edges, dtype=float), x, side="right"))


def _check_edges(edges: Sequence[float], labels: Sequence[str]) -> None:
    if len(edges) + 1 != len(labels):
        raise UsageError("need exactly one more label than edges")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise UsageError("edges must be strictly increasing")


def derive_size_attribute(
    dataset: Dataset,
    class_id: Optional[Identifier] = None,
    edges: Sequence[float] = DEFAULT_SIZE_EDGES,
    labels: Sequence[str] = SIZE_LABELS,
    name: str = "size",
) -> Dataset:
    """Instance-level size bucket from box area (px²).

    With ``class_id`` only that class's instances are labelled; the rest stay
    ``unknown``.
    """
    _check_edges(edges, labels)
    assignments = {
        str(g.gt_id): labels[_bucket(g.box.area, edges)]
        for g in dataset.ground_truth
        if class_id is None or g.class_id == class_id
    }
    schema = AttributeSchema(name, AttributeKind.EXPLANATORY, AttributeLevel.INSTANCE, tuple(labels))
    return _assign(dataset, schema, assignments)


def aspect_ratio_label(ratio: float, edges: Sequence[float] = DEFAULT_ASPECT_EDGES,
                       labels: Sequence[str] = ASPECT_LABELS) -> str:
    # both edges belong to the middle bucket: tall < lo <= square <= hi < wide
    lo, hi = edges
    if ratio < lo:
        return labels[0]
    if ratio > hi:
        return labels[2]
    return labels[1]


def derive_aspect_ratio_attribute(
    dataset: Dataset,
    class_id: Optional[Identifier] = None,
    edges: Sequence[float] = DEFAULT_ASPECT_EDGES,
    labels: Sequence[str] = ASPECT_LABELS,
    name: str = "aspect_ratio",
) -> Dataset:
    """Instance-level width/height bucket: tall, square, wide."""
    if len(edges) != 2 or len(labels) != 3 or not edges[0] < edges[1]:
        raise UsageError("aspect ratio takes two increasing edges and three labels")
    assignments = {
        str(g.gt_id): aspect_ratio_label(g.box.width / g.box.height, edges, labels)
        for g in dataset.ground_truth
        if class_id is None or g.class_id == class_id
    }
    schema = AttributeSchema(name, AttributeKind.EXPLANATORY, AttributeLevel.INSTANCE, tuple(labels))
    return _assign(dataset, schema, assignments)


def derive_crowdedness_attribute(
    dataset: Dataset,
    class_id: Optional[Identifier] = None,
    edges: Sequence[int] = DEFAULT_CROWD_EDGES,
    labels: Sequence[str] = CROWD_LABELS,
    name: str = "crowdedness",
) -> Dataset:
    """Image-level crowdedness from the per-image instance count.

    Counts instances of ``class_id`` (all classes when None). Images with zero
    counted instances stay ``unknown``.
    """
    _check_edges(edges, labels)
    counts: Counter = Counter(
        g.image_id for g in dataset.ground_truth if class_id is None or g.class_id == class_id
    )
    assignments = {str(i): labels[_bucket(c, edges)] for i, c in counts.items() if c > 0}
    schema = AttributeSchema(name, AttributeKind.EXPLANATORY, AttributeLevel.IMAGE, tuple(labels))
    return _assign(dataset, schema, assignments)


DERIVERS = {
    "size": derive_size_attribute,
    "aspect_ratio": derive_aspect_ratio_attribute,
    "crowdedness": derive_crowdedness_attribute,
}
