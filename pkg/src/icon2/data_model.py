"""Core domain types shared by every other module.

A :class:`Dataset` is treated as immutable once built: every "update"
operation elsewhere returns a new instance via :func:`dataclasses.replace`.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Hashable, List, Mapping, Optional, Tuple

from .errors import IntegrityError, SchemaNotFoundError

UNKNOWN = "unknown"

Identifier = Hashable


def id_key(value: Identifier) -> tuple:
    """Total order over mixed int/str identifiers."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (0, value, "")
    return (1, 0, str(value))


class AttributeKind(str, enum.Enum):
    SENSITIVE = "sensitive"
    EXPLANATORY = "explanatory"


class AttributeLevel(str, enum.Enum):
    IMAGE = "image"
    INSTANCE = "instance"


@dataclass(frozen=True, slots=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def to_xywh(self) -> List[float]:
        return [self.x_min, self.y_min, self.width, self.height]


@dataclass(frozen=True)
class GroundTruthInstance:
    gt_id: Identifier
    image_id: Identifier
    class_id: Identifier
    box: BBox
    instance_attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class DetectionInstance:
    image_id: Identifier
    class_id: Identifier
    box: BBox
    confidence: float
    # position in the source results file; only used to order exact duplicates
    index: int = 0


@dataclass(frozen=True)
class ImageRecord:
    image_id: Identifier
    width: float
    height: float
    image_attributes: Mapping[str, str] = field(default_factory=dict)
    file_name: Optional[str] = None


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    kind: AttributeKind
    level: AttributeLevel
    values: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", AttributeKind(self.kind))
        object.__setattr__(self, "level", AttributeLevel(self.level))
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError(f"attribute {self.name!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"attribute {self.name!r} has duplicate values")
        if UNKNOWN in self.values:
            raise ValueError(f"{UNKNOWN!r} is reserved and cannot be declared as a value")


@dataclass(frozen=True)
class Dataset:
    images: Tuple[ImageRecord, ...] = ()
    ground_truth: Tuple[GroundTruthInstance, ...] = ()
    detections: Tuple[DetectionInstance, ...] = ()
    schemas: Tuple[AttributeSchema, ...] = ()
    class_table: Mapping[Identifier, str] = field(default_factory=dict)
    # loader warning counts, keyed by warning type
    warnings: Mapping[str, int] = field(default_factory=dict, compare=False)
    # memo for matching results; never part of equality
    _cache: Dict[Any, Any] = field(
        init=False, default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self):
        for name in ("images", "ground_truth", "detections", "schemas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        names = [s.name for s in self.schemas]
        if len(set(names)) != len(names):
            raise IntegrityError("at most one schema per attribute name")

    # -- indexes -----------------------------------------------------------

    @cached_property
    def image_index(self) -> Dict[Identifier, ImageRecord]:
        return {im.image_id: im for im in self.images}

    @cached_property
    def gt_index(self) -> Dict[Identifier, GroundTruthInstance]:
        return {g.gt_id: g for g in self.ground_truth}

    @cached_property
    def gt_by_image_class(self) -> Dict[Tuple[Identifier, Identifier], List[GroundTruthInstance]]:
        out: Dict[Tuple[Identifier, Identifier], List[GroundTruthInstance]] = defaultdict(list)
        for g in self.ground_truth:
            out[(g.image_id, g.class_id)].append(g)
        return dict(out)

    @cached_property
    def dets_by_image_class(self) -> Dict[Tuple[Identifier, Identifier], List[DetectionInstance]]:
        out: Dict[Tuple[Identifier, Identifier], List[DetectionInstance]] = defaultdict(list)
        for d in self.detections:
            out[(d.image_id, d.class_id)].append(d)
        return dict(out)

    @cached_property
    def sorted_image_ids(self) -> List[Identifier]:
        return sorted(self.image_index, key=id_key)

    def images_with_class(self, class_id: Identifier) -> List[Identifier]:
        """Image ids holding at least one ground truth of ``class_id``, in id order."""
        return [i for i in self.sorted_image_ids if (i, class_id) in self.gt_by_image_class]

    def gts_of_class(self, class_id: Identifier) -> List[GroundTruthInstance]:
        return [g for g in self.ground_truth if g.class_id == class_id]

    def schema(self, name: str) -> AttributeSchema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise SchemaNotFoundError(f"attribute {name!r} is not registered")

    def has_schema(self, name: str) -> bool:
        return any(s.name == name for s in self.schemas)

    def class_name(self, class_id: Identifier) -> str:
        return str(self.class_table.get(class_id, class_id))

    def validate(self) -> None:
        """Check referential integrity; raise :class:`IntegrityError` on violation."""
        if len(self.image_index) != len(self.images):
            raise IntegrityError("duplicate image ids")
        if len(self.gt_index) != len(self.ground_truth):
            raise IntegrityError("duplicate ground-truth ids")
        bad = [g.gt_id for g in self.ground_truth if g.image_id not in self.image_index]
        if bad:
            raise IntegrityError(f"ground truths reference missing images: {bad[:10]}")
        bad = [d.index for d in self.detections if d.image_id not in self.image_index]
        if bad:
            raise IntegrityError(f"detections reference missing images (rows {bad[:10]})")


def resolve_attribute(dataset: Dataset, attr: str, gt: GroundTruthInstance) -> str:
    """Attribute value for one ground-truth instance.

    Image-level attributes are broadcast from the enclosing image. Missing
    annotations, or labels outside the declared value set, resolve to
    ``"unknown"``.
    """
    schema = dataset.schema(attr)
    if schema.level is AttributeLevel.INSTANCE:
        value = gt.instance_attributes.get(attr, UNKNOWN)
    else:
        image = dataset.image_index.get(gt.image_id)
        value = UNKNOWN if image is None else image.image_attributes.get(attr, UNKNOWN)
    return value if value in schema.values else UNKNOWN


def image_attribute(dataset: Dataset, attr: str, image_id: Identifier) -> str:
    schema = dataset.schema(attr)
    image = dataset.image_index[image_id]
    value = image.image_attributes.get(attr, UNKNOWN)
    return value if value in schema.values else UNKNOWN
