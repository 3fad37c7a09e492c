"""Synthetic scenarios with planted attribute correlations and an
outcome-level pseudo-detector.

Each ground truth is detected with probability ``detect_prob`` times the
product of the ``detect_prob`` factors of every attribute value it carries
(image-level values included). Detected boxes are jittered copies of the
ground truth; every image also receives Poisson clutter false positives.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .data_model import (
    AttributeKind,
    AttributeLevel,
    AttributeSchema,
    BBox,
    Dataset,
    DetectionInstance,
    GroundTruthInstance,
    ImageRecord,
)
from .errors import SpecError
from .ingest import dump_detections, dump_ground_truth, format_sidecar, sidecar_from_dataset

Range = Tuple[float, float]


@dataclass
class ValueModel:
    """Detector behaviour on instances carrying one attribute value."""

    detect_prob: float = 1.0
    jitter_px: float = 0.0
    tp_confidence: Optional[Range] = None
    box_side: Optional[Range] = None
    # image-level attributes only: extra clutter FPs per image
    clutter_fp_rate: float = 0.0


@dataclass
class ExplanatorySpec:
    name: str
    level: str
    values: List[str]
    marginal: Optional[Dict[str, float]] = None
    conditional: Optional[Dict[str, Dict[str, float]]] = None
    models: Dict[str, ValueModel] = field(default_factory=dict)

    def distribution(self, sensitive_value: str) -> np.ndarray:
        table = self.conditional[sensitive_value] if self.conditional else self.marginal
        return np.array([table.get(v, 0.0) for v in self.values], dtype=float)

    def factor(self, value: str) -> float:
        m = self.models.get(value)
        return 1.0 if m is None else m.detect_prob


@dataclass
class ScenarioSpec:
    num_images: int
    sensitive_marginals: Dict[str, float]
    explanatory: List[ExplanatorySpec] = field(default_factory=list)
    classes: List[str] = field(default_factory=lambda: ["car"])
    sensitive_name: str = "income"
    instances_per_image: Tuple[int, int] = (5, 15)
    image_size: Tuple[float, float] = (1280.0, 720.0)
    box_side: Range = (20.0, 120.0)
    aspect_ratio: Range = (0.6, 1.6)
    detect_prob: float = 1.0
    jitter_px: float = 0.0
    tp_confidence: Range = (0.5, 1.0)
    fp_confidence: Range = (0.0, 0.6)
    clutter_fp_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.instances_per_image = tuple(self.instances_per_image)
        self.image_size = tuple(self.image_size)
        for name in ("box_side", "aspect_ratio", "tp_confidence", "fp_confidence"):
            setattr(self, name, tuple(getattr(self, name)))
        self.explanatory = [e if isinstance(e, ExplanatorySpec) else _explanatory_from_dict(e)
                            for e in self.explanatory]
        self.validate()

    @property
    def sensitive_values(self) -> List[str]:
        return list(self.sensitive_marginals)

    def validate(self) -> None:
        if self.num_images < 1:
            raise SpecError("num_images must be at least 1")
        if not self.classes:
            raise SpecError("at least one class is required")
        _check_dist(self.sensitive_marginals, "sensitive_marginals")
        lo, hi = self.instances_per_image
        if not 0 <= lo <= hi:
            raise SpecError("instances_per_image must be an increasing pair of non-negative ints")
        _check_prob(self.detect_prob, "detect_prob")
        _check_range(self.tp_confidence, "tp_confidence", 0.0, 1.0)
        _check_range(self.fp_confidence, "fp_confidence", 0.0, 1.0)
        _check_range(self.aspect_ratio, "aspect_ratio", 1e-6, math.inf)
        if self.clutter_fp_rate < 0 or self.jitter_px < 0:
            raise SpecError("clutter_fp_rate and jitter_px must be non-negative")
        sides = [self.box_side]
        names = set()
        for e in self.explanatory:
            if e.name in names or e.name == self.sensitive_name:
                raise SpecError(f"duplicate attribute name {e.name!r}")
            names.add(e.name)
            if e.level not in ("image", "instance"):
                raise SpecError(f"{e.name}: level must be 'image' or 'instance'")
            if len(set(e.values)) != len(e.values) or not e.values:
                raise SpecError(f"{e.name}: values must be non-empty and unique")
            if (e.marginal is None) == (e.conditional is None):
                raise SpecError(f"{e.name}: give exactly one of marginal / conditional")
            if e.marginal is not None:
                _check_dist(e.marginal, f"{e.name}.marginal", e.values)
            else:
                missing = set(self.sensitive_marginals) - set(e.conditional)
                if missing:
                    raise SpecError(f"{e.name}.conditional lacks rows for {sorted(missing)}")
                for a, row in e.conditional.items():
                    _check_dist(row, f"{e.name}.conditional[{a}]", e.values)
            for v, m in e.models.items():
                if v not in e.values:
                    raise SpecError(f"{e.name}: model for undeclared value {v!r}")
                _check_prob(m.detect_prob, f"{e.name}[{v}].detect_prob")
                if m.jitter_px < 0 or m.clutter_fp_rate < 0:
                    raise SpecError(f"{e.name}[{v}]: negative jitter or clutter rate")
                if m.clutter_fp_rate and e.level != "image":
                    raise SpecError(f"{e.name}[{v}]: clutter_fp_rate applies to image-level attributes only")
                if m.tp_confidence is not None:
                    _check_range(m.tp_confidence, f"{e.name}[{v}].tp_confidence", 0.0, 1.0)
                if m.box_side is not None:
                    _check_range(m.box_side, f"{e.name}[{v}].box_side", 0.0, math.inf)
                    sides.append(m.box_side)
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise SpecError("image_size must be positive")
        _check_range(self.box_side, "box_side", 0.0, math.inf)
        a_lo, a_hi = self.aspect_ratio
        for s_lo, s_hi in sides:
            if s_lo <= 0:
                raise SpecError("box sides must be positive")
            if s_hi * math.sqrt(a_hi) > w or s_hi / math.sqrt(a_lo) > h:
                raise SpecError(f"boxes up to side {s_hi} do not fit in a {w}x{h} image")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ScenarioSpec":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SpecError(f"invalid scenario spec: {exc}") from exc

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScenarioSpec":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"{path}: cannot read scenario spec ({exc})") from exc
        if not isinstance(doc, dict):
            raise SpecError(f"{path}: scenario spec must be a JSON object")
        return cls.from_dict(doc)


def _explanatory_from_dict(doc: Dict[str, Any]) -> ExplanatorySpec:
    try:
        models = {v: ValueModel(**m) for v, m in (doc.get("models") or {}).items()}
        return ExplanatorySpec(
            name=doc["name"], level=doc["level"], values=list(doc["values"]),
            marginal=doc.get("marginal"), conditional=doc.get("conditional"), models=models,
        )
    except (KeyError, TypeError) as exc:
        raise SpecError(f"invalid explanatory attribute spec: {exc}") from exc


def _check_prob(p: float, where: str) -> None:
    if not 0.0 <= p <= 1.0:
        raise SpecError(f"{where} must lie in [0, 1]")


def _check_range(r, where: str, lo: float, hi: float) -> None:
    if len(r) != 2 or not lo <= r[0] <= r[1] <= hi:
        raise SpecError(f"{where} must be an increasing pair within [{lo}, {hi}]")


def _check_dist(table: Dict[str, float], where: str, support=None) -> None:
    if not table:
        raise SpecError(f"{where} is empty")
    if support is not None and set(table) - set(support):
        raise SpecError(f"{where} has labels outside {list(support)}")
    if any(p < 0 for p in table.values()) or abs(sum(table.values()) - 1.0) > 1e-9:
        raise SpecError(f"{where} must be a probability table summing to 1")


def expected_recall(spec: ScenarioSpec, sensitive_value: str) -> float:
    """Closed-form detection rate for instances of one sensitive group.

    Attributes are drawn independently given the sensitive value, so the rate
    factorizes into one ``sum_e P(e|a) * detect_prob(e)`` term per attribute.
    Ignores localisation misses from jitter and accidental clutter hits.
    """
    rate = spec.detect_prob
    for e in spec.explanatory:
        if not e.models:
            continue
        probs = e.distribution(sensitive_value)
        rate *= float(sum(p * e.factor(v) for p, v in zip(probs, e.values)))
    return rate


def _uniform(rng: np.random.Generator, r: Range, size=None):
    return rng.uniform(r[0], r[1], size)


def generate_scenario(spec: ScenarioSpec) -> Dataset:
    """Sample a full dataset (images, ground truth, detections, attributes)."""
    rng = np.random.default_rng(spec.seed)
    W, H = spec.image_size
    sens_values = spec.sensitive_values
    sens_p = np.array([spec.sensitive_marginals[v] for v in sens_values], dtype=float)
    image_attrs = [e for e in spec.explanatory if e.level == "image"]
    inst_attrs = [e for e in spec.explanatory if e.level == "instance"]
    class_ids = list(range(1, len(spec.classes) + 1))
    lo_n, hi_n = spec.instances_per_image
    a_lo, a_hi = math.log(spec.aspect_ratio[0]), math.log(spec.aspect_ratio[1])

    images: List[ImageRecord] = []
    gts: List[GroundTruthInstance] = []
    dets: List[DetectionInstance] = []
    next_gt = 1

    def box_from(cx, cy, w, h) -> Optional[BBox]:
        x0, y0 = max(cx - w / 2, 0.0), max(cy - h / 2, 0.0)
        x1, y1 = min(cx + w / 2, W), min(cy + h / 2, H)
        if x0 < x1 and y0 < y1:
            return BBox(float(x0), float(y0), float(x1), float(y1))
        return None

    for image_id in range(1, spec.num_images + 1):
        a = sens_values[rng.choice(len(sens_values), p=sens_p)]
        img_vals = {e.name: e.values[rng.choice(len(e.values), p=e.distribution(a))]
                    for e in image_attrs}
        images.append(ImageRecord(image_id, W, H, {spec.sensitive_name: a, **img_vals}))
        img_factor = spec.detect_prob
        img_jitter = spec.jitter_px
        clutter = spec.clutter_fp_rate
        img_conf = None
        img_side = None
        for e in image_attrs:
            m = e.models.get(img_vals[e.name])
            if m is not None:
                img_factor *= m.detect_prob
                img_jitter += m.jitter_px
                clutter += m.clutter_fp_rate
                img_conf = img_conf or m.tp_confidence
                img_side = img_side or m.box_side

        for class_id in class_ids:
            n = int(rng.integers(lo_n, hi_n + 1))
            inst_vals = {
                e.name: rng.choice(len(e.values), size=n, p=e.distribution(a)) for e in inst_attrs
            }
            u_detect = rng.random(n)
            ratio = np.exp(rng.uniform(a_lo, a_hi, n))
            side_u = rng.random(n)
            pos_u = rng.random((n, 2))
            jit = rng.normal(0.0, 1.0, (n, 4))
            conf_u = rng.random(n)
            for k in range(n):
                attrs = {e.name: e.values[inst_vals[e.name][k]] for e in inst_attrs}
                factor, jitter, conf_r, side_r = img_factor, img_jitter, img_conf, img_side
                for e in inst_attrs:
                    m = e.models.get(attrs[e.name])
                    if m is not None:
                        factor *= m.detect_prob
                        jitter += m.jitter_px
                        conf_r = conf_r or m.tp_confidence
                        side_r = side_r or m.box_side
                side_r = side_r or spec.box_side
                conf_r = conf_r or spec.tp_confidence
                side = side_r[0] + side_u[k] * (side_r[1] - side_r[0])
                w, h = side * math.sqrt(ratio[k]), side / math.sqrt(ratio[k])
                x0 = pos_u[k, 0] * (W - w)
                y0 = pos_u[k, 1] * (H - h)
                box = BBox(float(x0), float(y0), float(x0 + w), float(y0 + h))
                gts.append(GroundTruthInstance(next_gt, image_id, class_id, box, attrs))
                next_gt += 1
                if u_detect[k] < factor:
                    j = jit[k] * jitter
                    det_box = _jittered(box, j, W, H)
                    if det_box is not None:
                        conf = conf_r[0] + conf_u[k] * (conf_r[1] - conf_r[0])
                        dets.append(DetectionInstance(image_id, class_id, det_box, float(conf), len(dets)))

            n_fp = int(rng.poisson(clutter)) if clutter > 0 else 0
            if n_fp:
                side = _uniform(rng, spec.box_side, n_fp)
                ratio_fp = np.exp(rng.uniform(a_lo, a_hi, n_fp))
                pos = rng.random((n_fp, 2))
                conf = _uniform(rng, spec.fp_confidence, n_fp)
                for k in range(n_fp):
                    w, h = side[k] * math.sqrt(ratio_fp[k]), side[k] / math.sqrt(ratio_fp[k])
                    x0, y0 = pos[k, 0] * (W - w), pos[k, 1] * (H - h)
                    box = BBox(float(x0), float(y0), float(x0 + w), float(y0 + h))
                    dets.append(DetectionInstance(image_id, class_id, box, float(conf[k]), len(dets)))

    schemas = [AttributeSchema(spec.sensitive_name, AttributeKind.SENSITIVE, AttributeLevel.IMAGE,
                               tuple(sens_values))]
    for e in spec.explanatory:
        schemas.append(AttributeSchema(e.name, AttributeKind.EXPLANATORY, AttributeLevel(e.level),
                                       tuple(e.values)))
    return Dataset(images=images, ground_truth=gts, detections=dets, schemas=schemas,
                   class_table=dict(zip(class_ids, spec.classes)))


def _jittered(box: BBox, j: np.ndarray, W: float, H: float) -> Optional[BBox]:
    x0 = min(max(box.x_min + j[0], 0.0), W)
    y0 = min(max(box.y_min + j[1], 0.0), H)
    x1 = min(max(box.x_max + j[2], 0.0), W)
    y1 = min(max(box.y_max + j[3], 0.0), H)
    if x0 < x1 and y0 < y1:
        return BBox(float(x0), float(y0), float(x1), float(y1))
    return None


def write_scenario(dataset: Dataset, out_dir: Union[str, Path],
                   spec: Optional[ScenarioSpec] = None) -> Dict[str, Any]:
    """Write ``gt.json``, ``dets.json``, one CSV sidecar per attribute and a
    ``manifest.json`` describing them. Returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gt.json").write_text(json.dumps(dump_ground_truth(dataset)) + "\n", encoding="utf-8")
    (out / "dets.json").write_text(json.dumps(dump_detections(dataset)) + "\n", encoding="utf-8")
    attrs = []
    for schema in dataset.schemas:
        sidecar = sidecar_from_dataset(dataset, schema.name)
        fname = f"attr_{schema.name}.csv"
        (out / fname).write_bytes(format_sidecar(sidecar, "categorical").encode("utf-8"))
        attrs.append({"name": schema.name, "file": fname, "level": schema.level.value,
                      "kind": schema.kind.value, "values": list(schema.values)})
    manifest = {
        "ground_truth": "gt.json",
        "detections": "dets.json",
        "attributes": attrs,
        "sensitive": next((a["name"] for a in attrs if a["kind"] == "sensitive"), None),
        "explanatory": [a["name"] for a in attrs if a["kind"] == "explanatory"],
        "seed": spec.seed if spec is not None else None,
    }
    if spec is not None:
        (out / "scenario.json").write_text(json.dumps(spec.to_dict(), indent=1) + "\n", encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return manifest
