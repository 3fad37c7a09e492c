"""Command-line entry point: ``icon2 {evaluate,rank,control,audit,synth}``.

Exit codes: 0 success, 1 results written but some cells are unreliable
(suppressed by ``--allow-unreliable``), 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import __version__
from .core import AuditConfig, FairnessReport, audit, controlled_ap
from .data_model import AttributeKind, Dataset, Identifier
from .errors import Icon2Error, UsageError
from .ingest import (
    DERIVERS,
    BinningSpec,
    attach_attributes,
    load_detections,
    load_ground_truth,
    read_sidecar,
)
from .matching import MatchConfig
from .report import (
    ap_by_group_csv,
    audit_document,
    audit_markdown,
    control_document,
    control_grid_markdown,
    control_table_markdown,
    controlled_points_csv,
    dumps,
    evaluation_document,
    evaluation_markdown,
    ranking_document,
    ranking_markdown,
)
from .synth import ScenarioSpec, generate_scenario, write_scenario

log = logging.getLogger("icon2")

EXIT_OK, EXIT_UNRELIABLE, EXIT_INPUT = 0, 1, 2


@dataclass
class AttrArg:
    name: str
    path: Path
    level: Optional[str] = None
    kind: Optional[str] = None
    binning: Optional[BinningSpec] = None


@dataclass
class RunConfig:
    gt: Path
    dets: Path
    out: Path
    attrs: List[AttrArg] = field(default_factory=list)
    derive: List[str] = field(default_factory=list)
    sensitive: Optional[str] = None
    explanatory: List[str] = field(default_factory=list)
    classes: List[str] = field(default_factory=list)
    audit: AuditConfig = AuditConfig()
    allow_unreliable: bool = False


def parse_attr(text: str) -> AttrArg:
    """``name=path[:level:kind][:bins=k][:edges=a,b,...]``."""
    if "=" not in text:
        raise UsageError(f"--attr {text!r}: expected name=path[:level:kind][:bins=k]")
    name, rest = text.split("=", 1)
    parts = rest.split(":")
    arg = AttrArg(name.strip(), Path(parts[0]))
    positional = [p for p in parts[1:] if "=" not in p]
    options = [p for p in parts[1:] if "=" in p]
    if len(positional) not in (0, 2):
        raise UsageError(f"--attr {text!r}: give both level and kind, or neither")
    if positional:
        arg.level, arg.kind = positional
        if arg.level not in ("image", "instance"):
            raise UsageError(f"--attr {text!r}: level must be image or instance")
        if arg.kind not in ("sensitive", "explanatory"):
            raise UsageError(f"--attr {text!r}: kind must be sensitive or explanatory")
    for opt in options:
        key, val = opt.split("=", 1)
        try:
            if key == "bins":
                arg.binning = BinningSpec(int(val))
            elif key == "edges":
                edges = tuple(float(v) for v in val.split(","))
                arg.binning = BinningSpec(len(edges) + 1, "explicit-edges", edges)
            else:
                raise UsageError(f"--attr {text!r}: unknown option {key!r}")
        except ValueError as exc:
            raise UsageError(f"--attr {text!r}: {exc}") from exc
    return arg


def load_inputs(cfg: RunConfig) -> Dataset:
    for label, path in (("ground truth", cfg.gt), ("detections", cfg.dets)):
        if not Path(path).is_file():
            raise UsageError(f"{label} file not found: {path}")
    ds = load_ground_truth(cfg.gt)
    ds = load_detections(cfg.dets, ds)
    for a in cfg.attrs:
        if not a.path.is_file():
            raise UsageError(f"attribute file not found: {a.path}")
        sidecar = read_sidecar(a.path, name=a.name, level=a.level, kind=a.kind,
                               value_type="auto")
        ds = attach_attributes(ds, sidecar, a.kind or sidecar.kind, a.binning)
    if cfg.derive:
        restrict = None
        if len(cfg.classes) == 1:
            restrict = resolve_classes(ds, cfg.classes)[0]
        for name in cfg.derive:
            if name not in DERIVERS:
                raise UsageError(f"--derive {name!r}: choose from {sorted(DERIVERS)}")
            ds = DERIVERS[name](ds, restrict)
    return ds


def resolve_classes(ds: Dataset, requested: Sequence[str]) -> List[Identifier]:
    present = {g.class_id for g in ds.ground_truth}
    if not requested:
        return [c for c in ds.class_table if c in present]
    by_name = {name: cid for cid, name in ds.class_table.items()}
    by_str = {str(cid): cid for cid in ds.class_table}
    out = []
    for item in requested:
        if item in by_name:
            out.append(by_name[item])
        elif item in by_str:
            out.append(by_str[item])
        else:
            raise UsageError(f"unknown class {item!r}")
    return out


def resolve_roles(ds: Dataset, cfg: RunConfig) -> Tuple[str, List[str]]:
    sensitive = cfg.sensitive
    if sensitive is None:
        candidates = [s.name for s in ds.schemas if s.kind is AttributeKind.SENSITIVE]
        if len(candidates) != 1:
            raise UsageError("--sensitive is required (found sensitive attributes: "
                             f"{candidates or 'none'})")
        sensitive = candidates[0]
    ds.schema(sensitive)
    explanatory = list(cfg.explanatory) or [
        s.name for s in ds.schemas if s.kind is AttributeKind.EXPLANATORY and s.name != sensitive
    ]
    for name in explanatory:
        ds.schema(name)
    return sensitive, explanatory


# -- terminal summary -----------------------------------------------------------


def _use_color() -> bool:
    return not os.environ.get("ICON2_NO_COLOR") and sys.stdout.isatty()


def _style(text: str, code: str) -> str:
    return f"\033[{code}m{text}\033[0m" if _use_color() else text


def _summary(report: FairnessReport) -> None:
    for c in report.classes:
        if c.status != "ok":
            print(f"{c.class_name}: {_style('skipped', '33')} ({c.note})")
            continue
        spread = "n/a" if c.spread is None else f"{c.spread.std_pp:.2f}"
        aps = ", ".join(f"{r.value}={'n/a' if r.ap is None else f'{100 * r.ap:.1f}'}"
                        for r in c.ap_by_value)
        print(f"{_style(c.class_name, '1')}: {aps}; σ={spread} pp")
        if c.ranking:
            print("  ranking: " + " > ".join(e.attribute for e in c.ranking))
        for ctl in c.controls:
            d = "n/a" if ctl.delta is None else f"{100 * ctl.delta:+.2f}"
            print(f"  control {ctl.explanatory}: Δ={d} pp")


# -- commands -----------------------------------------------------------------------


def _prepare(cfg: RunConfig):
    ds = load_inputs(cfg)
    classes = resolve_classes(ds, cfg.classes)
    if not classes:
        raise UsageError("no classes with ground truth to evaluate")
    sensitive, explanatory = resolve_roles(ds, cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    return ds, classes, sensitive, explanatory


def _write(path: Path, text: str) -> None:
    path.write_bytes(text.encode("utf-8"))


def _exit_status(report: FairnessReport, cfg: RunConfig) -> int:
    if report.has_unreliable and not cfg.allow_unreliable:
        return EXIT_UNRELIABLE
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    ds, classes, sensitive, explanatory = _prepare(cfg)
    report = audit(ds, classes, sensitive, [], cfg.audit)
    report.explanatory = tuple(explanatory)
    doc = evaluation_document(report)
    _write(cfg.out / "ap_by_group.json", dumps(doc))
    _write(cfg.out / "ap_by_group.csv", ap_by_group_csv(doc))
    _write(cfg.out / "report.md", evaluation_markdown(doc))
    _summary(report)
    return _exit_status(report, cfg)


def _ranked_report(cfg: RunConfig, ds, classes, sensitive, explanatory, control: bool) -> FairnessReport:
    audit_cfg = cfg.audit
    if not control:
        audit_cfg = AuditConfig(audit_cfg.match, audit_cfg.estimator, audit_cfg.bootstrap_replicates,
                                audit_cfg.bootstrap_level, audit_cfg.seed, top_k=0)
    return audit(ds, classes, sensitive, explanatory, audit_cfg)


def cmd_rank(cfg: RunConfig) -> int:
    ds, classes, sensitive, explanatory = _prepare(cfg)
    if not explanatory:
        raise UsageError("no explanatory attributes to rank")
    report = _ranked_report(cfg, ds, classes, sensitive, explanatory, control=False)
    doc = ranking_document(report)
    _write(cfg.out / "ranking.json", dumps(doc))
    _write(cfg.out / "report.md", ranking_markdown(doc))
    _summary(report)
    return _exit_status(report, cfg)


def cmd_control(cfg: RunConfig) -> int:
    ds, classes, sensitive, explanatory = _prepare(cfg)
    if not explanatory:
        raise UsageError("no explanatory attributes to control for")
    report = audit(ds, classes, sensitive, [], cfg.audit)
    report.explanatory = tuple(explanatory)
    control_docs = []
    md = ["## Controlled AP", ""]
    for ca in report.classes:
        if ca.status != "ok":
            continue
        baseline = None if ca.spread is None else ca.spread.std
        for attr in explanatory:
            ctl = controlled_ap(ds, ca.class_id, sensitive, attr, cfg.audit.match,
                                cfg.audit.estimator, baseline=baseline,
                                bootstrap=cfg.audit.bootstrap)
            ca.controls.append(ctl)
            doc = control_document(report, ctl, ca.class_name)
            control_docs.append(doc["control"])
            _write(cfg.out / f"control_{_slug(ca.class_name)}_{_slug(attr)}.json", dumps(doc))
        md.append(control_table_markdown(ca.class_name, [], [d for d in control_docs
                                                            if d["class_id"] == ca.class_id]))
    md += [control_grid_markdown(d) for d in control_docs]
    _write(cfg.out / "controlled_ap_points.csv", controlled_points_csv(control_docs))
    _write(cfg.out / "report.md", "\n".join(md))
    _summary(report)
    return _exit_status(report, cfg)


def cmd_audit(cfg: RunConfig) -> int:
    ds, classes, sensitive, explanatory = _prepare(cfg)
    report = audit(ds, classes, sensitive, explanatory, cfg.audit)
    doc = audit_document(report)
    _write(cfg.out / "audit.json", dumps(doc))
    _write(cfg.out / "report.md", audit_markdown(doc))
    controls = [ctl for c in doc["classes"] for ctl in c["controls"]]
    _write(cfg.out / "controlled_ap_points.csv", controlled_points_csv(controls))
    _summary(report)
    return _exit_status(report, cfg)


def cmd_synth(spec_path: Optional[Path], out_dir: Path, seed: Optional[int] = None) -> int:
    if spec_path is None:
        text = resources.files("icon2").joinpath("data/example_scenario.json").read_text(encoding="utf-8")
        spec = ScenarioSpec.from_dict(json.loads(text))
    else:
        spec = ScenarioSpec.load(spec_path)
    if seed is not None:
        spec.seed = seed
    dataset = generate_scenario(spec)
    manifest = write_scenario(dataset, out_dir, spec)
    print(f"wrote {len(dataset.images)} images, {len(dataset.ground_truth)} ground truths, "
          f"{len(dataset.detections)} detections to {out_dir}")
    print("attributes: " + ", ".join(f"{a['name']} ({a['kind']}, {a['level']})"
                                     for a in manifest["attributes"]))
    return EXIT_OK


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in str(text))


# -- argument parsing -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icon2", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log loader warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gt", type=Path, help="COCO-style ground-truth JSON")
    common.add_argument("--dets", type=Path, help="COCO-style detection results JSON")
    common.add_argument("--manifest", type=Path,
                        help="manifest.json written by 'icon2 synth'; supplies --gt, --dets and --attr")
    common.add_argument("--attr", action="append", default=[], metavar="NAME=PATH[:LEVEL:KIND][:bins=K]",
                        help="attribute sidecar CSV (repeatable)")
    common.add_argument("--derive", action="append", default=[], choices=sorted(DERIVERS),
                        help="derive an explanatory attribute from box geometry (repeatable)")
    common.add_argument("--sensitive", help="sensitive attribute name")
    common.add_argument("--explanatory", action="append", default=[],
                        help="explanatory attribute name (repeatable; default: all registered)")
    common.add_argument("--classes", default="", help="comma-separated class names or ids")
    common.add_argument("--iou", type=float, default=0.5, help="IoU threshold (default 0.5)")
    common.add_argument("--interp", choices=["all", "101"], default="all", help="AP interpolation")
    common.add_argument("--estimator", choices=["sample", "population"], default="sample")
    common.add_argument("--boot-reps", type=int, default=200,
                        help="bootstrap replicates per cell; 0 disables (default 200)")
    common.add_argument("--boot-level", type=float, default=0.95)
    common.add_argument("--seed", type=int, default=0, help="seed for all resampling")
    common.add_argument("--min-support", type=int, default=50,
                        help="positives needed for a cell to count as reliable")
    common.add_argument("--top-k", type=int, default=None,
                        help="control for the top-k ranked attributes (default: all)")
    common.add_argument("--out", type=Path, default=Path("icon2_out"))
    common.add_argument("--allow-unreliable", action="store_true",
                        help="exit 0 even when unreliable cells are flagged")

    for name, helptext in (("evaluate", "AP per sensitive value and its spread"),
                           ("rank", "rank explanatory attributes by ProxyAP spread"),
                           ("control", "stratified AP for each explanatory attribute"),
                           ("audit", "evaluate, rank and control in one report")):
        sub.add_parser(name, parents=[common], help=helptext)

    synth = sub.add_parser("synth", help="generate a synthetic scenario")
    synth.add_argument("--spec", type=Path, default=None,
                       help="scenario spec JSON (default: bundled example)")
    synth.add_argument("--out", type=Path, required=True)
    synth.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    attrs = [parse_attr(a) for a in args.attr]
    gt, dets = args.gt, args.dets
    if args.manifest is not None:
        try:
            manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from exc
        base = Path(args.manifest).parent
        gt = gt or base / manifest["ground_truth"]
        dets = dets or base / manifest["detections"]
        given = {a.name for a in attrs}
        attrs += [AttrArg(a["name"], base / a["file"], a["level"], a["kind"])
                  for a in manifest["attributes"] if a["name"] not in given]
    if gt is None or dets is None:
        raise UsageError("--gt and --dets are required (or --manifest)")
    try:
        audit_cfg = AuditConfig(
            match=MatchConfig(iou_threshold=args.iou, interpolation=args.interp,
                              min_support=args.min_support),
            estimator=args.estimator,
            bootstrap_replicates=args.boot_reps,
            bootstrap_level=args.boot_level,
            seed=args.seed,
            top_k=args.top_k,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return RunConfig(
        gt=Path(gt), dets=Path(dets), out=args.out, attrs=attrs, derive=args.derive,
        sensitive=args.sensitive, explanatory=args.explanatory,
        classes=[c.strip() for c in args.classes.split(",") if c.strip()],
        audit=audit_cfg, allow_unreliable=args.allow_unreliable,
    )


COMMANDS = {"evaluate": cmd_evaluate, "rank": cmd_rank, "control": cmd_control, "audit": cmd_audit}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args.spec, args.out, args.seed)
        return COMMANDS[args.command](config_from_args(args))
    except (Icon2Error, ValueError) as exc:
        print(f"icon2 {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
