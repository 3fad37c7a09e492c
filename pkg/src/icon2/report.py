"""Serialization of results to JSON documents, CSV tables and Markdown.

Markdown is rendered from the JSON documents, never from live objects, so
every number in ``report.md`` is a rendering of a number in the JSON.
"""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .core import AuditConfig, ClassAudit, ControlReport, FairnessReport, RankingEntry, SpreadStats
from .matching import APResult

SCHEMA_VERSION = "1.0"


def _pp(x: Optional[float]) -> Optional[float]:
    return None if x is None else 100.0 * x


def config_to_dict(cfg: AuditConfig) -> Dict[str, Any]:
    m = cfg.match
    return {
        "iou_threshold": m.iou_threshold,
        "interpolation": m.interpolation,
        "score_tiebreak": m.score_tiebreak,
        "min_support": m.min_support,
        "estimator": cfg.estimator,
        "bootstrap": {"replicates": cfg.bootstrap_replicates, "level": cfg.bootstrap_level,
                      "seed": cfg.seed},
        "seed": cfg.seed,
        "top_k": cfg.top_k,
    }


def ap_result_to_dict(r: APResult) -> Dict[str, Any]:
    return {
        "class_id": r.class_id,
        "attribute": r.attribute,
        "value": r.value,
        "ap": r.ap,
        "ap_pp": r.ap_pp,
        "n_i": r.n_i,
        "n_bar": r.n_bar,
        "images_used": r.images_used,
        "ci": None if r.ci is None else {
            "low": r.ci.low, "high": r.ci.high, "level": r.ci.level,
            "low_pp": _pp(r.ci.low), "high_pp": _pp(r.ci.high),
            "half_width_pp": _pp(r.ci.half_width),
        },
        "reliable": r.reliable,
        "status": r.status,
        "note": r.note,
    }


def spread_to_dict(s: Optional[SpreadStats]) -> Optional[Dict[str, Any]]:
    if s is None:
        return None
    return {"mean": s.mean, "variance": s.variance, "std": s.std, "mean_pp": s.mean_pp,
            "std_pp": s.std_pp, "values": dict(s.values), "estimator": s.estimator}


def ranking_entry_to_dict(e: RankingEntry) -> Dict[str, Any]:
    return {
        "rank": e.rank,
        "attribute": e.attribute,
        "std": e.std,
        "std_pp": e.std_pp,
        "variance": e.variance,
        "proxy_ap": dict(e.proxy_ap),
        "proxy_ap_pp": {k: 100.0 * v for k, v in e.proxy_ap.items()},
        "ap_by_value": dict(e.ap_by_value),
        "distribution": {a: dict(row) for a, row in e.distribution.items()},
        "flagged": e.flagged,
        "note": e.note,
    }


def control_to_dict(c: ControlReport, class_name: str) -> Dict[str, Any]:
    strata = []
    for e in c.explanatory_values:
        strata.append({
            "explanatory_value": e,
            "n_bar": c.n_bar[e],
            "spread": c.stratum_spread[e],
            "spread_pp": _pp(c.stratum_spread[e]),
            "excluded": c.excluded_strata.get(e),
            "cells": [ap_result_to_dict(c.grid[e][a]) for a in c.sensitive_values],
        })
    return {
        "class_id": c.class_id,
        "class_name": class_name,
        "sensitive": c.sensitive,
        "explanatory": c.explanatory,
        "sensitive_values": list(c.sensitive_values),
        "explanatory_values": list(c.explanatory_values),
        "estimator": c.estimator,
        "strata": strata,
        "baseline": c.baseline,
        "baseline_pp": _pp(c.baseline),
        "mean_controlled": c.mean_controlled,
        "mean_controlled_pp": _pp(c.mean_controlled),
        "delta": c.delta,
        "delta_pp": _pp(c.delta),
        "excluded_strata": dict(c.excluded_strata),
    }


def _class_eval_dict(c: ClassAudit) -> Dict[str, Any]:
    return {
        "class_id": c.class_id,
        "class_name": c.class_name,
        "status": c.status,
        "note": c.note,
        "overall_ap": c.overall_ap,
        "results": [ap_result_to_dict(r) for r in c.ap_by_value],
        "spread": spread_to_dict(c.spread),
        "spread_note": c.spread_note,
    }


def _all_classes_dict(report: FairnessReport) -> Dict[str, Any]:
    return {"values": dict(report.all_classes), "overall_ap": report.all_classes_overall,
            "spread": spread_to_dict(report.all_classes_spread)}


def _header(kind: str, report: FairnessReport) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": config_to_dict(report.config),
        "sensitive": report.sensitive,
        "sensitive_values": list(report.sensitive_values),
        "explanatory": list(report.explanatory),
        "warnings": dict(report.warnings),
    }


def evaluation_document(report: FairnessReport) -> Dict[str, Any]:
    doc = _header("ap_by_group", report)
    doc["classes"] = [_class_eval_dict(c) for c in report.classes]
    doc["all_classes"] = _all_classes_dict(report)
    return doc


def ranking_document(report: FairnessReport) -> Dict[str, Any]:
    doc = _header("ranking", report)
    doc["classes"] = [
        {"class_id": c.class_id, "class_name": c.class_name,
         "baseline_std": None if c.spread is None else c.spread.std,
         "note": c.ranking_note or c.note,
         "entries": [ranking_entry_to_dict(e) for e in c.ranking]}
        for c in report.classes
    ]
    return doc


def control_document(report: FairnessReport, control: ControlReport, class_name: str) -> Dict[str, Any]:
    doc = _header("control", report)
    doc["control"] = control_to_dict(control, class_name)
    return doc


def audit_document(report: FairnessReport) -> Dict[str, Any]:
    doc = _header("audit", report)
    classes = []
    for c in report.classes:
        entry = _class_eval_dict(c)
        entry["ranking"] = [ranking_entry_to_dict(e) for e in c.ranking]
        entry["ranking_note"] = c.ranking_note
        entry["controls"] = [control_to_dict(ctl, c.class_name) for ctl in c.controls]
        classes.append(entry)
    doc["classes"] = classes
    doc["all_classes"] = _all_classes_dict(report)
    return doc


def dumps(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


# -- schema -------------------------------------------------------------------


def load_schema() -> Dict[str, Any]:
    text = resources.files("icon2").joinpath("schemas/report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(doc: Dict[str, Any]) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` violates the report schema."""
    import jsonschema

    jsonschema.validate(doc, load_schema())


# -- CSV --------------------------------------------------------------------------


def _csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def ap_by_group_csv(doc: Dict[str, Any]) -> str:
    rows = []
    for c in doc["classes"]:
        for r in c["results"]:
            ci = r["ci"] or {}
            rows.append([c["class_id"], c["class_name"], r["attribute"], r["value"], r["ap"],
                         ci.get("low"), ci.get("high"), r["n_i"], r["n_bar"], r["images_used"],
                         str(r["reliable"]).lower(), r["status"]])
    return _csv(["class_id", "class_name", "attribute", "value", "ap", "ci_low", "ci_high",
                 "n_i", "n_bar", "images_used", "reliable", "status"], rows)


def controlled_points_csv(controls: Sequence[Dict[str, Any]]) -> str:
    rows = []
    for c in controls:
        for stratum in c["strata"]:
            for cell in stratum["cells"]:
                ci = cell["ci"] or {}
                rows.append([c["class_name"], c["explanatory"], cell["value"],
                             stratum["explanatory_value"], cell["ap"], ci.get("low"), ci.get("high"),
                             cell["n_i"], str(cell["reliable"]).lower()])
    return _csv(["class", "explanatory_attribute", "sensitive_value", "explanatory_value", "ap",
                 "ci_low", "ci_high", "support", "reliable"], rows)


# -- Markdown -----------------------------------------------------------------------


def _fmt(x: Optional[float], digits: int = 2) -> str:
    return "n/a" if x is None else f"{x:.{digits}f}"


def _cell(r: Dict[str, Any]) -> str:
    if r["ap_pp"] is None:
        return "undefined"
    text = _fmt(r["ap_pp"], 1)
    if r["ci"] is not None:
        text += f" ± {_fmt(r['ci']['half_width_pp'], 1)}"
    if not r["reliable"]:
        text += " †"
    return text


def _config_md(doc: Dict[str, Any]) -> List[str]:
    cfg = doc["config"]
    boot = cfg["bootstrap"]
    return [
        f"- IoU threshold: {cfg['iou_threshold']}; interpolation: {cfg['interpolation']}",
        f"- spread estimator: {cfg['estimator']}; min support: {cfg['min_support']}",
        f"- bootstrap: {boot['replicates']} replicates at level {boot['level']}, seed {boot['seed']}",
        f"- tie-break: {cfg['score_tiebreak']}",
    ]


def evaluation_markdown(doc: Dict[str, Any]) -> str:
    values = doc["sensitive_values"]
    lines = [f"## AP by {doc['sensitive']}", ""]
    lines.append("| Class | AP | " + " | ".join(values) + f" | σ(AP_{doc['sensitive']}) |")
    lines.append("|---" * (len(values) + 3) + "|")
    allc = doc.get("all_classes")
    if allc and len(doc["classes"]) > 1:
        cells = [_fmt(None if allc["values"].get(v) is None else 100 * allc["values"][v], 2) for v in values]
        sp = allc["spread"]
        lines.append(f"| All classes | {_fmt(None if allc['overall_ap'] is None else 100 * allc['overall_ap'], 1)} | "
                     + " | ".join(cells) + f" | {_fmt(sp['std_pp'] if sp else None)} |")
    for c in doc["classes"]:
        by_value = {r["value"]: r for r in c["results"]}
        cells = [_cell(by_value[v]) if v in by_value else "undefined" for v in values]
        overall = None if c["overall_ap"] is None else 100 * c["overall_ap"]
        sp = c["spread"]
        lines.append(f"| {c['class_name']} | {_fmt(overall, 1)} | " + " | ".join(cells)
                     + f" | {_fmt(sp['std_pp'] if sp else None)} |")
    notes = [f"- {c['class_name']}: {c['note'] or c['spread_note']}" for c in doc["classes"]
             if c.get("note") or c.get("spread_note")]
    lines.append("")
    lines.append("AP in percentage points; ± is the bootstrap interval half-width; † marks cells "
                 "below min support.")
    if notes:
        lines += ["", *notes]
    return "\n".join(lines) + "\n"


def ranking_markdown(doc: Dict[str, Any]) -> str:
    values = doc["sensitive_values"]
    lines = [f"## Explanatory attribute ranking ({doc['sensitive']})", ""]
    for c in doc["classes"]:
        lines.append(f"### {c['class_name']}")
        lines.append("")
        if not c["entries"]:
            lines += [f"_{c['note'] or 'no ranking'}_", ""]
            continue
        lines.append("| Rank | E | σ(ProxyAP^E) | " + " | ".join(f"ProxyAP {v}" for v in values) + " |")
        lines.append("|---" * (len(values) + 3) + "|")
        for e in c["entries"]:
            proxies = [_fmt(e["proxy_ap_pp"].get(v)) for v in values]
            flag = " (flagged)" if e["flagged"] else ""
            lines.append(f"| {e['rank']} | {e['attribute']}{flag} | {_fmt(e['std_pp'])} | "
                         + " | ".join(proxies) + " |")
        lines.append("")
    return "\n".join(lines)


def control_table_markdown(class_name: str, ranking: Sequence[Dict[str, Any]],
                           controls: Sequence[Dict[str, Any]]) -> str:
    """Rank, attribute, ProxyAP spread, mean controlled spread and Δ, one row
    per controlled attribute."""
    by_attr = {c["explanatory"]: c for c in controls}
    std_by_attr = {e["attribute"]: e["std_pp"] for e in ranking}
    order = [e["attribute"] for e in ranking if e["attribute"] in by_attr] or list(by_attr)
    first = "Rank" if ranking else "#"
    lines = [f"### {class_name}", "",
             f"| {first} | E | σ(ProxyAP^E) | μ(σ(AP_{{A,e_j}})) | Δ |", "|---|---|---|---|---|"]
    for k, attr in enumerate(order, start=1):
        c = by_attr[attr]
        lines.append(f"| {k} | {attr} | {_fmt(std_by_attr.get(attr))} | "
                     f"{_fmt(c['mean_controlled_pp'])} | {_fmt(c['delta_pp'])} |")
    excluded = [(c["explanatory"], e, why) for c in controls for e, why in c["excluded_strata"].items()]
    if excluded:
        lines.append("")
        lines += [f"- {attr}={e} excluded: {why}" for attr, e, why in excluded]
    return "\n".join(lines) + "\n"


def control_grid_markdown(c: Dict[str, Any]) -> str:
    values = c["sensitive_values"]
    lines = [f"#### {c['class_name']}: controlled AP for {c['explanatory']}", "",
             f"| {c['explanatory']} | " + " | ".join(values) + " | σ |",
             "|---" * (len(values) + 2) + "|"]
    for s in c["strata"]:
        cells = [_cell(cell) for cell in s["cells"]]
        mark = " (excluded)" if s["excluded"] else ""
        lines.append(f"| {s['explanatory_value']}{mark} | " + " | ".join(cells)
                     + f" | {_fmt(s['spread_pp'])} |")
    return "\n".join(lines) + "\n"


def audit_markdown(doc: Dict[str, Any]) -> str:
    parts = ["# Predictive inequity audit", "", *_config_md(doc), ""]
    parts.append(evaluation_markdown(doc))
    parts.append(ranking_markdown({**doc, "classes": [
        {"class_name": c["class_name"], "note": c.get("ranking_note") or c.get("note"),
         "entries": c["ranking"]} for c in doc["classes"]]}))
    parts.append("## Variance reduction after controlling\n")
    for c in doc["classes"]:
        if c["controls"]:
            parts.append(control_table_markdown(c["class_name"], c["ranking"], c["controls"]))
    for c in doc["classes"]:
        for ctl in c["controls"]:
            parts.append(control_grid_markdown(ctl))
    if doc["warnings"]:
        parts.append("## Loader warnings\n")
        parts += [f"- {k}: {v}" for k, v in doc["warnings"].items()]
        parts.append("")
    return "\n".join(parts)
