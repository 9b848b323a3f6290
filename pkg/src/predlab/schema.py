"""JSON schemas for the reports written by the command-line tool."""
from __future__ import annotations

import jsonschema

_num = {"type": "number"}
_entropy_keys = ["h_knifecp", "h_knifedp", "h_lmcp"]

MANIFEST = {
    "type": "object",
    "required": ["command", "config", "seed", "input_digest", "version", "started_at", "finished_at"],
    "properties": {
        "command": {"type": "string"},
        "config": {"type": "object"},
        "seed": {"type": "integer"},
        "input_digest": {"type": "string", "pattern": "^sha256:[0-9a-f]{64}$"},
        "version": {"type": "string"},
        "started_at": {"type": "string"},
        "finished_at": {"type": "string"},
    },
}

ENTROPIES = {
    "type": "object",
    "required": [*_entropy_keys, "reps", "variances", "config", "failures"],
    "properties": {
        **{k: _num for k in _entropy_keys},
        "reps": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "object", "required": ["repetition", "seed", *_entropy_keys]},
        },
        "variances": {"type": "object", "required": ["knifecp", "knifedp", "lmcp"]},
        "failures": {"type": "array"},
    },
}

INDICATORS = {
    "type": "object",
    "required": ["r2_knifecp", "r2_knifedp", "r2_lmcp", "mse_bound_gaussian", "mae_bound_laplacian",
                 "ordering_ok", "mode"],
    "properties": {"ordering_ok": {"type": "boolean"}, "mode": {"enum": ["paper", "gaussian"]}},
}

ESTIMATE_REPORT = {
    "type": "object",
    "required": ["manifest", "entropies", "indicators", "traces", "var_y"],
    "properties": {
        "manifest": MANIFEST,
        "entropies": ENTROPIES,
        "indicators": INDICATORS,
        "traces": {"type": "array"},
        "var_y": _num,
    },
}

ANALYZE_REPORT = {
    "type": "object",
    "required": ["manifest", "columns", "rows"],
    "properties": {
        "manifest": MANIFEST,
        "columns": {"const": ["EV", "d", "R2_knifecp", "R2_knifedp", "R2_lmcp"]},
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["ev_threshold", "EV", "d", "R2_knifecp", "R2_knifedp", "R2_lmcp", "entropies",
                             "indicators"],
            },
        },
    },
}

BENCH_REPORT = {
    "type": "object",
    "required": ["manifest", "cells", "tidy"],
    "properties": {
        "manifest": MANIFEST,
        "cells": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["task", "noise", "mse", "true_mse", "h_true", "status"],
                "properties": {"status": {"enum": ["ok", "failed"]}},
            },
        },
        "tidy": {
            "type": "array",
            "items": {"type": "object", "required": ["estimator", "task", "noise", "mse", "value"]},
        },
    },
}

SYNTH_SIDECAR = {
    "type": "object",
    "required": ["manifest", "ground_truth"],
    "properties": {"manifest": MANIFEST, "ground_truth": {"type": "object"}},
}

SCHEMAS = {
    "estimate": ESTIMATE_REPORT,
    "analyze": ANALYZE_REPORT,
    "synth-bench": BENCH_REPORT,
    "synth": SYNTH_SIDECAR,
}


def validate(kind: str, doc: dict) -> None:
    jsonschema.validate(doc, SCHEMAS[kind])
