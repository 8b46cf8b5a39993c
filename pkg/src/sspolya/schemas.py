"""JSON schemas of the documents written by the command line tool."""

from __future__ import annotations

import jsonschema

_number_or_null = {"type": ["number", "null"]}

POSTERIOR_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "spike-and-slab Polya tree posterior",
    "type": "object",
    "required": ["schema_version", "kind", "n", "prior", "levels"],
    "properties": {
        "schema_version": {"const": 1},
        "kind": {"const": "spike-slab-polya-tree-posterior"},
        "n": {"type": "integer", "minimum": 1},
        "prior": {
            "type": "object",
            "required": ["L", "a", "kappa", "l0", "schedule"],
            "properties": {
                "L": {"type": "integer", "minimum": 0},
                "a": {"type": "integer", "minimum": 1},
                "kappa": {"type": "number", "minimum": 0},
                "l0": {"type": "integer", "minimum": 0},
                "schedule": {"enum": ["exponential", "exponential-normalized", "l-log-l"]},
            },
        },
        "levels": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["n0", "n1", "pi_tilde"],
                    "properties": {
                        "n0": {"type": "integer", "minimum": 0},
                        "n1": {"type": "integer", "minimum": 0},
                        "pi_tilde": {"type": "number", "minimum": 0, "maximum": 1},
                    },
                },
            },
        },
    },
}

BAND_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "credible band",
    "type": "object",
    "required": ["schema_version", "Rn", "alpha_hat", "L_hat", "u_n", "gamma", "member",
                 "diameter_proxy", "seed"],
    "properties": {
        "schema_version": {"const": 1},
        "Rn": {"type": "number", "minimum": 0},
        "alpha_hat": {"type": "number", "minimum": 0, "maximum": 1},
        "L_hat": {"type": "integer", "minimum": 0},
        "u_n": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "member": {"type": ["boolean", "null"]},
        "diameter_proxy": _number_or_null,
        "credibility": _number_or_null,
        "seed": {"type": ["integer", "null"]},
    },
}

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "simulation summary",
    "type": "object",
    "required": ["schema_version", "mode", "config", "summary"],
    "properties": {
        "schema_version": {"const": 1},
        "mode": {"enum": ["rates", "coverage", "thresholding", "bvm"]},
        "config": {"type": "object"},
        "summary": {"type": "object"},
    },
}


def validate(doc: dict, schema: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` does not match ``schema``."""
    jsonschema.validate(doc, schema)
