"""Histogram-gated image translation: python front end to the C++ core.

Images are 2-D float arrays in [0, 1], masks 2-D uint8 arrays in {0, 1}.
Configs are plain dicts with the same keys as the JSON files the CLI reads.
"""

import json

from . import _hgit
from ._hgit import (
    ArgumentError,
    ConfigError,
    DatasetSplit,
    Error,
    FormatError,
    IoError,
    SegmenterModel,
    TrainingError,
    TranslatorModel,
    bce_loss,
    compute_histogram,
    evaluate,
    fda_translate,
    generate_domain_pair,
    hist_match,
    ks_p_value,
    ks_statistic,
    predict,
    read_manifest,
    style_presets,
    write_split,
)

__all__ = [
    "ArgumentError", "ConfigError", "DatasetSplit", "Error", "FormatError", "IoError",
    "SegmenterModel", "TrainingError", "TranslatorModel", "bce_loss", "compute_histogram",
    "desk_preset", "evaluate", "fda_translate", "gate", "generate_domain_pair", "hist_match",
    "ks_p_value", "ks_statistic", "predict", "read_manifest", "run_experiment", "style_preset",
    "style_presets", "train_segmenter", "train_translator", "translate", "write_split",
]


def style_preset(name):
    return json.loads(_hgit.style_preset(name))


def train_translator(source, target, config=None):
    return _hgit.train_translator(source, target, json.dumps(config or {}))


def translate(source, target, backend="hist-match", **config):
    config["backend"] = backend
    return _hgit.translate(json.dumps(config), source, target)


def gate(transformed, target, keep_percent=70.0):
    """Returns (selected split, curation report dict)."""
    selected, report = _hgit.gate(transformed, target, keep_percent)
    return selected, json.loads(report)


def train_segmenter(data, config=None):
    return _hgit.train_segmenter(data, json.dumps(config or {}))


def desk_preset():
    return json.loads(_hgit.desk_preset())


def run_experiment(config, resume=False, jobs=1, log=None):
    """Runs the scenario matrix described by `config` and returns the report dict."""
    return json.loads(_hgit.run_experiment(json.dumps(config), resume, jobs, log))
