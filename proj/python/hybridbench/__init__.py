"""Build and score hybrid m-out-of-n mathematical-judgement benchmarks."""

import json
import os

from . import _core
from ._core import (
    STAGES,
    CapabilityError,
    ConfigError,
    CorpusError,
    HybridbenchError,
    PreconditionError,
    ProviderError,
    StageError,
    choose_lowest,
    config_hash,
    extract_picks,
    guess_baseline,
    loose_score,
    normalize_fingerprint,
    option_perplexity,
    tight_score,
    weighted_mcq_scores,
)

__all__ = [
    "STAGES",
    "CapabilityError",
    "ConfigError",
    "CorpusError",
    "HybridbenchError",
    "Pipeline",
    "PreconditionError",
    "ProviderError",
    "StageError",
    "choose_lowest",
    "config_hash",
    "extract_picks",
    "guess_baseline",
    "load_config",
    "loose_score",
    "normalize_fingerprint",
    "option_perplexity",
    "parse_corpus",
    "tight_score",
    "weighted_mcq_scores",
]


def parse_corpus(text, document="<corpus>"):
    """Return (items, diagnostics) parsed from the tagged block format."""
    parsed = json.loads(_core.parse_corpus_json(text, document))
    return parsed["items"], parsed["diagnostics"]


def load_config(path):
    """Return the validated effective configuration as a dict."""
    return json.loads(_core.load_config_json(os.fspath(path)))


class Pipeline:
    """Stage runner over a run directory.

    ``mock_script`` is the text of a mock script (JSONL); when given, every
    provider is served from it.
    """

    def __init__(self, config, run_dir, mock_script=None):
        self._p = _core.Pipeline(os.fspath(config), os.fspath(run_dir), mock_script)

    @property
    def run_dir(self):
        return self._p.run_dir

    def run_stage(self, stage, force=False):
        return json.loads(self._p.run_stage_json(stage, force))

    def run_all(self):
        return json.loads(self._p.run_all_json())

    def export_public(self, out=None):
        return self._p.export_public(None if out is None else os.fspath(out))
