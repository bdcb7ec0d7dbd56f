"""Python bindings for the rulesmith rule-induction toolkit."""

import json
import sys

from ._core import (
    RulesmithError,
    canonical_predicate,
    normalize,
    uct_score,
    weighted_f1,
)
from . import _core

__all__ = [
    "RulesmithError",
    "canonical_predicate",
    "evaluate",
    "load_rulebase",
    "main",
    "normalize",
    "run",
    "uct_score",
    "weighted_f1",
]


def evaluate(predictions, gold, labels):
    """Scores a prediction file against a gold dataset; returns the report dict."""
    return json.loads(_core.evaluate_files(str(predictions), str(gold), str(labels)))


def load_rulebase(path):
    return json.loads(_core.load_rulebase_json(str(path)))


def run(*args):
    """Runs one CLI invocation in-process; returns (status, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])


def main():
    status, out, err = _core.run_cli(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return status
