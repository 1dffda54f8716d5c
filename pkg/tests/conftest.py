from pathlib import Path

import pytest

from slrbench.datapipe import synth_generate
from slrbench.models import ModelConfig
from slrbench.numerics import Rng

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def synthetic():
    return synth_generate(5, 6, 40, Rng(42, "synth"))


@pytest.fixture(scope="session")
def repo_root():
    return ROOT


def tiny_config(kind, **overrides):
    base = dict(kind=kind, num_classes=5, conv_filters=4, lstm_units=8, layers=1, heads=4,
                model_dim=32, ffn_dim=64, dropout=0.3)
    base.update(overrides)
    return ModelConfig(**base)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, tagged via ``record_property("criterion", ...)``."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL", props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, verdict, detail in sorted(lines, key=lambda r: int(r[0][1:].split(" ")[0])):
            terminalreporter.write_line(f"{verdict} {crit}{': ' + detail if detail else ''}")
