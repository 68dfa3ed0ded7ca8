import os
import re

import pytest

from qrnet import copula as cp
from qrnet import gmmn
from qrnet.dist import RngStream

DESK_DATA_SEED = 2024
DESK_INIT_SEED = 7
DESK_SHUFFLE_SEED = 8


def train_desk_model(spec, data_seed=DESK_DATA_SEED, cache_key=None):
    """Desk-preset training; optionally cached on disk between sessions.

    Set QRNET_MODEL_CACHE_DIR to reuse trained models across runs while
    iterating; the default is a fresh training.
    """
    cache_dir = os.environ.get("QRNET_MODEL_CACHE_DIR")
    cache = None
    if cache_dir and cache_key:
        cache = os.path.join(cache_dir, f"{cache_key}.json")
        if os.path.exists(cache):
            return gmmn.load_model(cache)
    X = cp.sample(spec, 20000, RngStream(data_seed))
    config, hidden = gmmn.preset_config(
        "desk", init_seed=DESK_INIT_SEED, shuffle_seed=DESK_SHUFFLE_SEED
    )
    model = gmmn.train(X, config, layer_dims=[cp.dim(spec), hidden, cp.dim(spec)])
    if cache:
        os.makedirs(cache_dir, exist_ok=True)
        gmmn.save_model(model, cache)
    return model


@pytest.fixture(scope="session")
def desk_clayton():
    """Desk-preset generator trained on Clayton(theta=2), d=2."""
    spec = cp.Clayton(2, 2.0)
    return {"spec": spec, "model": train_desk_model(spec, cache_key="desk_clayton_d2")}


_CRITERION = re.compile(r"test_c(\d{2})_")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "nodeid", "")
            if "test_acceptance" not in name:
                continue
            match = _CRITERION.search(name)
            if not match:
                continue
            num = int(match.group(1))
            ok = outcome == "passed" and lines.get(num, (True, ""))[0]
            lines[num] = (ok, name.split("::")[-1])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(lines):
        ok, label = lines[num]
        terminalreporter.write_line(
            f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  ({label})"
        )
