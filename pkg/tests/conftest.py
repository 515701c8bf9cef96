"""Shared fixtures; the expensive capacity-detecting configuration is
built once per session and reused across module and acceptance tests."""

from __future__ import annotations

import numpy as np
import pytest

from dualaction import ball_gauge
from dualaction.convex_model import window_model
from dualaction.critical_points import SearchConfig, find_critical_points
from dualaction.reduction import reduction


@pytest.fixture(scope="session")
def disk_window_setup():
    """Smoothed-disk capacity configuration: model, reduction, orbit records."""
    H = window_model(ball_gauge(1), np.pi)
    R = reduction(H)
    records, meta = find_critical_points(
        R, SearchConfig(phase_seeds=6, n_random=2, shooting_check=True)
    )
    return {"H": H, "R": R, "records": records, "meta": meta}


@pytest.fixture(scope="session")
def disk_window_complex(disk_window_setup):
    """The filtered Morse complex of the disk window configuration."""
    from dualaction.morse_complex import Generator, HeadProblem, build_complex

    H = disk_window_setup["H"]
    R = disk_window_setup["R"]
    records = disk_window_setup["records"]
    R_flow = reduction(H, M=14, tail_grad_tol=1e-10)
    gens = [
        Generator(f"g{i}", r.morse_index, r.action, r.head)
        for i, r in enumerate(records)
    ]
    C = build_complex(HeadProblem(R_flow), gens, metric_seed=0)
    return {"complex": C, "records": records, "flow_problem": HeadProblem(R_flow), "generators": gens}
