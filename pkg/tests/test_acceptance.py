"""Acceptance criteria AC1-AC9, one PASS/FAIL line each."""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from lsnystrom.cli import RunConfig, accuracy_sweep, convergence_table, make_grid, solve_level, timing_sweep
from lsnystrom.operator import apply_K, build_workspace, incident_field
from lsnystrom.reference import relative_errors

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def _table(rows):
    return "; ".join(f"{r[0]} eps2={r[3]:.3e} epsinf={r[5]:.3e} order={r[6]:.2f}" for r in rows)


@pytest.mark.slow
def test_ac1_disc_q5(acceptance):
    cfg = RunConfig.from_file(CONFIGS / "disc_q5.ini")
    rows = convergence_table(cfg)
    final = rows[-1]
    assert final[0] == "2x65x129+1x129x129"
    ok = final[5] <= 5e-5 and final[6] >= 4.5
    acceptance("AC1", ok, f"epsinf={final[5]:.3e} (<= 5e-5), order={final[6]:.2f} (>= 4.5) | {_table(rows)}")
    assert ok


@pytest.mark.slow
def test_ac2_disc_q3(acceptance):
    cfg = RunConfig.from_file(CONFIGS / "disc_q3.ini")
    rows = convergence_table(cfg)
    final = rows[-1]
    ok = final[5] <= 1e-3 and final[6] >= 3.5
    acceptance("AC2", ok, f"epsinf={final[5]:.3e} (<= 1e-3), order={final[6]:.2f} (>= 3.5) | {_table(rows)}")
    assert ok


def test_ac3_trivial_contrast(acceptance):
    cfg = RunConfig.from_file(CONFIGS / "trivial.ini")
    sol = solve_level(cfg, cfg.solve_level)
    uinc = incident_field(sol.grid, cfg.kappa, cfg.direction)
    e_inf = relative_errors(sol.u, uinc)[0]
    ok = e_inf <= 1e-10 and sol.result.iterations <= 2
    acceptance("AC3", ok, f"epsinf={e_inf:.3e} (<= 1e-10), iterations={sol.result.iterations} (<= 2)")
    assert ok


@pytest.fixture(scope="module")
def sweep():
    return accuracy_sweep(RunConfig.from_file(CONFIGS / "accel.ini"))


@pytest.mark.slow
def test_ac4_accelerator_fixed_kappa(acceptance, sweep):
    rows = [r for r in sweep if r[0] == "fixed_kappa"]
    assert rows[0][1] == pytest.approx(8 * math.pi)
    e2 = [r[5] for r in rows]
    last = rows[-1]
    ok = last[3] == 12 and e2[-1] <= 1e-9 and all(a > b for a, b in zip(e2, e2[1:]))
    detail = ", ".join(f"neq={r[3]}: {r[5]:.3e}" for r in rows)
    acceptance("AC4", ok, f"eps2 at 12x4 = {e2[-1]:.3e} (<= 1e-9), monotone | {detail}")
    assert ok


@pytest.mark.slow
def test_ac5_accelerator_fixed_ppw(acceptance, sweep):
    rows = [r for r in sweep if r[0] == "fixed_ppw"]
    kh = [r[2] for r in rows]
    e2 = [r[5] for r in rows]
    ok = all(b <= a for a, b in zip(e2, e2[1:])) and all(b / a == pytest.approx(2, rel=0.05) for a, b in zip(kh, kh[1:]))
    detail = ", ".join(f"kappaH={r[2]:.2f} neq={r[3]} N={r[4]}: {r[5]:.3e}" for r in rows)
    acceptance("AC5", ok, f"eps2 non-increasing as kappaH doubles | {detail}")
    assert ok


def test_ac6_accelerated_equals_direct(acceptance):
    t0 = time.perf_counter()
    g = make_grid(RunConfig(), 2)
    assert g.label() == "2x17x33+1x33x33"
    ws = build_workspace(g)
    u = incident_field(g, g.config.kappa)
    fast = apply_K(ws, u)
    slow = apply_K(ws, u, direct=True)
    elapsed = time.perf_counter() - t0
    e2 = float(np.linalg.norm(fast - slow) / np.linalg.norm(slow))
    ok = e2 <= 1e-8 and elapsed <= 60
    acceptance("AC6", ok, f"eps2={e2:.3e} (<= 1e-8), runtime={elapsed:.1f}s (<= 60s)")
    assert ok


@pytest.mark.slow
def test_ac7_cost_scaling(acceptance):
    rows = timing_sweep(RunConfig.from_file(CONFIGS / "accel.ini"))
    (l0, k0, n0, ta0, td0), (l1, k1, n1, ta1, td1) = rows[-2], rows[-1]
    ra, rd = ta1 / ta0, td1 / td0
    ok = ra <= 5 and rd >= 10
    acceptance(
        "AC7",
        ok,
        f"N {n0}->{n1}, kappa {k0:g}->{k1:g}: accelerated x{ra:.2f} (<= 5), direct x{rd:.1f} (>= 10); "
        f"t_accel {ta0:.3f}s->{ta1:.3f}s, t_direct {td0:.3f}s->{td1:.3f}s",
    )
    assert ok


@pytest.mark.slow
def test_ac8_bean_self_convergence(acceptance):
    cfg = RunConfig.from_file(CONFIGS / "bean_trig.ini")
    rows = convergence_table(cfg)
    final = rows[-1]
    ok = final[6] >= 4.5
    acceptance("AC8", ok, f"epsinf order={final[6]:.2f}, eps2 order={final[4]:.2f} (>= 4.5) | {_table(rows)}")
    assert ok


PROPERTY_SUITES = [
    "tests/test_geometry.py::test_pou_sums_to_one",
    "tests/test_geometry.py::test_pou_sum_property",
    "tests/test_quadrature.py",
    "tests/test_special_functions.py::test_wronskian",
    "tests/test_linsolve.py::test_diagonally_dominant_system",
]


def test_ac9_property_suites_standalone(acceptance):
    r = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_SUITES],
        cwd=ROOT,
        capture_output=True,
        text=True,
    )
    tail = r.stdout.strip().splitlines()[-1] if r.stdout.strip() else r.stderr.strip()[-200:]
    ok = r.returncode == 0
    acceptance("AC9", ok, f"standalone property run: {tail}")
    assert ok, r.stdout[-3000:]
