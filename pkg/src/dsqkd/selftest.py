"""Built-in invariant checks at small n, runnable from the CLI.

These are quick smoke checks of the repository's core invariants, not a
replacement for the pytest suite; each returns (name, passed, detail).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .config import ExperimentConfig
from .dsp import estimate_displacement, estimate_packet_phase, pattern_sets_from_pilots
from .experiment import run_experiment
from .reporting import canonical_json, report_to_dict


def run_selftest(seed: int) -> list[tuple[str, bool, str]]:
    checks: list[tuple[str, bool, str]] = []
    base = ExperimentConfig(n_packets=20, seed=seed)

    # determinism: identical config twice -> byte-identical canonical JSON
    j1 = canonical_json(report_to_dict(run_experiment(base)))
    j2 = canonical_json(report_to_dict(run_experiment(base)))
    checks.append(("determinism", j1 == j2, f"{len(j1)} bytes compared"))

    # worker invariance
    j4 = canonical_json(
        report_to_dict(run_experiment(dataclasses.replace(base, workers=4)))
    )
    checks.append(("worker_invariance", j1 == j4, "workers 1 vs 4"))

    # frame budget: data rate follows the slot budget exactly
    expected = base.clock_hz * base.data_slots / base.slots_per_packet
    checks.append(
        ("frame_budget", base.data_rate_bps == expected * math.log2(base.psk_order),
         f"{base.data_rate_bps:.0f} b/s")
    )

    # pilot estimators are exact on noiseless pilots
    worst_phase = 0.0
    worst_delta = 0.0
    for theta in np.linspace(0.0, 2 * np.pi, 17, endpoint=False):
        idx = np.arange(3)
        px = 13.0 * np.cos(theta + 2 * np.pi * idx / 3)
        pp = 13.0 * np.sin(theta + 2 * np.pi * idx / 3)
        sets = pattern_sets_from_pilots(px, pp)
        est = estimate_packet_phase(sets)
        err = abs(math.remainder(est - theta, 2 * math.pi))
        worst_phase = max(worst_phase, err)
        worst_delta = max(worst_delta, abs(estimate_displacement(sets) - 13.0))
    checks.append(("pilot_phase_exactness", worst_phase <= 1e-12, f"max err {worst_phase:.2e} rad"))
    checks.append(("pilot_delta_exactness", worst_delta <= 1e-12, f"max err {worst_delta:.2e}"))

    # noiseless end-to-end: no bit errors, excess noise estimate near zero
    clean = dataclasses.replace(
        base,
        n_packets=200,
        transmittance=1.0,
        excess_noise=0.0,
        eta=1.0,
        v_ele=0.0,
        phase_step_std=0.0,
    )
    report = run_experiment(clean)
    n_scalar = report.security.samples_used
    xi_bound = 4.0 * math.sqrt(2.0 / n_scalar) / (clean.gamma * clean.eta * 1.0)
    ok = report.link.bit_errors == 0 and abs(report.security.xi_hat) < xi_bound
    checks.append(
        ("noiseless_end_to_end", ok,
         f"bit errors {report.link.bit_errors}, xi_hat {report.security.xi_hat:.5f}"
         f" (bound {xi_bound:.5f})")
    )
    return checks
