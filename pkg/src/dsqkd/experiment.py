"""Experiment orchestration: simulate, post-process, estimate, report.

One run walks the full chain: build packets, propagate them through the
drifting channel, measure, calibrate the shot-noise unit from the vacuum
slots, track the drift phase from pilots, derotate, demodulate, remove the
displacement, then estimate channel parameters and the key rate from the
recovered Gaussian data.

Randomness discipline: every packet owns one stream per purpose (bits,
modulation, excess noise, detection, vacuum, drift steps), derived from
(seed, packet_index * STRIDE + purpose).  All merges run in packet order
and all reductions are associative, so the worker count never changes any
output.  The drift walk stays continuous across packets by prefix-summing
each packet's drift increments before the main passes.
"""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .channel import ChannelParams, propagate_batch
from .classical import (
    ClusterMoments,
    LinkReport,
    ber_from_q,
    bit_error_rate_from_counts,
    demodulate_psk,
    psk_q_factor,
)
from .config import ExperimentConfig
from .core import DomainError, RngStream, SlotKind, wrap_angle
from .dsp import (
    CalibrationResult,
    debias_displacement,
    derotate,
    estimate_packet_phase,
    per_set_magnitudes,
    remove_displacement,
    smooth_phase,
)
from .receiver import heterodyne_measure_batch, measure_vacuum_batch
from .security import (
    SecurityEstimate,
    estimate_excess_noise,
    estimate_transmittance,
    secret_key_rate,
    transmittance_is_anomalous,
)
from .transmitter import build_packet, psk_displacements

_CHUNK = 256  # packets per work unit; fixed so worker count cannot matter


class _Stream(enum.IntEnum):
    BITS = 0
    MODULATION = 1
    EXCESS_DATA = 2
    EXCESS_PILOT = 3
    DETECT_DATA = 4
    DETECT_PILOT = 5
    VACUUM = 6
    PHASE = 7


_STRIDE = 8


def _rng(seed: int, packet: int, purpose: _Stream) -> np.random.Generator:
    return RngStream(seed, packet * _STRIDE + int(purpose)).generator()


@dataclass(frozen=True)
class PhaseDiagnostics:
    rms_residual_rad: float
    delta_hat: float
    delta_hat_raw: float
    pattern_sets_used: int


@dataclass(frozen=True)
class RunCounts:
    packets: int
    pulses: int
    data_pulses: int
    pilot_pulses: int
    vacuum_pulses: int
    bits: int


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    calibration: CalibrationResult
    link: LinkReport | None
    security: SecurityEstimate
    phase: PhaseDiagnostics
    counts: RunCounts
    version: str
    wall_clock_s: float  # excluded from the canonical JSON (see reporting)


@dataclass
class _SecondMoments:
    """Streaming sums for cov(A, B) and Var(B), per quadrature pooled."""

    n: int = 0
    sum_a: float = 0.0
    sum_b: float = 0.0
    sum_aa: float = 0.0
    sum_bb: float = 0.0
    sum_ab: float = 0.0

    def add(self, a: np.ndarray, b: np.ndarray) -> None:
        self.n += a.size
        self.sum_a += float(a.sum())
        self.sum_b += float(b.sum())
        self.sum_aa += float((a * a).sum())
        self.sum_bb += float((b * b).sum())
        self.sum_ab += float((a * b).sum())

    def merge(self, other: "_SecondMoments") -> None:
        self.n += other.n
        self.sum_a += other.sum_a
        self.sum_b += other.sum_b
        self.sum_aa += other.sum_aa
        self.sum_bb += other.sum_bb
        self.sum_ab += other.sum_ab

    def covariance(self) -> float:
        ma, mb = self.sum_a / self.n, self.sum_b / self.n
        return (self.sum_ab / self.n - ma * mb) * self.n / (self.n - 1)

    def variance_b(self) -> float:
        mb = self.sum_b / self.n
        return (self.sum_bb / self.n - mb * mb) * self.n / (self.n - 1)


@dataclass(frozen=True)
class _Slots:
    """Precomputed slot indexing for one layout."""

    pilot_idx: np.ndarray
    vacuum_idx: np.ndarray
    data_idx: np.ndarray
    data_symbol_order: np.ndarray

    @staticmethod
    def of(cfg: ExperimentConfig) -> "_Slots":
        roles = cfg.layout().slot_roles()
        pilot = np.array([i for i, r in enumerate(roles) if r.kind is SlotKind.PILOT])
        vac = np.array([i for i, r in enumerate(roles) if r.kind is SlotKind.SHOT_NOISE])
        data = np.array([i for i, r in enumerate(roles) if r.kind is SlotKind.DATA])
        order = np.array([roles[i].symbol_index for i in data])
        return _Slots(pilot, vac, data, order)


def _chunks(n_packets: int) -> list[range]:
    return [range(lo, min(lo + _CHUNK, n_packets)) for lo in range(0, n_packets, _CHUNK)]


def _map_ordered(fn: Callable, chunks: Sequence[range], workers: int) -> list:
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _packet_phase_steps(cfg: ExperimentConfig, packet: int) -> np.ndarray:
    gen = _rng(cfg.seed, packet, _Stream.PHASE)
    if cfg.phase_step_std == 0.0:
        return np.zeros(cfg.slots_per_packet)
    return gen.normal(0.0, cfg.phase_step_std, size=cfg.slots_per_packet)


def _phase_offsets(cfg: ExperimentConfig, workers: int) -> np.ndarray:
    """Starting phase of each packet: prefix sums of per-packet increments."""
    if cfg.phase_step_std == 0.0:
        return np.full(cfg.n_packets, cfg.initial_phase)

    def chunk_sums(chunk: range) -> np.ndarray:
        return np.array([_packet_phase_steps(cfg, k).sum() for k in chunk])

    sums = np.concatenate(_map_ordered(chunk_sums, _chunks(cfg.n_packets), workers))
    offsets = np.empty(cfg.n_packets)
    offsets[0] = cfg.initial_phase
    offsets[1:] = cfg.initial_phase + np.cumsum(sums[:-1])
    return offsets


def run_experiment(
    cfg: ExperimentConfig,
    trace_writer=None,
    scatter_writer=None,
) -> ExperimentReport:
    """Execute the full pipeline for one configuration, deterministically.

    ``trace_writer``/``scatter_writer`` (see :mod:`dsqkd.reporting`) receive
    per-packet rows in packet order; supplying them forces sequential
    packet processing but changes no computed number.
    """
    t0 = time.monotonic()
    slots = _Slots.of(cfg)
    layout = cfg.layout()
    mod = cfg.modulation()
    ch = cfg.channel()
    rx = cfg.receiver()
    n_vac_total = cfg.n_packets * layout.shot_noise_slots

    # pass 0/1: drift prefix sums and shot-noise calibration
    offsets = _phase_offsets(cfg, cfg.workers)
    calibration = _calibrate(cfg, rx, n_vac_total)
    divisor = calibration.divisor_mv
    pilot_noise_var = 1.0 + cfg.v_ele  # normalized detection noise on pilots

    # pass 2: pilots -> per-packet raw phase + displacement magnitude
    pilot_sets_per_packet = layout.pilot_sets
    pattern_offsets = np.concatenate(
        [np.zeros(pilot_sets_per_packet), np.full(pilot_sets_per_packet, -0.5 * math.pi)]
    )
    pilot_tx = _pilot_tx(cfg, layout)

    def pilot_chunk(chunk: range) -> tuple[np.ndarray, np.ndarray, float, int]:
        theta_raw = np.empty(len(chunk))
        theta_true = np.empty(len(chunk))
        delta_sum = 0.0
        delta_count = 0
        for j, k in enumerate(chunk):
            traj = offsets[k] + np.cumsum(_packet_phase_steps(cfg, k))
            px, pp = _measure_pilots(cfg, ch, rx, pilot_tx, traj[slots.pilot_idx], k)
            sets = np.concatenate(
                [px.reshape(-1, 3), pp.reshape(-1, 3)], axis=0
            ) / divisor
            theta_raw[j] = estimate_packet_phase(sets, pattern_offsets)
            delta_sum += float(per_set_magnitudes(sets).sum())
            delta_count += sets.shape[0]
            theta_true[j] = traj.mean()
        return theta_raw, theta_true, delta_sum, delta_count

    pilot_results = _map_ordered(pilot_chunk, _chunks(cfg.n_packets), cfg.workers)
    theta_raw = np.concatenate([r[0] for r in pilot_results])
    theta_true_mean = np.concatenate([r[1] for r in pilot_results])
    n_sets = sum(r[3] for r in pilot_results)
    delta_hat_raw = sum(r[2] for r in pilot_results) / n_sets
    delta_hat = debias_displacement(delta_hat_raw, pilot_noise_var)

    if cfg.phase_correction:
        theta_hat = smooth_phase(theta_raw, cfg.smoothing_weight)
    else:
        theta_hat = np.zeros(cfg.n_packets)
    rms_residual = float(
        np.sqrt(np.mean(wrap_angle(theta_hat - theta_true_mean) ** 2))
    )

    # pass 3: data slots -> decisions, residuals, accumulated moments
    acc = _DataAccumulator(cfg)
    tracing = trace_writer is not None or scatter_writer is not None

    def data_chunk(chunk: range) -> "_DataAccumulator":
        local = _DataAccumulator(cfg)
        for k in chunk:
            traj = offsets[k] + np.cumsum(_packet_phase_steps(cfg, k))
            _process_data_packet(cfg, slots, layout, mod, ch, rx, divisor,
                                 delta_hat, theta_hat[k], traj, k, local,
                                 pilot_tx=pilot_tx,
                                 trace_writer=trace_writer,
                                 scatter_writer=scatter_writer)
        return local

    workers = 1 if tracing else cfg.workers
    for part in _map_ordered(data_chunk, _chunks(cfg.n_packets), workers):
        acc.merge(part)

    report = _finalize(cfg, calibration, acc, delta_hat, delta_hat_raw,
                       rms_residual, n_sets, n_vac_total)
    return replace(report, wall_clock_s=time.monotonic() - t0)


def _pilot_tx(cfg: ExperimentConfig, layout) -> np.ndarray:
    from .transmitter import pilot_quadratures

    per_set = pilot_quadratures(layout, cfg.delta_alice)
    return np.tile(per_set, (layout.pilot_sets, 1))


def _measure_pilots(cfg, ch: ChannelParams, rx, pilot_tx, thetas, packet):
    cx, cp = propagate_batch(
        pilot_tx[:, 0], pilot_tx[:, 1], thetas, ch,
        _rng(cfg.seed, packet, _Stream.EXCESS_PILOT),
    )
    return heterodyne_measure_batch(cx, cp, rx, _rng(cfg.seed, packet, _Stream.DETECT_PILOT))


def _calibrate(cfg: ExperimentConfig, rx, n_vac_total: int) -> CalibrationResult:
    """Pool vacuum-slot moments over all packets into the shot-noise unit."""
    if n_vac_total < 1000:
        raise DomainError(
            f"calibration needs >= 1000 vacuum slots, layout yields {n_vac_total}"
        )
    n_vac = cfg.shot_noise_slots

    def vac_chunk(chunk: range) -> np.ndarray:
        # per-quadrature first and second moments, matching the mean
        # removal in dsp.calibrate_shot_noise
        s = np.zeros(5)  # sum_x, sum_p, sumsq_x, sumsq_p, count
        for k in chunk:
            vx, vp = measure_vacuum_batch(n_vac, rx, _rng(cfg.seed, k, _Stream.VACUUM))
            s += (vx.sum(), vp.sum(), (vx * vx).sum(), (vp * vp).sum(), n_vac)
        return s

    total = sum(_map_ordered(vac_chunk, _chunks(cfg.n_packets), cfg.workers))
    n = total[4]
    var_x = (total[2] / n - (total[0] / n) ** 2) * n / (n - 1)
    var_p = (total[3] / n - (total[1] / n) ** 2) * n / (n - 1)
    var = 0.5 * (var_x + var_p)
    if var <= 0:
        raise DomainError("vacuum variance is zero: detector fault")
    return CalibrationResult(
        n0_mv2=var / (1.0 + cfg.v_ele),
        v_ele_assumed=cfg.v_ele,
        samples_used=n_vac_total,
    )


class _DataAccumulator:
    def __init__(self, cfg: ExperimentConfig):
        self.moments_x = _SecondMoments()
        self.moments_p = _SecondMoments()
        self.clusters = ClusterMoments.empty(cfg.psk_order)
        self.bit_errors = 0
        self.bits_total = 0
        self.symbol_errors = 0

    def merge(self, other: "_DataAccumulator") -> None:
        self.moments_x.merge(other.moments_x)
        self.moments_p.merge(other.moments_p)
        self.clusters = self.clusters.merge(other.clusters)
        self.bit_errors += other.bit_errors
        self.bits_total += other.bits_total
        self.symbol_errors += other.symbol_errors


def _process_data_packet(cfg, slots: _Slots, layout, mod, ch, rx, divisor,
                         delta_hat, theta_hat_k, traj, k, acc: _DataAccumulator,
                         pilot_tx=None, trace_writer=None, scatter_writer=None):
    from .transmitter import symbols_to_bits

    bits = _rng(cfg.seed, k, _Stream.BITS).integers(
        0, 2, size=layout.data_slots * mod.bits_per_symbol, dtype=np.uint8
    )
    delta_tx = cfg.delta_alice if cfg.displacement_enabled else 0.0
    packet = build_packet(
        _rng(cfg.seed, k, _Stream.MODULATION), bits, mod, layout, delta_tx,
        packet_index=k, pilot_amplitude=cfg.delta_alice,
    )
    tx_x = packet.tx_x[slots.data_idx]
    tx_p = packet.tx_p[slots.data_idx]
    symbols = packet.symbols[slots.data_symbol_order]

    cx, cp = propagate_batch(
        tx_x, tx_p, traj[slots.data_idx], ch, _rng(cfg.seed, k, _Stream.EXCESS_DATA)
    )
    rx_x, rx_p = heterodyne_measure_batch(cx, cp, rx, _rng(cfg.seed, k, _Stream.DETECT_DATA))
    raw_x, raw_p = rx_x / divisor, rx_p / divisor
    bx, bp = derotate(raw_x, raw_p, theta_hat_k)

    decided = demodulate_psk(bx, bp, mod)
    res_x, res_p = remove_displacement(
        bx, bp, decided, mod, delta_hat if cfg.displacement_enabled else 0.0
    )

    # Alice's Gaussian part: prepared state minus the known true displacement
    true_disp = psk_displacements(symbols, mod, delta_tx)
    ax = tx_x - true_disp[:, 0]
    ap = tx_p - true_disp[:, 1]

    acc.moments_x.add(ax, res_x)
    acc.moments_p.add(ap, res_p)
    if cfg.displacement_enabled:
        acc.clusters = acc.clusters.add(bx, bp, symbols)
        rx_bits = symbols_to_bits(decided, mod)
        acc.bit_errors += int(np.count_nonzero(packet.bits != rx_bits))
        acc.symbol_errors += int(np.count_nonzero(decided != symbols))
    acc.bits_total += packet.bits.size

    if scatter_writer is not None:
        scatter_writer.write_packet(k, raw_x, raw_p, bx, bp, res_x, res_p,
                                    symbols, decided)
    if trace_writer is not None:
        _write_trace_rows(cfg, slots, layout, ch, rx, pilot_tx, packet, traj,
                          theta_hat_k, rx_x, rx_p, symbols, decided, k,
                          trace_writer)


def _write_trace_rows(cfg, slots, layout, ch, rx, pilot_tx, packet, traj,
                      theta_hat_k, data_rx_x, data_rx_p, symbols, decided, k,
                      writer):
    """Reassemble the full per-slot view (pilot and vacuum streams replay
    the draws already consumed in the calibration and pilot passes)."""
    n = layout.slots_per_packet
    rx_x = np.zeros(n)
    rx_p = np.zeros(n)
    px_mv, pp_mv = _measure_pilots(cfg, ch, rx, pilot_tx, traj[slots.pilot_idx], k)
    vx_mv, vp_mv = measure_vacuum_batch(layout.shot_noise_slots, rx,
                                        _rng(cfg.seed, k, _Stream.VACUUM))
    rx_x[slots.pilot_idx], rx_p[slots.pilot_idx] = px_mv, pp_mv
    rx_x[slots.vacuum_idx], rx_p[slots.vacuum_idx] = vx_mv, vp_mv
    rx_x[slots.data_idx], rx_p[slots.data_idx] = data_rx_x, data_rx_p
    sym_tx = {int(s): int(v) for s, v in zip(slots.data_idx, symbols)}
    sym_rx = {int(s): int(v) for s, v in zip(slots.data_idx, decided)}
    writer.write_packet(k, packet.roles, packet.tx_x, packet.tx_p,
                        rx_x, rx_p, traj, theta_hat_k, sym_tx, sym_rx)


def _finalize(cfg, calibration, acc: _DataAccumulator, delta_hat, delta_hat_raw,
              rms_residual, n_sets, n_vac_total) -> ExperimentReport:
    cov = 0.5 * (acc.moments_x.covariance() + acc.moments_p.covariance())
    v_b = 0.5 * (acc.moments_x.variance_b() + acc.moments_p.variance_b())
    samples = acc.moments_x.n + acc.moments_p.n

    t_hat = estimate_transmittance(cov, cfg.v_a, cfg.gamma, cfg.eta)
    t_anomalous = transmittance_is_anomalous(t_hat)
    t_for_xi = t_hat if t_hat > 0 else cfg.transmittance
    xi_hat = estimate_excess_noise(v_b, t_for_xi, cfg.v_a, cfg.gamma, cfg.eta, cfg.v_ele)

    params = cfg.security(
        transmittance=min(max(t_hat, 1e-9), 1.0),
        excess_noise=max(xi_hat, 0.0),
    )
    security = replace(
        secret_key_rate(params, samples_used=samples),
        t_hat=t_hat,
        xi_hat=xi_hat,
        t_hat_anomalous=t_anomalous,
        xi_hat_negative=xi_hat < 0,
    )

    link = None
    if cfg.displacement_enabled:
        q_all = psk_q_factor(acc.clusters)
        q_mod = psk_q_factor(acc.clusters, shot_plus_electronic=1.0 + cfg.v_ele)
        errors = bit_error_rate_from_counts(acc.bit_errors, acc.bits_total)
        link = LinkReport(
            modulation=cfg.psk_order,
            q_factor=q_all,
            q_factor_modulation_only=q_mod,
            ber_analytic=ber_from_q(q_all),
            ber_empirical=errors.ber,
            bit_errors=errors.errors,
            bits_total=errors.trials,
            ber_ci_low=errors.ci_low,
            ber_ci_high=errors.ci_high,
            symbol_errors=acc.symbol_errors,
            data_rate_bps=cfg.data_rate_bps,
        )

    counts = RunCounts(
        packets=cfg.n_packets,
        pulses=cfg.pulses,
        data_pulses=cfg.n_packets * cfg.data_slots,
        pilot_pulses=cfg.n_packets * cfg.pilot_pulses,
        vacuum_pulses=n_vac_total,
        bits=acc.bits_total,
    )
    phase = PhaseDiagnostics(
        rms_residual_rad=rms_residual,
        delta_hat=delta_hat,
        delta_hat_raw=delta_hat_raw,
        pattern_sets_used=n_sets,
    )
    return ExperimentReport(
        config=cfg,
        calibration=calibration,
        link=link,
        security=security,
        phase=phase,
        counts=counts,
        version=__version__,
        wall_clock_s=0.0,
    )


def keyrate_only(params) -> SecurityEstimate:
    """Analytic key rate from given parameters; no simulation."""
    return secret_key_rate(params)


def sweep(cfg: ExperimentConfig, name: str, values: Sequence) -> list[dict]:
    """Run one experiment per value of one config key.

    Row seeds derive from the base seed plus the row index, so rows are
    decoupled but the whole sweep is reproducible.
    """
    from .config import ConfigError, config_field_names

    if name not in config_field_names():
        raise ConfigError(
            f"unknown sweep key {name!r}; valid keys: {', '.join(sorted(config_field_names()))}"
        )
    rows: list[dict] = []
    for i, value in enumerate(values):
        row_cfg = replace(cfg, **{name: value}, seed=cfg.seed + i)
        report = run_experiment(row_cfg)
        rows.append(summarize_report(report, param=name, value=value))
    return rows


def summarize_report(report: ExperimentReport, param: str | None = None, value=None) -> dict:
    row = {
        "seed": report.config.seed,
        "t_hat": report.security.t_hat,
        "xi_hat": report.security.xi_hat,
        "i_ab": report.security.i_ab,
        "chi_be": report.security.chi_be,
        "key_rate_per_pulse": report.security.key_rate_per_pulse,
        "key_rate_bps": report.security.key_rate_bps,
        "data_rate_bps": report.config.data_rate_bps,
        "rms_phase_residual_rad": report.phase.rms_residual_rad,
    }
    if param is not None:
        row = {"param": param, "value": value, **row}
    if report.link is not None:
        row.update(
            q_factor=report.link.q_factor,
            ber_analytic=report.link.ber_analytic,
            ber_empirical=report.link.ber_empirical,
        )
    return row
