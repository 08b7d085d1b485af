"""Stability indices and severity functions computed from a trajectory.

Three severities feed the risk engine: the angle index built on the largest
pairwise rotor-angle separation, the post-fault bus-voltage deviation sum, and
the post-fault generator-frequency deviation sum. All are pure functions.

Diverged runs have no steady state, so they carry pinned severities: angle
index -1 (severity 1), every bus counted at the 1.0 pu deviation cap, every
machine at the 2 Hz cap. The caps keep risk finite and preserve "diverged is
at least as severe as any completed run".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynsim.trajectory import Trajectory
from .errors import MetricsError

ANGLE_PIVOT_DEG = 360.0
VOLTAGE_THRESHOLD_PU = 0.05
FREQUENCY_THRESHOLD_HZ = 0.5
V_RATED_PU = 1.0
DIVERGED_V_DEV_CAP = 1.0
DIVERGED_F_DEV_CAP = 2.0
SETTLE_WINDOW_S = 1.0
SETTLE_RIPPLE_FRAC = 0.02


@dataclass(frozen=True)
class AngleMetrics:
    delta_max_deg: float
    tsi: float
    sev_a: float


@dataclass(frozen=True)
class VoltageMetrics:
    bus_ids: tuple[int, ...]
    v_post: np.ndarray        # post-fault steady-state voltage per bus, pu
    v_dev: np.ndarray         # rated minus post-fault voltage per bus, pu
    sev_v: float
    settled: bool


@dataclass(frozen=True)
class FrequencyMetrics:
    sg_names: tuple[str, ...]
    f_dev_hz: np.ndarray      # post-fault frequency deviation per machine, Hz
    sev_f: float
    settled: bool


def tsi_from_delta_max(delta_max_deg: float) -> float:
    """Angle stability index: (360 - dmax) / (360 + dmax), negative when unstable."""
    return (ANGLE_PIVOT_DEG - delta_max_deg) / (ANGLE_PIVOT_DEG + delta_max_deg)


def angle_severity_from_tsi(tsi: float) -> float:
    return abs(tsi) if tsi < 0.0 else 0.0


def compute_tsi(traj: Trajectory) -> AngleMetrics:
    """Largest pairwise rotor-angle separation after fault application, and its index.

    The observation window starts at the fault instant (whole run when unfaulted).
    Diverged runs pin the index at -1.
    """
    if len(traj.sg_names) < 2:
        raise MetricsError(
            f"angle index needs at least 2 synchronous machines, got {len(traj.sg_names)}"
        )
    t_from = traj.t_apply if traj.t_apply is not None else float(traj.t[0])
    mask = traj.t >= t_from - 1e-12
    window = traj.delta_deg[mask]
    if window.size == 0:
        window = traj.delta_deg
    spread = window.max(axis=1) - window.min(axis=1)
    delta_max = float(spread.max())
    if traj.diverged:
        return AngleMetrics(delta_max_deg=delta_max, tsi=-1.0, sev_a=1.0)
    tsi = tsi_from_delta_max(delta_max)
    return AngleMetrics(delta_max_deg=delta_max, tsi=tsi, sev_a=angle_severity_from_tsi(tsi))


def post_fault_steady_state(
    t: np.ndarray, channel: np.ndarray, t_clear: float, t_end: float
) -> tuple[float, bool]:
    """Mean of the final 1-s window, plus a settled flag.

    The channel must extend at least 2 s past clearing. Settled means the window's
    peak-to-peak stays below 2% of the mean magnitude; unsettled channels still
    return the mean.
    """
    if t_end - t_clear < 2.0:
        raise MetricsError(
            f"post-fault window needs t_end - t_clear >= 2 s "
            f"(got {t_end - t_clear:.3f} s)"
        )
    mask = t >= t_end - SETTLE_WINDOW_S - 1e-12
    window = np.asarray(channel)[mask]
    if window.size == 0:
        raise MetricsError("post-fault steady-state window is empty")
    mean = float(window.mean())
    p2p = float(window.max() - window.min())
    settled = p2p < SETTLE_RIPPLE_FRAC * abs(mean) if mean != 0.0 else p2p == 0.0
    return mean, settled


def voltage_severity(
    traj: Trajectory, threshold: float = VOLTAGE_THRESHOLD_PU
) -> VoltageMetrics:
    """Sum of post-fault voltage deviations exceeding the threshold (pu)."""
    n = len(traj.bus_ids)
    if n == 0:
        raise MetricsError("trajectory has no bus-voltage channels")
    if traj.diverged:
        dev = np.full(n, DIVERGED_V_DEV_CAP)
        return VoltageMetrics(
            bus_ids=traj.bus_ids, v_post=np.zeros(n), v_dev=dev,
            sev_v=float(dev.sum()), settled=False,
        )
    t_clear = traj.t_clear if traj.t_clear is not None else float(traj.t[0])
    v_post = np.empty(n)
    settled_all = True
    for k in range(n):
        v_post[k], settled = post_fault_steady_state(
            traj.t, traj.v_mag[:, k], t_clear, traj.t_end
        )
        settled_all = settled_all and settled
    dev = V_RATED_PU - v_post
    sev = float(np.sum(np.abs(dev)[np.abs(dev) > threshold]))
    return VoltageMetrics(
        bus_ids=traj.bus_ids, v_post=v_post, v_dev=dev, sev_v=sev, settled=settled_all
    )


def frequency_severity(
    traj: Trajectory,
    threshold: float = FREQUENCY_THRESHOLD_HZ,
    include_dfig: bool = False,
) -> FrequencyMetrics:
    """Sum of post-fault frequency deviations exceeding the threshold (Hz).

    Only synchronous machines count by default: DFIG rotor speed is converter
    decoupled from grid frequency. ``include_dfig`` adds wind units, reading
    their speed channel as an equivalent electrical frequency.
    """
    names = list(traj.sg_names)
    if not names and not include_dfig:
        raise MetricsError("trajectory has no synchronous-machine frequency channels")
    if traj.diverged:
        n = len(names) + (len(traj.dfig_names) if include_dfig else 0)
        dev = np.full(n, DIVERGED_F_DEV_CAP)
        all_names = names + (list(traj.dfig_names) if include_dfig else [])
        return FrequencyMetrics(
            sg_names=tuple(all_names), f_dev_hz=dev, sev_f=float(dev.sum()),
            settled=False,
        )
    t_clear = traj.t_clear if traj.t_clear is not None else float(traj.t[0])
    channels = [traj.freq_hz[:, k] for k in range(len(names))]
    if include_dfig:
        for k, nm in enumerate(traj.dfig_names):
            names.append(nm)
            channels.append(traj.dfig_speed[:, k] * traj.nominal_hz)
    dev = np.empty(len(channels))
    settled_all = True
    for k, ch in enumerate(channels):
        f_post, settled = post_fault_steady_state(traj.t, ch, t_clear, traj.t_end)
        dev[k] = f_post - traj.nominal_hz
        settled_all = settled_all and settled
    sev = float(np.sum(np.abs(dev)[np.abs(dev) > threshold]))
    return FrequencyMetrics(
        sg_names=tuple(names), f_dev_hz=dev, sev_f=sev, settled=settled_all
    )
