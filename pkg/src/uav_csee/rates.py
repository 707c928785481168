"""Per-slot covert and secure rates and the min-structured average rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from . import channel
from .covert import MC_CHUNK
from .scenario import PhasePlan, PowerSchedule, Scenario, Trajectory, phase_plan


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def r1_sec_slot(p_src, g_sr, p_jam_eff: float, sic: float, noise: float, bandwidth: float = 1.0):
    """Deterministic lower bound on the phase-1 relay rate (residual self-interference averaged)."""
    p_src = np.asarray(p_src, dtype=float)
    g_sr = np.asarray(g_sr, dtype=float)
    return _out(bandwidth * np.log2(1.0 + p_src * g_sr / (p_jam_eff * sic + noise)))


def r2_sec_slot(p_relay, g_rd, g_re_wc, noise: float, bandwidth: float = 1.0):
    """Phase-2 secrecy rate against the worst-case eavesdropper gain. Not clamped at zero."""
    p_relay = np.asarray(p_relay, dtype=float)
    snr_d = p_relay * np.asarray(g_rd, dtype=float) / noise
    snr_e = p_relay * np.asarray(g_re_wc, dtype=float) / noise
    return _out(bandwidth * (np.log1p(snr_d) - np.log1p(snr_e)) / math.log(2.0))


def acsr_lower_bound(r1_per_slot, r2_per_slot, plan: PhasePlan, clamp: bool = True) -> float:
    """``min(phi1 * sum R1, phi2 * sum [R2]+)``; ``clamp=False`` drops the ``[.]+``."""
    r1 = np.asarray(r1_per_slot, dtype=float)
    r2 = np.asarray(r2_per_slot, dtype=float)
    if clamp:
        r2 = np.maximum(r2, 0.0)
    return float(min(plan.phi1 * r1.sum(), plan.phi2 * r2.sum()))


@dataclass(frozen=True)
class RateBreakdown:
    r1_per_slot: np.ndarray
    rd_per_slot: np.ndarray
    re_ub_per_slot: np.ndarray
    r2_per_slot: np.ndarray
    acsr_lb: float
    acsr_unclamped: float


def rate_breakdown(traj: Trajectory, powers: PowerSchedule, alpha: float,
                   scn: Scenario) -> RateBreakdown:
    g = channel.gain_set(traj, scn)
    plan = phase_plan(scn, alpha)
    r1 = np.atleast_1d(r1_sec_slot(powers.p_src, g.g_sr, scn.p_jam_eff, scn.sic_level,
                                   scn.noise, scn.bandwidth))
    ln2 = math.log(2.0)
    rd = scn.bandwidth * np.log1p(powers.p_relay * g.g_rd / scn.noise) / ln2
    re = scn.bandwidth * np.log1p(powers.p_relay * g.g_re_wc / scn.noise) / ln2
    r2 = rd - re
    return RateBreakdown(
        r1_per_slot=r1,
        rd_per_slot=rd,
        re_ub_per_slot=re,
        r2_per_slot=r2,
        acsr_lb=acsr_lower_bound(r1, r2, plan, clamp=True),
        acsr_unclamped=acsr_lower_bound(r1, r2, plan, clamp=False),
    )


class RateEstimate(NamedTuple):
    value: float
    se: float


def mc_r1_exact(p_src: float, g_sr: float, p_jam_max: float, sic: float, noise: float,
                bandwidth: float = 1.0, samples: int = 100_000, seed: int = 0,
                jam: Literal["uniform", "max"] = "uniform") -> RateEstimate:
    """Monte-Carlo phase-1 rate averaged over the residual self-interference channel.

    ``|h_RR|^2 ~ Exp(mean=sic)``. With ``jam="uniform"`` the jamming power is
    redrawn per sample from ``U(0, p_jam_max)``; ``"max"`` pins it at the peak.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    # Sums are taken relative to the first sample, which keeps the variance
    # free of cancellation and makes a constant sample stream exact.
    shift = None
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = 0
    while done < samples:
        m = min(MC_CHUNK, samples - done)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
        h2 = rng.exponential(sic, m) if sic > 0 else np.zeros(m)
        pj = rng.uniform(0.0, p_jam_max, m) if jam == "uniform" else np.full(m, p_jam_max)
        r = bandwidth * np.log2(1.0 + p_src * g_sr / (pj * h2 + noise))
        if shift is None:
            shift = float(r[0])
        dev = r - shift
        total += float(dev.sum())
        total_sq += float(np.square(dev).sum())
        done += m
        chunk += 1
    mean_dev = total / samples
    mean = shift + mean_dev
    var = max(total_sq / samples - mean_dev * mean_dev, 0.0)
    se = math.sqrt(var / samples) if samples > 1 else 0.0
    return RateEstimate(mean, se)
