"""Warden radiometer model: false alarm, missed detection and detection error.

The warden compares its average received power against a threshold ``tau``.
Under H0 it sees only the relay's uniformly-random jamming plus noise; under
H1 the source signal (at its mean gain) is added on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .errors import DegenerateDetectionError

# Samples drawn per random-generator chunk. Chunk ``i`` is seeded from
# ``(seed, i)`` so estimates do not depend on how chunks are scheduled.
MC_CHUNK = 1 << 16


@dataclass(frozen=True)
class DetectorEnv:
    p_src: float
    g_sw_mean: float
    g_rw: float
    p_jam_max: float
    noise: float

    def __post_init__(self):
        if self.p_jam_max <= 0 or self.noise <= 0:
            raise ValueError("p_jam_max and noise must be > 0")
        if self.g_sw_mean <= 0 or self.g_rw <= 0:
            raise ValueError("gains must be > 0")
        if self.p_src < 0:
            raise ValueError("p_src must be >= 0")

    @property
    def jam_span(self) -> float:
        """Width ``P_jam_max * g_rw`` of the uniform jamming contribution."""
        return self.p_jam_max * self.g_rw

    @property
    def signal(self) -> float:
        return self.p_src * self.g_sw_mean


@dataclass(frozen=True)
class ThresholdBreakpoints:
    z1: float
    z2: float
    z3: float


def breakpoints(env: DetectorEnv) -> ThresholdBreakpoints:
    z1 = env.jam_span + env.noise
    z2 = env.signal + env.noise
    return ThresholdBreakpoints(z1=z1, z2=z2, z3=z1 + z2 - env.noise)


@dataclass(frozen=True)
class CovertMcConfig:
    samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def false_alarm_prob(tau, env: DetectorEnv):
    tau = np.asarray(tau, dtype=float)
    z1 = breakpoints(env).z1
    lin = 1.0 - (tau - env.noise) / env.jam_span
    out = np.where(tau < env.noise, 1.0, np.where(tau < z1, lin, 0.0))
    return _out(out)


def miss_detect_prob(tau, env: DetectorEnv):
    tau = np.asarray(tau, dtype=float)
    bp = breakpoints(env)
    lin = (tau - bp.z2) / env.jam_span
    out = np.where(tau < bp.z2, 0.0, np.where(tau < bp.z3, lin, 1.0))
    return _out(out)


def dep(tau, env: DetectorEnv):
    """Detection error probability, false alarm plus missed detection."""
    return _out(np.asarray(false_alarm_prob(tau, env)) + np.asarray(miss_detect_prob(tau, env)))


def min_dep(env: DetectorEnv) -> tuple[float, tuple[float, float]]:
    """Minimum DEP and the half-open threshold interval ``[z2, z1)`` attaining it."""
    if env.signal >= env.jam_span:
        raise DegenerateDetectionError(
            "source signal dominates the jamming span; zero detection error is reachable at tau = z2"
        )
    bp = breakpoints(env)
    return 1.0 - env.signal / env.jam_span, (bp.z2, bp.z1)


class CovertCheck(NamedTuple):
    ok: bool
    slack: float


def covert_ok(p_src: float, g_sw_wc: float, g_rw_wc: float, p_jam_max: float,
              epsilon: float) -> CovertCheck:
    """Linear covertness test ``p_src * g_sw <= epsilon * p_jam_max * g_rw`` (boundary inclusive)."""
    slack = epsilon * p_jam_max * g_rw_wc - p_src * g_sw_wc
    return CovertCheck(bool(slack >= 0.0), float(slack))


class McEstimate(NamedTuple):
    value: float
    se: float
    false_alarm: float
    miss: float


def mc_dep(tau: float, env: DetectorEnv, cfg: CovertMcConfig = CovertMcConfig(),
           h1_gain: Literal["mean", "fading"] = "mean") -> McEstimate:
    """Monte-Carlo estimate of the DEP at threshold ``tau``.

    ``h1_gain="mean"`` reproduces the averaged H1 statistic used by the closed
    forms. ``"fading"`` draws ``|zeta|^2 ~ Exp(1)`` per trial instead, which
    exposes the gap introduced by averaging; it is a diagnostic only.
    """
    fa = md = 0
    done = 0
    chunk = 0
    while done < cfg.samples:
        m = min(MC_CHUNK, cfg.samples - done)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(chunk,)))
        jam0 = rng.uniform(0.0, env.p_jam_max, m)
        jam1 = rng.uniform(0.0, env.p_jam_max, m)
        sig = env.signal * (rng.exponential(1.0, m) if h1_gain == "fading" else 1.0)
        t0 = jam0 * env.g_rw + env.noise
        t1 = sig + jam1 * env.g_rw + env.noise
        fa += int(np.count_nonzero(t0 >= tau))
        md += int(np.count_nonzero(t1 <= tau))
        done += m
        chunk += 1
    p_fa = fa / cfg.samples
    p_md = md / cfg.samples
    se = math.sqrt((p_fa * (1 - p_fa) + p_md * (1 - p_md)) / cfg.samples)
    return McEstimate(p_fa + p_md, se, p_fa, p_md)


def binomial_se(env: DetectorEnv, tau: float, samples: int) -> float:
    """Standard error of ``mc_dep`` if the closed forms are exact."""
    p_fa = float(false_alarm_prob(tau, env))
    p_md = float(miss_detect_prob(tau, env))
    return math.sqrt((p_fa * (1 - p_fa) + p_md * (1 - p_md)) / samples)
