"""Evidence accumulation over a surprise series: dA/dt = k s + leak A + noise.

The activation A integrates baseline-corrected surprise with Euler
Maruyama stepping and triggers a response onset at its first threshold
crossing (linearly interpolated between samples). Leaky dynamics need
leak < 0; the sign is taken literally, so fits should constrain it.

Baseline subtraction exists because a continuous-density prior yields a
nonzero surprisal even for perfectly expected observations; accumulating
that constant would fire without any event. The default baseline is the
series median, which matches the pre-event level on mostly-quiet series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySeries
from .belief import SurpriseSeries


@dataclass(frozen=True)
class AccumulatorParams:
    """Gain/leak/noise of the accumulator plus integration settings.

    dt = None integrates on the surprise series' own grid; setting it
    resamples the drive (linear interpolation) to a finer or coarser
    step. Activation is clamped at zero by default, the usual choice for
    leaky accumulators.
    """

    gain: float                     # activation per (nat * s)
    leak: float = 0.0               # 1/s, <= 0 for leaky dynamics
    noise_sigma: float = 0.0        # activation per sqrt(s)
    threshold: float = 1.0
    a0: float = 0.0
    dt: float | None = None
    clamp_nonnegative: bool = True

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.clamp_nonnegative and self.threshold <= max(self.a0, 0.0):
            raise ValueError("threshold must exceed the starting activation")


@dataclass(frozen=True)
class OnsetResult:
    """First threshold crossing (None if never) plus the trajectory."""

    onset_t: float | None
    seed: int | None
    t: np.ndarray | None = None
    trajectory: np.ndarray | None = None


def _drive_on_grid(series: SurpriseSeries, baseline: float | None,
                   dt: float | None):
    """Baseline-corrected drive values and the integration grid."""
    s = np.asarray(series.s, dtype=float)
    if s.size < 2:
        raise EmptySeries(f"need >= 2 surprise samples, got {s.size}")
    if baseline is None:
        baseline = float(np.median(s))
    t = series.t
    if dt is not None and abs(dt - series.dt) > 1e-12:
        n = int(math.floor((t[-1] - t[0]) / dt + 1e-9)) + 1
        t = t[0] + dt * np.arange(n)
        s = np.interp(t, series.t, s)
    else:
        dt = series.dt
    return np.maximum(s - baseline, 0.0), t, dt


def integrate_batch(drive: np.ndarray, dt: float, t0: float, gain, leak,
                    noise_sigma, threshold: float = 1.0, a0: float = 0.0,
                    clamp_nonnegative: bool = True, noise=None,
                    keep_trajectory: bool = False):
    """Euler-Maruyama integration of a batch of accumulators.

    gain/leak/noise_sigma broadcast over the batch shape; noise, when
    given, must hold standard normals of shape batch + (len(drive) - 1,).
    Returns (onsets, trajectories) where onsets is NaN for runs that
    never reach the threshold.
    """
    gain = np.asarray(gain, dtype=float)
    leak = np.asarray(leak, dtype=float)
    sigma = np.asarray(noise_sigma, dtype=float)
    n_steps = len(drive) - 1
    shapes = [gain.shape, leak.shape, sigma.shape]
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        shapes.append(noise.shape[:-1])
    batch_shape = np.broadcast_shapes(*shapes)
    work_shape = batch_shape if batch_shape else (1,)
    sqrt_dt = math.sqrt(dt)

    a = np.broadcast_to(np.asarray(a0, dtype=float), work_shape).copy()
    if clamp_nonnegative:
        a = np.maximum(a, 0.0)
    onsets = np.full(work_shape, np.nan)
    onsets[a >= threshold] = t0
    traj = None
    if keep_trajectory:
        traj = np.empty(work_shape + (n_steps + 1,))
        traj[..., 0] = a

    for i in range(n_steps):
        da = (gain * drive[i] + leak * a) * dt
        if noise is not None:
            da = da + sigma * sqrt_dt * noise[..., i]
        a_new = np.broadcast_to(a + da, work_shape)
        if clamp_nonnegative:
            a_new = np.maximum(a_new, 0.0)
        crossed = np.isnan(onsets) & (a_new >= threshold)
        if crossed.any():
            frac = (threshold - a[crossed]) / (a_new[crossed] - a[crossed])
            onsets[crossed] = t0 + (i + frac) * dt
        a = a_new
        if keep_trajectory:
            traj[..., i + 1] = a
    if traj is not None:
        traj = traj.reshape(batch_shape + (n_steps + 1,))
    return onsets.reshape(batch_shape), traj


def integrate(params: AccumulatorParams, series: SurpriseSeries,
              seed: int = 0, baseline: float | None = None,
              keep_trajectory: bool = True) -> OnsetResult:
    """Single accumulator run over a surprise series.

    Deterministic given (params, series, seed); noise_sigma = 0 runs use
    no random numbers at all.
    """
    drive, t, dt = _drive_on_grid(series, baseline, params.dt)
    noise = None
    if params.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(len(drive) - 1)
    onsets, traj = integrate_batch(
        drive, dt, float(t[0]), params.gain, params.leak, params.noise_sigma,
        threshold=params.threshold, a0=params.a0,
        clamp_nonnegative=params.clamp_nonnegative, noise=noise,
        keep_trajectory=keep_trajectory)
    onset = None if np.isnan(onsets[()]) else float(onsets[()])
    return OnsetResult(onset_t=onset, seed=seed, t=t if keep_trajectory else None,
                       trajectory=traj if keep_trajectory else None)


@dataclass(frozen=True)
class McOnsets:
    """Monte Carlo onset sample (NaN = no response) with summary stats."""

    onsets: np.ndarray
    mean: float
    sd: float
    quantiles: dict
    p_no_response: float


def monte_carlo_onsets(params: AccumulatorParams, series: SurpriseSeries,
                       n: int, seed: int = 0,
                       baseline: float | None = None) -> McOnsets:
    """n independent runs with per-run seeds derived from (seed, index).

    The derived seeds make the result deterministic for a given (seed, n)
    no matter how or in what order the runs execute. Summary statistics
    are over the responding runs only; p_no_response reports the rest.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    drive, t, dt = _drive_on_grid(series, baseline, params.dt)
    noise = None
    if params.noise_sigma > 0:
        children = np.random.SeedSequence(seed).spawn(n)
        noise = np.stack([np.random.default_rng(c)
                          .standard_normal(len(drive) - 1) for c in children])
        sigma = np.full(n, params.noise_sigma)
    else:
        sigma = np.zeros(n)
    onsets, _ = integrate_batch(
        drive, dt, float(t[0]), np.full(n, params.gain),
        np.full(n, params.leak), sigma, threshold=params.threshold,
        a0=params.a0, clamp_nonnegative=params.clamp_nonnegative,
        noise=noise)
    responded = onsets[~np.isnan(onsets)]
    if responded.size:
        qs = {q: float(np.percentile(responded, q)) for q in (10, 50, 90)}
        mean, sd = float(responded.mean()), float(responded.std(ddof=0))
    else:
        qs, mean, sd = {10: math.nan, 50: math.nan, 90: math.nan}, \
            math.nan, math.nan
    return McOnsets(onsets=onsets, mean=mean, sd=sd, quantiles=qs,
                    p_no_response=float(np.isnan(onsets).mean()))
