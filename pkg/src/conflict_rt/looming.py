"""Optical angle, looming (angular expansion rate), and optical TTC.

The optical angle subtended by a lead object of width w at distance r is
theta = 2 * arctan(w / (2 r)); the same formula applied to the measured
image width and the camera focal length recovers theta from video pixels.
Looming is the time derivative theta_dot, and tau = theta / theta_dot is
the optically specified time to collision.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import NegativeWidth, NonPositiveRange, TooShort
from .trace import KinematicTrace

TAU_THETA_DOT_MIN = 1e-6   # rad/s; below this tau is undefined (stored NaN)

DEFAULT_FOCAL_LENGTH_MM = 3.6
# Measured pixel widths are rescaled to mm with a direct multiplicative
# factor. The physical pixel pitch of the source camera is not recoverable,
# so the factor is configurable rather than derived.
DEFAULT_PIXEL_TO_MM = 720.0 / 500.0


@dataclass(frozen=True)
class CameraModel:
    """Forward-camera optics used to turn image widths into angles."""

    focal_length: float = DEFAULT_FOCAL_LENGTH_MM   # mm
    pixel_to_mm: float = DEFAULT_PIXEL_TO_MM        # mm per measured pixel

    def __post_init__(self):
        if not self.focal_length > 0:
            raise ValueError(f"focal_length must be > 0: {self.focal_length}")
        if not self.pixel_to_mm > 0:
            raise ValueError(f"pixel_to_mm must be > 0: {self.pixel_to_mm}")


@dataclass(frozen=True)
class LoomingSignal:
    """theta(t), theta_dot(t) and tau(t) for a leading object.

    tau is NaN wherever theta_dot <= 1e-6 rad/s (opening or static gap has
    no optically specified collision time).
    """

    dt: float
    t0: float
    theta: np.ndarray
    theta_dot: np.ndarray
    tau: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.theta))


def theta_from_pixels(w_px, cam: CameraModel = CameraModel()):
    """Optical angle from an image width in pixels. Accepts arrays."""
    w_px = np.asarray(w_px, dtype=float)
    if np.any(w_px < 0):
        raise NegativeWidth(f"pixel width must be >= 0, got {w_px.min()}")
    theta = 2.0 * np.arctan(w_px * cam.pixel_to_mm / 2.0 / cam.focal_length)
    return float(theta) if theta.ndim == 0 else theta


def theta_from_geometry(width, rng):
    """Optical angle of an object of physical width (m) at range (m)."""
    width = np.asarray(width, dtype=float)
    rng = np.asarray(rng, dtype=float)
    if np.any(rng <= 0):
        raise NonPositiveRange(f"range must be > 0, got {rng.min()}")
    if np.any(width <= 0):
        raise NegativeWidth(f"width must be > 0, got {width.min()}")
    theta = 2.0 * np.arctan(width / (2.0 * rng))
    return float(theta) if theta.ndim == 0 else theta


def theta_dot_series(theta, dt: float, smoothing_window: int = 1) -> np.ndarray:
    """Differentiate a theta series.

    Central finite differences (one-sided at the endpoints), optionally
    followed by a centered moving average. The default window 1 disables
    smoothing and is exact on polynomials of degree <= 2; use ~5 for noisy
    measured signals. Edge samples of the moving average are handled by
    edge replication.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size < 3:
        raise TooShort(f"need >= 3 samples to differentiate, got {theta.size}")
    if smoothing_window < 1 or smoothing_window % 2 == 0:
        raise ValueError(
            f"smoothing_window must be odd and >= 1: {smoothing_window}")
    d = np.gradient(theta, dt)
    if smoothing_window > 1:
        d = uniform_filter1d(d, size=smoothing_window, mode="nearest")
    return d


def compute_tau(theta, theta_dot) -> np.ndarray:
    """theta / theta_dot where looming is positive, NaN elsewhere."""
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    tau = np.full_like(theta, np.nan)
    ok = theta_dot > TAU_THETA_DOT_MIN
    tau[ok] = theta[ok] / theta_dot[ok]
    return tau


def looming_from_trace(trace: KinematicTrace,
                       smoothing_window: int = 1) -> LoomingSignal:
    """Looming of the POV as seen from the SV.

    Range is the Euclidean distance between the two agents' positions,
    which reduces to the bumper-to-bumper gap pov.x - sv.x in rear-end
    geometry. Ranges are floored at 1 mm so theta stays below pi.
    """
    r = np.hypot(trace.pov.x - trace.sv.x, trace.pov.y - trace.sv.y)
    r = np.maximum(r, 1e-3)
    theta = theta_from_geometry(trace.pov_width, r)
    theta_dot = theta_dot_series(theta, trace.dt, smoothing_window)
    return LoomingSignal(dt=trace.dt, t0=trace.t0, theta=theta,
                         theta_dot=theta_dot,
                         tau=compute_tau(theta, theta_dot))


def first_crossing(times, values, threshold: float,
                   from_t: float | None = None) -> float | None:
    """Earliest time >= from_t where the signal reaches the threshold.

    The signal is treated as piecewise linear between samples, so the
    returned time is interpolated within the bracketing segment. If the
    (interpolated) signal is already at or above the threshold at from_t,
    from_t itself is returned. None if the threshold is never reached.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if from_t is None:
        from_t = float(times[0])
    if from_t < times[0] - 1e-12 or from_t > times[-1] + 1e-12:
        raise ValueError(f"from_t {from_t:g} outside span "
                         f"[{times[0]:g}, {times[-1]:g}]")
    from_t = min(max(from_t, float(times[0])), float(times[-1]))
    v_from = float(np.interp(from_t, times, values))
    if v_from >= threshold:
        return from_t
    # A piecewise-linear signal can only reach the threshold at or before a
    # sample that is itself >= threshold, so the first such sample after
    # from_t pins the bracketing segment.
    idx = np.flatnonzero((times > from_t) & (values >= threshold))
    if idx.size == 0:
        return None
    j = int(idx[0])
    if times[j - 1] <= from_t:
        lo_t, lo_v = from_t, v_from
    else:
        lo_t, lo_v = float(times[j - 1]), float(values[j - 1])
    hi_t, hi_v = float(times[j]), float(values[j])
    return lo_t + (hi_t - lo_t) * (threshold - lo_v) / (hi_v - lo_v)


def save_looming(sig: LoomingSignal, path) -> None:
    """Write t, theta, theta_dot, tau; an empty tau cell means undefined."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "theta", "theta_dot", "tau"])
        t = sig.t
        for i in range(len(sig.theta)):
            tau = sig.tau[i]
            writer.writerow([
                repr(float(t[i])), repr(float(sig.theta[i])),
                repr(float(sig.theta_dot[i])),
                "" if np.isnan(tau) else repr(float(tau)),
            ])


def load_looming(path) -> LoomingSignal:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    theta = np.array([float(r["theta"]) for r in rows])
    theta_dot = np.array([float(r["theta_dot"]) for r in rows])
    tau = np.array([float(r["tau"]) if r["tau"] else np.nan for r in rows])
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.1
    return LoomingSignal(dt=dt, t0=float(t[0]), theta=theta,
                         theta_dot=theta_dot, tau=tau)
