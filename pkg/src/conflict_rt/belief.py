"""Generative priors over future observables and surprise computation.

A prior belief about an observable at time t is the prediction of a
simple generative model run from the state at t - horizon: either "the
POV keeps its lateral velocity" (lateral position observable) or "the
looming stays where it was" (rear-end looming observable), with
prediction noise that grows linearly with the horizon. Surprise is the
surprisal -ln P(observation) under that prior; Bayesian (KL) surprise
between two beliefs is provided as the alternative measure.

All densities are scalar Gaussian mixtures; externally computed
mixture-sequence priors can be loaded from CSV and used via the custom
prior kind.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import ObservableUnavailable, OutOfSpan
from .looming import looming_from_trace
from .trace import KinematicTrace

LOG_2PI = math.log(2.0 * math.pi)
DENSITY_FLOOR = 1e-300      # keeps surprisal finite (~690.8 nats cap)


@dataclass(frozen=True)
class GaussianMixture:
    """Scalar Gaussian mixture with normalized positive weights."""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        for name in ("weights", "means", "stds"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name),
                                                        dtype=float)))
        if not (len(self.weights) == len(self.means) == len(self.stds)):
            raise ValueError("component arrays differ in length")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be > 0")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")
        if np.any(self.stds <= 0):
            raise ValueError("stds must be > 0")

    @classmethod
    def single(cls, mean: float, std: float) -> "GaussianMixture":
        return cls(weights=np.array([1.0]), means=np.array([mean]),
                   stds=np.array([std]))

    @property
    def is_single(self) -> bool:
        return len(self.weights) == 1

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / self.stds
        comp = -0.5 * z ** 2 - np.log(self.stds) - 0.5 * LOG_2PI \
            + np.log(self.weights)
        out = logsumexp(comp, axis=-1)
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return rng.normal(self.means[idx], self.stds[idx])


def mixture_pdf(gm: GaussianMixture, x):
    """Mixture density at x (scalar or array)."""
    return gm.pdf(x)


def surprisal(gm: GaussianMixture, x, floor: float = DENSITY_FLOOR):
    """-ln max(P(x), floor) in nats.

    The floor keeps far-tail observations finite; it preserves the
    ordering of more vs less surprising observations up to the cap.
    """
    if not floor > 0:
        raise ValueError(f"floor must be > 0, got {floor}")
    s = np.minimum(-gm.logpdf(x), -math.log(floor))
    return float(s) if np.ndim(s) == 0 else s


@dataclass(frozen=True)
class KlEstimate:
    nats: float
    stderr: float       # 0 for closed-form results
    exact: bool


def kl_surprise(prior: GaussianMixture, posterior: GaussianMixture,
                n_samples: int = 10000, seed: int = 0) -> KlEstimate:
    """Bayesian surprise KL(posterior || prior) in nats.

    Single-Gaussian pairs use the closed form; general mixtures fall
    back to a Monte Carlo estimate of E_post[ln post - ln prior] with
    its standard error.
    """
    if prior.is_single and posterior.is_single:
        m0, s0 = float(prior.means[0]), float(prior.stds[0])
        m1, s1 = float(posterior.means[0]), float(posterior.stds[0])
        kl = math.log(s0 / s1) + (s1 ** 2 + (m1 - m0) ** 2) / (2 * s0 ** 2) \
            - 0.5
        return KlEstimate(nats=kl, stderr=0.0, exact=True)
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000 for a usable estimate")
    rng = np.random.default_rng(seed)
    draws = posterior.sample(n_samples, rng)
    diffs = posterior.logpdf(draws) - prior.logpdf(draws)
    return KlEstimate(nats=float(diffs.mean()),
                      stderr=float(diffs.std(ddof=1) / math.sqrt(n_samples)),
                      exact=False)


class PriorKind(str, Enum):
    CONSTANT_VELOCITY_LATERAL = "ConstantVelocityLateral"
    CONSTANT_LOOMING_REAR_END = "ConstantLoomingRearEnd"
    CUSTOM = "Custom"


# default prior widths at horizon 0; entirely configuration, not truth
LATERAL_SIGMA0 = 0.1        # m
LOOMING_SIGMA0 = 0.005      # rad/s


@dataclass(frozen=True)
class BeliefPrior:
    """A generative prior: model kind, prediction horizon, noise growth.

    The prediction std is sigma0 + sigma1 * horizon. The custom kind
    carries an externally produced mixture sequence (times paired with
    mixtures) instead of generating predictions from the trace.
    """

    kind: PriorKind
    horizon: float = 1.0        # s
    sigma0: float = LATERAL_SIGMA0
    sigma1: float | None = None     # None -> 0.2 * sigma0 per second
    mixtures: tuple = ()            # custom kind: ((t, GaussianMixture), ...)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.sigma0 < 0 or (self.sigma1 is not None and self.sigma1 < 0):
            raise ValueError("noise growth parameters must be >= 0")
        if self.sigma1 is None:
            object.__setattr__(self, "sigma1", 0.2 * self.sigma0)

    @property
    def prediction_std(self) -> float:
        return self.sigma0 + self.sigma1 * self.horizon

    @classmethod
    def lateral(cls, horizon: float = 1.0, sigma0: float = LATERAL_SIGMA0,
                sigma1: float | None = None) -> "BeliefPrior":
        return cls(kind=PriorKind.CONSTANT_VELOCITY_LATERAL, horizon=horizon,
                   sigma0=sigma0, sigma1=sigma1)

    @classmethod
    def rear_end_looming(cls, horizon: float = 1.0,
                         sigma0: float = LOOMING_SIGMA0,
                         sigma1: float | None = None) -> "BeliefPrior":
        return cls(kind=PriorKind.CONSTANT_LOOMING_REAR_END, horizon=horizon,
                   sigma0=sigma0, sigma1=sigma1)

    @classmethod
    def custom(cls, mixtures, horizon: float = 1.0) -> "BeliefPrior":
        return cls(kind=PriorKind.CUSTOM, horizon=horizon,
                   mixtures=tuple(mixtures))


@dataclass(frozen=True)
class SurpriseSeries:
    """Surprisal (nats) per sample; starts one horizon into the trace."""

    dt: float
    t0: float
    s: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.s))

    @property
    def end_t(self) -> float:
        return self.t0 + self.dt * (len(self.s) - 1)


def _prediction_means(prior: BeliefPrior, trace: KinematicTrace,
                      src_t: np.ndarray) -> np.ndarray:
    """Predicted observable at src_t + horizon, per model kind."""
    t = trace.t
    if prior.kind is PriorKind.CONSTANT_VELOCITY_LATERAL:
        y = trace.pov.y
        vy = np.gradient(y, trace.dt)
        return np.interp(src_t, t, y) + np.interp(src_t, t, vy) * prior.horizon
    if prior.kind is PriorKind.CONSTANT_LOOMING_REAR_END:
        theta_dot = looming_from_trace(trace).theta_dot
        return np.interp(src_t, t, theta_dot)
    raise ObservableUnavailable(f"no generated prediction for {prior.kind}")


def predict_prior(prior: BeliefPrior, trace: KinematicTrace,
                  t: float) -> GaussianMixture:
    """Prior belief about the observable at time t, formed at t - horizon."""
    src = t - prior.horizon
    if src < trace.t0 - 1e-9 or t > trace.t0 + trace.span + 1e-9:
        raise OutOfSpan(f"t - horizon = {src:g} outside trace span")
    if prior.kind is PriorKind.CUSTOM:
        if not prior.mixtures:
            raise ObservableUnavailable("custom prior has no mixtures")
        times = np.array([mt for mt, _ in prior.mixtures])
        return prior.mixtures[int(np.argmin(np.abs(times - t)))][1]
    mean = _prediction_means(prior, trace, np.asarray([src]))[0]
    return GaussianMixture.single(float(mean), prior.prediction_std)


def _observable_series(trace: KinematicTrace, observable: str) -> np.ndarray:
    if observable == "lateral_y":
        return np.asarray(trace.pov.y)
    if observable == "theta_dot":
        return looming_from_trace(trace).theta_dot
    raise ObservableUnavailable(f"unknown observable {observable!r}; "
                                "expected 'lateral_y' or 'theta_dot'")


def surprise_series(prior: BeliefPrior, trace: KinematicTrace,
                    observable: str = "lateral_y",
                    floor: float = DENSITY_FLOOR) -> SurpriseSeries:
    """Surprisal of each observation under the prior formed one horizon
    earlier. Samples earlier than t0 + horizon have no prior and are
    omitted, so the series starts there."""
    if trace.span <= prior.horizon:
        raise OutOfSpan(f"trace span {trace.span:g} s does not exceed the "
                        f"prediction horizon {prior.horizon:g} s")
    obs = _observable_series(trace, observable)
    t = trace.t
    k0 = int(math.ceil(prior.horizon / trace.dt - 1e-9))
    t_out = t[k0:]

    if prior.kind is PriorKind.CUSTOM:
        s = np.array([surprisal(predict_prior(prior, trace, float(ti)),
                                float(oi), floor)
                      for ti, oi in zip(t_out, obs[k0:])])
    else:
        means = _prediction_means(prior, trace, t_out - prior.horizon)
        std = prior.prediction_std
        logp = -0.5 * ((obs[k0:] - means) / std) ** 2 - math.log(std) \
            - 0.5 * LOG_2PI
        s = np.minimum(-logp, -math.log(floor))
    return SurpriseSeries(dt=trace.dt, t0=float(t_out[0]), s=s)


def save_surprise(series: SurpriseSeries, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "s"])
        for ti, si in zip(series.t, series.s):
            writer.writerow([repr(float(ti)), repr(float(si))])


def load_surprise(path) -> SurpriseSeries:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise OutOfSpan(f"{Path(path).name}: need >= 2 samples")
    t = np.array([float(r["t"]) for r in rows])
    s = np.array([float(r["s"]) for r in rows])
    return SurpriseSeries(dt=float(t[1] - t[0]), t0=float(t[0]), s=s)


def load_mixture_sequence(path):
    """Read a (t, weight_i, mean_i, std_i ...) CSV into (t, mixture) pairs.

    Component triples repeat across the row; blank trailing cells are
    allowed so rows may have different component counts.
    """
    out = []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0].strip() != "t":
            raise ObservableUnavailable("mixture CSV must start with a 't' "
                                        "column")
        for row in reader:
            if not row or not row[0].strip():
                continue
            t = float(row[0])
            vals = [float(c) for c in row[1:] if c.strip() != ""]
            if len(vals) % 3 != 0 or not vals:
                raise ObservableUnavailable(
                    f"row t={t:g}: component cells must come in "
                    "(weight, mean, std) triples")
            trip = np.array(vals).reshape(-1, 3)
            out.append((t, GaussianMixture(weights=trip[:, 0],
                                           means=trip[:, 1],
                                           stds=trip[:, 2])))
    return out
