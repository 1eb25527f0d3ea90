"""Rejection ABC for the accumulator parameters (gain, leak, noise).

Proposals drawn from independent uniform priors are scored by simulating
response onsets for every surprise series and comparing them to the
observed onsets; proposals whose distance is within epsilon form the
posterior sample. Everything is driven by one seed: proposal draws come
from one stream and each proposal's simulation noise from a seed derived
from (seed, proposal index), so results are identical no matter how the
proposal evaluations are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accumulator import _drive_on_grid, integrate_batch
from .errors import LengthMismatch
from .belief import SurpriseSeries

PARAM_NAMES = ("gain", "leak", "noise_sigma")
_CHUNK = 2048           # proposals simulated per vectorized pass


@dataclass(frozen=True)
class AbcConfig:
    """Priors, tolerance and simulation budget for rejection ABC."""

    prior_gain: tuple[float, float]
    prior_noise: tuple[float, float]
    prior_leak: tuple[float, float] = (-5.0, 0.0)   # leaky side only
    epsilon: float = 0.5                # s, distance tolerance
    n_proposals: int = 1000
    mc_runs_per_proposal: int = 1
    distance_kind: str = "rmse_of_means"    # or "quantile_rmse"
    seed: int = 0
    threshold: float = 1.0
    a0: float = 0.0
    clamp_nonnegative: bool = True
    baseline: float | None = None       # None: per-series median

    def __post_init__(self):
        for name, (lo, hi) in self.prior_bounds().items():
            if not lo < hi:
                raise ValueError(f"prior for {name} needs lo < hi, got "
                                 f"({lo}, {hi})")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.n_proposals < 1 or self.mc_runs_per_proposal < 1:
            raise ValueError("n_proposals and mc_runs_per_proposal >= 1")
        if self.distance_kind not in ("rmse_of_means", "quantile_rmse"):
            raise ValueError(f"unknown distance {self.distance_kind!r}")

    def prior_bounds(self) -> dict:
        return {"gain": self.prior_gain, "leak": self.prior_leak,
                "noise_sigma": self.prior_noise}


@dataclass(frozen=True)
class AbcPosterior:
    """Accepted (gain, leak, noise_sigma, distance) rows, in proposal order."""

    accepted: np.ndarray            # shape (m, 4)
    acceptance_rate: float
    summary: dict                   # per-parameter {"mean": .., "sd": ..}
    n_proposals: int
    epsilon: float
    distances: np.ndarray = field(repr=False, default=None)

    @property
    def no_acceptances(self) -> bool:
        return len(self.accepted) == 0


def onset_distance(simulated, observed, kind: str = "rmse_of_means",
                   horizons=None) -> float:
    """Distance between per-event simulated onsets and observed onsets.

    simulated: one array of onset samples per event (NaN = no response);
    non-responses are penalized by the event's horizon time. rmse_of_means
    compares per-event mean onsets; quantile_rmse compares the pooled
    10/50/90% quantiles against the observed ones.
    """
    observed = np.asarray(observed, dtype=float)
    if len(simulated) != len(observed):
        raise LengthMismatch(f"{len(simulated)} simulated events vs "
                             f"{len(observed)} observed onsets")
    if horizons is None:
        horizons = [np.nan] * len(simulated)
    filled = []
    for sim, hor in zip(simulated, horizons):
        sim = np.asarray(sim, dtype=float)
        if np.isnan(sim).any():
            if not np.isfinite(hor):
                raise ValueError("non-responding runs need a horizon to "
                                 "penalize against")
            sim = np.where(np.isnan(sim), hor, sim)
        filled.append(sim)
    if kind == "rmse_of_means":
        means = np.array([s.mean() for s in filled])
        return float(np.sqrt(((means - observed) ** 2).mean()))
    if kind == "quantile_rmse":
        pooled = np.concatenate(filled)
        q_sim = np.percentile(pooled, (10, 50, 90))
        q_obs = np.percentile(observed, (10, 50, 90))
        return float(np.sqrt(((q_sim - q_obs) ** 2).mean()))
    raise ValueError(f"unknown distance kind {kind!r}")


def _propose(config: AbcConfig) -> np.ndarray:
    """All proposal parameter triples, drawn up front for determinism."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    cols = []
    for name in PARAM_NAMES:
        lo, hi = config.prior_bounds()[name]
        cols.append(rng.uniform(lo, hi, size=config.n_proposals))
    return np.column_stack(cols)


def _simulate_distances(config: AbcConfig, proposals: np.ndarray,
                        surprise_sets, observed) -> np.ndarray:
    runs = config.mc_runs_per_proposal
    grids = [_drive_on_grid(s, config.baseline, None) for s in surprise_sets]
    horizons = [float(t[-1]) for _, t, _ in grids]
    noise_seeds = np.random.SeedSequence(config.seed).spawn(
        config.n_proposals)

    distances = np.empty(config.n_proposals)
    for start in range(0, config.n_proposals, _CHUNK):
        idx = slice(start, min(start + _CHUNK, config.n_proposals))
        chunk = proposals[idx]
        c = len(chunk)
        gens = [np.random.default_rng(s) for s in noise_seeds[idx]]
        gain = chunk[:, 0][:, None]
        leak = chunk[:, 1][:, None]
        sigma = chunk[:, 2][:, None]
        onsets_per_event = []
        for drive, t, dt in grids:
            n_steps = len(drive) - 1
            noise = np.stack([g.standard_normal((runs, n_steps))
                              for g in gens])
            onsets, _ = integrate_batch(
                drive, dt, float(t[0]), gain, leak, sigma,
                threshold=config.threshold, a0=config.a0,
                clamp_nonnegative=config.clamp_nonnegative, noise=noise)
            onsets_per_event.append(onsets)          # (c, runs)
        for j in range(c):
            sims = [ev[j] for ev in onsets_per_event]
            distances[start + j] = onset_distance(
                sims, observed, config.distance_kind, horizons=horizons)
    return distances


def rejection_abc(config: AbcConfig, surprise_sets: list[SurpriseSeries],
                  observed_onsets) -> AbcPosterior:
    """Rejection ABC over the accumulator parameters.

    Zero acceptances are reported (acceptance_rate 0, empty posterior),
    not raised; the caller is expected to relax epsilon. The full
    distance vector is retained on the posterior so epsilon can be
    re-chosen (e.g. as a distance quantile) without re-simulation.
    """
    observed = np.asarray(observed_onsets, dtype=float)
    if len(surprise_sets) != len(observed) or len(observed) == 0:
        raise LengthMismatch(
            f"{len(surprise_sets)} surprise series vs {len(observed)} "
            "observed onsets")
    proposals = _propose(config)
    distances = _simulate_distances(config, proposals, surprise_sets,
                                    observed)
    keep = distances <= config.epsilon
    accepted = np.column_stack([proposals[keep], distances[keep]])
    summary = {}
    for i, name in enumerate(PARAM_NAMES):
        vals = accepted[:, i]
        summary[name] = {
            "mean": float(vals.mean()) if vals.size else math.nan,
            "sd": float(vals.std(ddof=0)) if vals.size else math.nan,
        }
    return AbcPosterior(accepted=accepted,
                        acceptance_rate=float(keep.mean()),
                        summary=summary, n_proposals=config.n_proposals,
                        epsilon=config.epsilon, distances=distances)
