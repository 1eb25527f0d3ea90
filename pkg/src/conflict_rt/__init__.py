"""Surprise-based response timing for naturalistic traffic conflicts.

The package chains synthetic conflict kinematics, visual looming,
heuristic stimulus annotation (T1/T2/ramp-up time), a linear response
time model with its benchmark validation, and a surprisal-driven
evidence accumulator with rejection-ABC parameter fitting.
"""

__version__ = "0.1.0"

from .trace import (AgentState, AgentStates, ContextFlags, KinematicTrace,
                    ScenarioKind, Violation, load_trace, resample,
                    save_trace, validate_trace)
from .looming import (CameraModel, LoomingSignal, compute_tau,
                      first_crossing, looming_from_trace, theta_dot_series,
                      theta_from_geometry, theta_from_pixels)
from .scenarios import (CrossingProfile, CrossingSpec, CutInSpec,
                        EventContext, RearEndSpec, ScenarioFile, gen_crossing,
                        gen_cut_in, gen_rear_end, load_scenario_spec)
from .annotate import (Annotation, AnnotatorConfig, T1Rationale, annotate,
                       extrapolate_t2, required_decel)
from .response import (CANONICAL_RESPONSE_TIME, LinearRspModel, Table1Report,
                       ValidationRow, ci95, fit_ols, pearson, predict,
                       r_squared, validate_table1)
from .studies import (SimulatorStudy, benchmark_meta, benchmark_studies,
                      published_model, recompute_rut)
from .belief import (BeliefPrior, GaussianMixture, KlEstimate, PriorKind,
                     SurpriseSeries, kl_surprise, mixture_pdf, predict_prior,
                     surprisal, surprise_series)
from .accumulator import (AccumulatorParams, McOnsets, OnsetResult,
                          integrate, integrate_batch, monte_carlo_onsets)
from .abc_fit import AbcConfig, AbcPosterior, onset_distance, rejection_abc
from . import errors

__all__ = [name for name in dir() if not name.startswith("_")]
