"""Combination of censored ensemble time-to-event forecasts."""
from ._backend import BACKEND
from .combine import (ComboParams, CombinedCurve, HazardBlendCurve, bp_combine, gp_combine,
                      gpt_combine, hb_combine, lp0_combine, lp_combine, merge_combine)
from .estimate import TrainingPair, TrainingSet, minibs_estimate, ml_estimate
from .evaluate import ScoreReport, brier_score, ibs, pit, skill_score
from .exceptions import (CensoredRealizationError, ConvergenceError, DegenerateFitError,
                         DomainError, EmptyEnsembleError, InsufficientHistoryError,
                         MissingStatsError, NoDensityError, SchemaError, SurvBlendError)
from .survcurve import (CensoredTime, Ensemble, LogNormalCurve, StepCurve, SurvivalCurve,
                        corrected_curve, eval_density, eval_survival, km_estimate,
                        lognormal_minibs_fit, lognormal_ml_fit)

__version__ = "0.1.0"
