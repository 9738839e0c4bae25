"""The seventeen forecasts compared in the simulation study.

Each entry names how the single-source curves are obtained and, for
combinations, the method template and estimator.
"""
from dataclasses import dataclass

from .combine import ComboParams
from .exceptions import DomainError


@dataclass(frozen=True)
class MethodSpec:
    name: str
    label: str
    source_fit: str          # "ml" (log-normal), "km", or "none"
    template: ComboParams = None
    estimator: str = None    # "ml", "minibs" or None
    n_params: int = 0
    source: int = None       # 1 or 2 for single-source forecasts

    @property
    def is_combination(self):
        return self.source is None


REGISTRY = (
    MethodSpec("source1", "source 1", "ml", source=1),
    MethodSpec("source2", "source 2", "ml", source=2),
    MethodSpec("source1_km", "source 1 (KM)", "km", source=1),
    MethodSpec("source2_km", "source 2 (KM)", "km", source=2),
    MethodSpec("lp", "LP", "ml", ComboParams("LP"), "ml", 1),
    MethodSpec("bp3", "BP3", "ml", ComboParams("BP"), "ml", 3),
    MethodSpec("gp3", "GP3", "ml", ComboParams("GP"), "ml", 3),
    MethodSpec("hb", "HB", "km", ComboParams("HB"), "minibs", 1),
    MethodSpec("lp_ibs", "LP_IBS", "ml", ComboParams("LP"), "minibs", 1),
    MethodSpec("bp_ibs", "BP_IBS", "ml", ComboParams("BP"), "minibs", 3),
    MethodSpec("gp_ibs", "GP_IBS", "ml", ComboParams("GP"), "minibs", 3),
    MethodSpec("bp2", "BP2", "ml", ComboParams("BP", restriction="fix_alpha_eq_beta"), "ml", 2),
    MethodSpec("gp1", "GP1", "ml", ComboParams("GP", restriction="fix_mean_var"), "ml", 1),
    MethodSpec("gp2", "GP2", "ml", ComboParams("GP", restriction="fix_mean"), "ml", 2),
    MethodSpec("gp3t", "GP3-t", "ml", ComboParams("GPt"), "ml", 3),
    MethodSpec("lp0", "LP0", "none", ComboParams("LP0", restriction="fixed_equal_weights"), None, 0),
    MethodSpec("merge", "merge", "ml", ComboParams("MERGE"), None, 0),
)

METHOD_NAMES = tuple(m.name for m in REGISTRY)
BY_NAME = {m.name: m for m in REGISTRY}

# combination methods (everything except single sources, LP0 and merge)
COMBINATION_NAMES = tuple(m.name for m in REGISTRY
                          if m.is_combination and m.name not in ("lp0", "merge"))

# CLI spellings
CLI_METHODS = {"lp": "lp", "bp3": "bp3", "bp2": "bp2", "gp1": "gp1", "gp2": "gp2", "gp3": "gp3",
               "gpt": "gp3t", "hb": "hb", "lp0": "lp0", "merge": "merge"}


def get(name):
    try:
        return BY_NAME[name]
    except KeyError:
        raise DomainError(f"unknown method {name!r}") from None


def template_for(name):
    """Combination template for a registry or CLI method name."""
    spec = get(CLI_METHODS.get(name, name))
    if spec.template is None:
        raise DomainError(f"{name} is not a combination method")
    return spec.template
