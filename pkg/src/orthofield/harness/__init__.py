"""Monte Carlo experiments over sampled lattices."""

from .clt import ExperimentSpec, run_annealed_clt, run_quenched_clt
from .coboundary import coboundary_residuals
from .counterexample import counterexample_probe
from .functional import FunctionalSpec, run_functional_fdd, tightness_moment_probe
from .gh import gh_check
from .gof import gof_stats
from .sigma import estimate_sigma2

__all__ = ["ExperimentSpec", "run_annealed_clt", "run_quenched_clt", "coboundary_residuals", "counterexample_probe",
           "FunctionalSpec", "run_functional_fdd", "tightness_moment_probe", "gh_check", "gof_stats",
           "estimate_sigma2"]
