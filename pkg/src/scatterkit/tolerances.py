"""Default tolerances, collected in one place so every report can print them."""
from __future__ import annotations

from . import operator_core as _oc

#: max-norm residual allowed for identities that are exact in finite dimensions
EXACT_TOL = 1e-8
#: residual allowed for mesh-regularized wave-operator checks
KR_TOL = 0.05
#: tail residual of a time schedule below which a wave computation is converged
CONV_TOL = 1e-3
#: largest deviation of the stationary eps-trail from its linear fit
FIT_TOL = 0.02
#: relative singular value cut used for the range of a computed wave operator
RANGE_TOL = 0.5
#: relative tolerance for [P, H] = 0 in a scattering pair
COMMUTE_TOL = 1e-8
#: accepted spread of the five smoothness constants
SMOOTH_SPREAD_TOL = 0.3
#: growth of the radial difference quotient that still counts as stable
RADIAL_GROWTH_TOL = 4.0


def defaults() -> dict:
    """Name -> value for every tolerance used by the toolkit."""
    return {
        "hermiticity_tol": _oc.HERMITICITY_TOL,
        "ortho_tol": _oc.ORTHO_TOL,
        "recon_tol": _oc.RECON_TOL,
        "proj_tol": _oc.PROJ_TOL,
        "resolvent_guard": _oc.RESOLVENT_GUARD,
        "exact_tol": EXACT_TOL,
        "kr_tol": KR_TOL,
        "conv_tol": CONV_TOL,
        "fit_tol": FIT_TOL,
        "range_tol": RANGE_TOL,
        "commute_tol": COMMUTE_TOL,
        "smooth_spread_tol": SMOOTH_SPREAD_TOL,
        "radial_growth_tol": RADIAL_GROWTH_TOL,
    }
