"""FDR control with compound e-values.

A toolkit built around the e-weighted BH (ep-BH) step-up procedure: the
rejection engines, a catalog of null-proportion-adaptive compound e-value
constructors together with their uniform leave-one-out improvements, the
simultaneous t-test machinery, and a Monte Carlo harness that empirically
certifies FDR control, dominance, and the compound e-value property.
"""

from .core import (
    RejectionSet,
    q_transform,
    ep_bh,
    ep_bh_mask,
    p_bh,
    bh_count,
    weighted_p_bh,
    tau_censored_ep_bh,
)
from .errors import QuadratureError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "RejectionSet",
    "q_transform",
    "ep_bh",
    "ep_bh_mask",
    "p_bh",
    "bh_count",
    "weighted_p_bh",
    "tau_censored_ep_bh",
    "ValidationError",
    "QuadratureError",
    "__version__",
]
