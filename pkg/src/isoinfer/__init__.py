"""Isotonic regression at a point: estimators, limit laws and confidence intervals."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateSubsampling,
    InvalidDrift,
    InvalidInput,
    IsoInferError,
    OutOfDomain,
    SampleTooSmall,
    WindowError,
)
from .gcm import PolyLine, isotonic_via_cusum, left_slope, lower_hull, sl_gcm, sl_lcm  # noqa: E402
from .isotonic import (  # noqa: E402
    SortedSample,
    StepFunction,
    diagnostics,
    evaluate,
    fit_value_at,
    minmax_all,
    minmax_at,
    pava,
    sort_sample,
)
from .limit_law import (  # noqa: E402
    Asymmetric,
    Custom,
    DriftSpec,
    EmpiricalLaw,
    GridConfig,
    NearFlat,
    Rate,
    SlowVarying,
    WrightPoly,
    make_drift,
    quantile,
    sample_slgcm_zero,
    scaling_identity_check,
    simulate_path,
)
