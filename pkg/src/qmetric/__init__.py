"""Finite quasimetric measure spaces: conformal deformations and structural constants."""

__version__ = "0.1.0"

from qmetric.space import (  # noqa: E402
    Ball,
    InvalidRadiiError,
    InvalidSpaceError,
    MeasuredSpace,
    QuasimetricSpace,
    ahlfors_fit,
    ball,
    measure_doubling_constant,
    metric_doubling_constant,
    quasimetric_constant,
    structure_report,
    uniform_perfectness,
)
from qmetric.transforms import (  # noqa: E402
    chain_metrize,
    david_semmes,
    flatten,
    inversion,
    roundtrip,
    sphericalize,
)
