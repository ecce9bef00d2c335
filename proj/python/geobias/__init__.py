"""Python access to the geolocation bias audit toolkit."""

import json as _json

from ._geobias import (
    InputError,
    NumericalError,
    __version__,
    boundary_distance_degrees,
    composite_dci,
    cronbach_alpha,
    haversine_miles,
    ols_fit,
    principal_factors,
    run,
    spearman_brown,
    student_t_two_sided_p,
)
from . import _geobias


def synth(config, out_dir, threads=0):
    """Generate a synthetic world. config is a dict or a JSON string."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _json.loads(_geobias.synth(text, str(out_dir), threads))


def pipeline(input_dir, out_dir, bins="quintiles", threads=0):
    """Run all stages on a synth output directory; returns the manifest."""
    return _json.loads(_geobias.pipeline(str(input_dir), str(out_dir), bins, threads))


__all__ = [
    "InputError",
    "NumericalError",
    "__version__",
    "boundary_distance_degrees",
    "composite_dci",
    "cronbach_alpha",
    "haversine_miles",
    "ols_fit",
    "pipeline",
    "principal_factors",
    "run",
    "spearman_brown",
    "student_t_two_sided_p",
    "synth",
]
