"""nslab: numerical lab for Navier-Stokes with weak L3 initial data."""

from .errors import InvalidInputError, LabError, ManifestError, NumericalError
from .field import Grid, GridField, ScalarField
from .lorentz import Thresholds
from .manifest import RunManifest, load_manifest
from .reports import VerifierReport
from .timegrid import FieldTrace, TimeGrid

__version__ = "0.1.0"

__all__ = [
    "FieldTrace",
    "Grid",
    "GridField",
    "InvalidInputError",
    "LabError",
    "ManifestError",
    "NumericalError",
    "RunManifest",
    "ScalarField",
    "Thresholds",
    "TimeGrid",
    "VerifierReport",
    "load_manifest",
]
