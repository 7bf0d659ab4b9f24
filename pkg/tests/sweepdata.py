"""Loader for the shipped sweep shared by the construction and acceptance tests."""

import json
from pathlib import Path

import numpy as np

from drape.energy import Grid
from drape.params import CanonicalParams

SWEEP = json.loads((Path(__file__).with_name("acceptance_sweep.json")).read_text())


def sweep_params():
    h = SWEEP["h"]
    return [CanonicalParams(h=float(v), **SWEEP["fixed"]) for v in np.geomspace(h["min"], h["max"], h["n"])]


def sweep_grid():
    nx, ny = SWEEP["grid"]
    return Grid(nx, ny, SWEEP["fixed"]["L"])
