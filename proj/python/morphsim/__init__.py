"""Calibration, residual-stress identification and shape prediction for printed bi-layer grids."""

import json

from ._core import (
    MorphsimError,
    confidence_interval,
    end_distance,
    pair_error,
    recoverable_strain,
    run_cli,
    viscoelastic_dominance,
)
from . import _core

__all__ = [
    "MorphsimError",
    "calibrate",
    "confidence_interval",
    "end_distance",
    "linear_card",
    "pair_error",
    "recoverable_strain",
    "report",
    "run_cli",
    "shoot",
    "simulate",
    "viscoelastic_dominance",
]


def calibrate(name, loading_csv, unloading, sweep_csv=None, defaults="pla"):
    """Material card text from a loading CSV and {sigma0: unloading CSV}."""
    pairs = sorted((float(s), str(p)) for s, p in dict(unloading).items())
    return _core.calibrate_json(name, str(loading_csv), pairs, None if sweep_csv is None else str(sweep_csv), defaults)


def linear_card(name, modulus_mpa, max_strain=0.03, defaults="cfpla"):
    return _core.linear_card_json(name, modulus_mpa, max_strain, defaults)


def shoot(card_json, observations, coupling="reselect", high_fidelity=False):
    """Identify sigma0 from (actuator_ratio, distance_mm[, temp_c]) observations."""
    rows = [(float(o[0]), float(o[1]), float(o[2]) if len(o) > 2 else 80.0) for o in observations]
    return json.loads(_core.shoot_json(card_json, rows, coupling, high_fidelity))


def simulate(design_path, segments_per_member=0):
    """Stage A and stage B states of a design file, as JSON text."""
    return _core.simulate_json(str(design_path), segments_per_member)


def report(pairs_csv, basis="recomputed", level=0.95, group="", state_json=None):
    return json.loads(_core.report_json(str(pairs_csv), basis, level, group, state_json))
