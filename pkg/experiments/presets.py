"""
Built-in experiment descriptions, one per limit statement under study.

Presets are raw dictionaries so that ``--override`` assignments apply before
validation. Sample counts are desk-scale; raise ``sampler.count`` for
tighter error bars.

Radii of the 2D and 3D presets are nominal: ``ball.acceptance`` fixes the
unit they are measured in, from the fraction of GFF samples the smallest
origin ball should hold. In d = 3 the lowest Littlewood-Paley block of a
sample is of order one for every kappa, so no absolute radius below one
would ever be hit at these sample counts.
"""
from __future__ import annotations

import copy
import math
from typing import Sequence

from core.errors import ConfigError
from experiments.config import ExperimentConfig, apply_override, parse_config

SQRT2_HALF = math.sqrt(2.0) / 2.0
R_GRID = [0.4, 0.2, 0.1, 0.05]
# 1D balls: below 0.15 almost nothing is accepted, above 0.25 the Cameron-Martin weights degenerate
R_GRID_1D = [0.25, 0.2, 0.175, 0.15]
SCHEDULE_R = [0.4, 0.2, 0.1]
DEGENERACY_AMPLITUDE = 0.15

PRESETS: dict[str, dict] = {
    "om1d": {
        "experiment": "om_limit",
        "torus": {"d": 1},
        "model": {"kind": "phi4_1", "N": 32},
        "z1": {"modes": [{"k": [1], "re": SQRT2_HALF}]},
        "z2": {"modes": [{"k": [2], "re": SQRT2_HALF / 2.0}]},
        "ball": {"kind": "plain", "alpha": 0.25, "r_values": R_GRID_1D},
        "sampler": {"count": 1_000_000, "chunk_size": 4096},
    },
    "om2d-enhanced": {
        "experiment": "om_limit",
        "diagnostics": True,
        "torus": {"d": 2},
        "model": {"kind": "pphi2", "N": 16, "coeffs": [0.0, 0.0, 0.0, 0.0, 0.25]},
        "z1": {"modes": [{"k": [1, 0], "re": 0.08}]},
        "z2": {"modes": [{"k": [1, 1], "re": 0.05}]},
        "ball": {
            "kind": "enhanced_p", "degree": 4, "alpha": 0.3, "kappa": 0.2, "r_values": R_GRID,
            "acceptance": 0.02, "pilot_count": 2048,
        },
        "sampler": {"count": 200_000, "chunk_size": 256},
    },
    "omP2": {
        "experiment": "om_limit",
        "diagnostics": True,
        "torus": {"d": 2},
        "model": {"kind": "pphi2", "N": 8, "coeffs": [0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 0.25]},
        "z1": {"modes": [{"k": [1, 0], "re": 0.08}]},
        "z2": {"modes": [{"k": [0, 1], "re": 0.04}, {"k": [1, 1], "re": 0.04}]},
        "ball": {
            "kind": "enhanced_p", "degree": 6, "alpha": 0.3, "r_values": R_GRID,
            "acceptance": 0.02, "pilot_count": 2048,
        },
        "sampler": {"count": 100_000, "chunk_size": 256},
    },
    "degeneracy3d": {
        "experiment": "degeneracy3d",
        "diagnostics": True,
        "torus": {"d": 3},
        "model": {"kind": "phi4_3", "N": 8, "level": 8, "counterterm_scale": 1.0},
        "z1": {"modes": [{"k": [1, 0, 0], "re": DEGENERACY_AMPLITUDE}]},
        "ball": {
            "kind": "enhanced_3d", "kappa": 0.1, "n_set": [2, 4, 8],
            "r_values": [0.1 * math.sqrt(2.0) * DEGENERACY_AMPLITUDE],
            "acceptance": 0.1, "pilot_count": 512,
        },
        "sampler": {"count": 8_000, "chunk_size": 16},
    },
    "wickcube-log": {
        "experiment": "wick_moment",
        "torus": {"d": 3},
        "wick": {
            "orders": [3],
            "levels": [2, 4, 8],
            "test_field": {"modes": [{"k": [1, 0, 0], "re": 0.5}, {"k": [0, 1, 1], "re": 0.25}]},
        },
        "sampler": {"count": 100_000, "chunk_size": 64},
    },
    "joint-limit": {
        "experiment": "joint_limit",
        "torus": {"d": 3},
        "model": {"kind": "phi4_3", "N": 4, "level": 4, "counterterm_scale": 1.0},
        "z1": {"modes": [{"k": [1, 0, 0], "re": 0.1}]},
        "z2": {"modes": [{"k": [0, 2, 0], "re": 0.1}]},
        "ball": {
            "kind": "fully_renorm_3d", "kappa": 0.1, "n_set": [2, 4], "r_values": SCHEDULE_R,
            "acceptance": 0.1, "pilot_count": 1024,
        },
        "schedule": {"exponent": 0.5},
        "sampler": {"count": 100_000, "chunk_size": 64},
    },
    "third-order": {
        "experiment": "third_order",
        "torus": {"d": 3},
        "model": {"kind": "phi4_3", "N": 4, "level": 4, "counterterm_scale": 1.0},
        "z1": {"modes": [{"k": [1, 0, 0], "re": 0.05}]},
        "z2": {"modes": [{"k": [0, 1, 0], "re": 0.03}]},
        "ball": {
            "kind": "fully_renorm_3d", "kappa": 0.1, "n_set": [2, 4], "r_values": SCHEDULE_R,
            "acceptance": 0.1, "pilot_count": 1024,
        },
        "schedule": {"exponent": 0.5},
        "sampler": {"count": 100_000, "chunk_size": 64},
    },
    "oracle-suite": {
        "experiment": "oracle_suite",
        "torus": {"d": 1},
        "model": {"kind": "gff", "N": 1},
        "z1": {"modes": [{"k": [1], "re": 0.05}]},
        "ball": {"kind": "plain", "norm": "sup", "r_values": [0.3, 0.15]},
        "wick": {"orders": [1, 2, 3], "levels": [4, 8], "test_field": {"modes": [{"k": [1], "re": SQRT2_HALF}]}},
        "sampler": {"count": 200_000, "chunk_size": 4096},
    },
}


def list_presets() -> list[str]:
    return list(PRESETS)


def preset_data(preset_id: str) -> dict:
    if preset_id not in PRESETS:
        raise ConfigError(f"Unknown preset {preset_id!r}; valid presets: {', '.join(PRESETS)}", "preset")
    data = copy.deepcopy(PRESETS[preset_id])
    data["name"] = preset_id
    return data


def build_preset(preset_id: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    data = preset_data(preset_id)
    for assignment in overrides:
        apply_override(data, assignment)
    return parse_config(data)
