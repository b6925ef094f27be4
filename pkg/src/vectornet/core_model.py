"""Single-patch mosquito/human model and its thresholds.

The patch couples a stage-structured Aedes population (eggs E, larvae L,
adult females A split into S_m and I_m) with an SIR human population of
constant size. Everything here is a pure function of its inputs and is
reused by the network engine.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

__all__ = [
    "ModelParams",
    "PatchState",
    "load_params",
    "mosquito_threshold_r",
    "basic_reproduction_number",
    "vector_endemic_equilibrium",
    "single_patch_rhs",
    "vector_rhs",
]

PATCH_LABELS = ("E", "L", "A", "S_m", "I_m", "S_H", "I_H", "R_H")


@dataclass(frozen=True)
class ModelParams:
    """Biological and epidemiological rates, per day.

    Defaults are the reference Aedes albopictus / chikungunya values. The
    infection rates have no canonical value and default to 0.
    """

    b: float = 6.0
    K_E: float = 1000.0
    K_L: float = 500.0
    s: float = 1.0 / 3.0
    s_L: float = 1.0 / 10.0
    d: float = 1.0 / 3.0
    d_L: float = 1.0 / 3.0
    d_m: float = 1.0 / 14.0
    b_H: float = 1.0 / (78.0 * 365.0)  # also the human death rate
    beta_h: float = 0.0
    beta_m: float = 0.0
    gamma_h: float = 1.0 / 7.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"parameter {f.name} must be finite and >= 0, got {v!r}")
        if self.K_E <= 0 or self.K_L <= 0:
            raise ValueError("carrying capacities K_E and K_L must be > 0")
        if self.d_m <= 0:
            raise ValueError("adult mortality d_m must be > 0")
        if self.s + self.d <= 0 or self.s_L + self.d_L <= 0:
            raise ValueError("s + d and s_L + d_L must be > 0")

    @property
    def d_H(self) -> float:
        return self.b_H

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise KeyError(f"unknown parameter key(s): {', '.join(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def load_params(path) -> ModelParams:
    """Read a flat YAML key/value parameter file; unknown keys are rejected."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a flat mapping of parameter values")
    return ModelParams.from_dict(data)


@dataclass
class PatchState:
    E: float
    L: float
    A: float
    S_m: float
    I_m: float
    S_H: float
    I_H: float
    R_H: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in PATCH_LABELS], dtype=float)

    @classmethod
    def from_array(cls, y) -> "PatchState":
        return cls(*map(float, y))


def mosquito_threshold_r(params: ModelParams) -> float:
    """Net reproductive number of the mosquito life cycle.

    r > 1 is the condition for the vector population to persist.
    """
    p = params
    r = (p.b / (p.s + p.d)) * (p.s / (p.s_L + p.d_L)) * (p.s_L / p.d_m)
    if not math.isfinite(r):
        raise ValueError("mosquito threshold is not finite; check the rates")
    return r


def _check_persistent(params: ModelParams) -> float:
    r = mosquito_threshold_r(params)
    if r <= 1.0:
        raise ValueError(f"mosquito threshold r = {r:.6g} <= 1: the vector population goes extinct")
    return r


def basic_reproduction_number(params: ModelParams, n_h: float, k_e: float | None = None,
                              k_l: float | None = None) -> float:
    """Basic reproduction number of the single-patch transmission model.

    `k_e`/`k_l` default to the reference capacities of `params`. Only a
    per-patch value exists; no network-wide threshold is claimed.
    """
    p = params
    r = _check_persistent(p)
    if n_h <= 0:
        raise ValueError("human population must be > 0")
    k_e = p.K_E if k_e is None else k_e
    k_l = p.K_L if k_l is None else k_l
    vector_term = p.s * k_e * p.s_L * k_l / (p.d_m * (p.s * k_e + (p.s_L + p.d_L) * k_l))
    return (p.beta_m * p.beta_h / (p.d_m * (p.gamma_h + p.b_H))) / n_h * (1.0 - 1.0 / r) * vector_term


def vector_endemic_equilibrium(params: ModelParams, k_e: float | None = None,
                               k_l: float | None = None) -> tuple[float, float, float]:
    """Positive equilibrium (E*, L*, A*) of the mosquito life cycle.

    A patch with zero capacity has the trivial equilibrium (0, 0, 0).
    """
    p = params
    r = _check_persistent(p)
    k_e = p.K_E if k_e is None else float(k_e)
    k_l = p.K_L if k_l is None else float(k_l)
    if k_e <= 0 or k_l <= 0:
        return 0.0, 0.0, 0.0
    gamma_l = 1.0 + (p.s_L + p.d_L) * k_l / (p.s * k_e)
    L = (1.0 - 1.0 / r) * k_l / gamma_l
    A = p.s_L * L / p.d_m
    E = (p.s_L + p.d_L) * L / (p.s * (1.0 - L / k_l))
    return E, L, A


def vector_rhs(E, L, A, params: ModelParams, k_e, k_l):
    """Logistic-braked egg/larva/adult derivatives; works on scalars or arrays."""
    p = params
    dE = p.b * A * (1.0 - E / k_e) - (p.s + p.d) * E
    dL = p.s * E * (1.0 - L / k_l) - (p.s_L + p.d_L) * L
    dA = p.s_L * L - p.d_m * A
    return dE, dL, dA


def single_patch_rhs(state, params: ModelParams, t: float = 0.0) -> np.ndarray:
    """Derivative of the 8 patch compartments, ordered as PATCH_LABELS.

    `state` may be a PatchState or a length-8 array. `t` is unused (the
    system is autonomous) and kept for event hooks.
    """
    y = state.as_array() if isinstance(state, PatchState) else np.asarray(state, dtype=float)
    E, L, A, S_m, I_m, S_H, I_H, R_H = y
    p = params
    N_H = S_H + I_H + R_H
    if N_H <= 0:
        raise ZeroDivisionError("patch has no humans (N_H = 0)")
    dE, dL, dA = vector_rhs(E, L, A, p, p.K_E, p.K_L)
    to_mosq = p.beta_m * I_H / N_H * S_m
    to_human = p.beta_h * I_m / N_H * S_H
    dS_m = p.s_L * L - p.d_m * S_m - to_mosq
    dI_m = to_mosq - p.d_m * I_m
    dS_H = -to_human + p.b_H * N_H - p.d_H * S_H
    dI_H = to_human - p.gamma_h * I_H - p.d_H * I_H
    dR_H = p.gamma_h * I_H - p.d_H * R_H
    return np.array([dE, dL, dA, dS_m, dI_m, dS_H, dI_H, dR_H])
