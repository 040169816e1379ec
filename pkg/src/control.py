"""Nominal law, half-space (tangent cone) projection and the distance-based smooth law."""

from __future__ import annotations

import numpy as np

from src.errors import InputError
from src.models import ControllerConfig, SafetyInput, as_point, as_unit

# Precondition slack on the inner margin.
MARGIN_TOLERANCE = 1e-6


def nominal_control(x, cfg: ControllerConfig) -> np.ndarray:
    """κ0(x) = −k(x − x_d)."""
    x = as_point(x)
    return -cfg.k * (x - cfg.goal)


def tangent_projector(nu) -> np.ndarray:
    """Π(ν) = I − ννᵀ, the orthogonal projector onto the hyperplane ν⊥."""
    nu = as_unit(nu, name="normal")
    return np.eye(nu.size) - np.outer(nu, nu)


def cone_contains(nu, z) -> bool:
    """Membership of *z* in the half-space cone {z : νᵀz ≤ 0}."""
    return bool(np.dot(nu, z) <= 0.0)


def project_discontinuous(x, on_boundary: bool, nu, cfg: ControllerConfig) -> np.ndarray:
    """Metric projection of κ0(x) onto the tangent cone at x.

    Interior points keep the nominal velocity; at the boundary an outward
    nominal velocity (νᵀκ0 > 0) loses its normal component.
    """
    kappa = nominal_control(x, cfg)
    if not on_boundary:
        return kappa
    nu = as_unit(nu, name="normal")
    if float(nu @ kappa) < 0.0:
        return kappa
    # νᵀκ0 = 0 lands here too; both branches coincide there.
    return kappa - nu * float(nu @ kappa)


def smoothing_factor(distance: float, cfg: ControllerConfig) -> float:
    """φ = min(1, (ε′ − d)/(ε′ − ε)); callers treat d ≥ ε′ as φ = 0."""
    if distance < 0:
        raise InputError(f"distance must be non-negative, got {distance!r}")
    return min(1.0, (cfg.epsilon_prime - distance) / (cfg.epsilon_prime - cfg.epsilon))


def project_smooth(x, s: SafetyInput, cfg: ControllerConfig) -> np.ndarray:
    """Continuous controller: blend from κ0 to the projected law across [ε, ε′]."""
    kappa = nominal_control(x, cfg)
    if s.bearing_gradient is None or s.distance > cfg.epsilon_prime:
        return kappa
    g = s.bearing_gradient
    if float(kappa @ g) > 0.0:
        return kappa
    phi = smoothing_factor(s.distance, cfg)
    return kappa - phi * g * float(g @ kappa)
