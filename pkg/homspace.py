"""Ricci map, majorant R and their derivatives for homogeneous-space data.

All functions accept a single point ``y`` of shape (n,) or a batch of shape
(N, n); the γ terms are formed as exponents first and exponentiated once.
"""
import logging
from typing import Tuple

import numpy as np

from config import Config
from exceptions import DomainOverflowError, DegenerateSpaceError, ParameterDomainError
from models import HomSpaceSpec, RicciBoundEstimates

logger = logging.getLogger(__name__)

# largest exponent exp() takes without overflowing a double
_LOG_MAX = float(np.log(np.finfo(float).max)) - 1.0


def _check_domain(space: HomSpaceSpec, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1:] != (space.n,):
        raise ParameterDomainError(f"y must have trailing dimension {space.n}, got shape {y.shape}")
    bad = ~(np.abs(y) <= Config.OVERFLOW_BOUND)
    if np.any(bad):
        flat = int(np.flatnonzero(bad.reshape(-1))[0])
        raise DomainOverflowError(flat % space.n, float(y.reshape(-1)[flat]))
    return y


def _gamma_terms(space: HomSpaceSpec, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return gamma*e^{2y_i-2y_k-2y_l} and gamma*e^{2y_k-2y_i-2y_l}, indexed [..., i, k, l]"""
    yi = y[..., :, None, None]
    yk = y[..., None, :, None]
    yl = y[..., None, None, :]
    mask = np.broadcast_to(space.gamma > 0, y.shape[:-1] + space.gamma.shape)
    terms = []
    for exponent in (2.0 * (yi - yk - yl), 2.0 * (yk - yi - yl)):
        exponent = np.where(mask, exponent, -np.inf)
        if np.any(exponent > _LOG_MAX):
            worst = np.unravel_index(np.argmax(exponent), exponent.shape)
            row = y[worst[:-3]]
            index = max(worst[-3:], key=lambda j: abs(row[j]))
            raise DomainOverflowError(int(index), float(row[index]))
        terms.append(space.gamma * np.exp(exponent))
    return terms[0], terms[1]


def ricci_map(space: HomSpaceSpec, y) -> np.ndarray:
    """Ricci components r_i(y) of the orbit metric diag(e^{2y_i})"""
    y = _check_domain(space, y)
    plus, minus = _gamma_terms(space, y)
    r = 0.5 * space.beta * np.exp(-2.0 * y)
    return r + (0.25 * plus - 0.5 * minus).sum(axis=(-2, -1))


def big_R(space: HomSpaceSpec, y) -> np.ndarray:
    """Majorant R(y) = sum beta_i e^{-2y_i} + sum gamma e^{2y_i-2y_j-2y_k}"""
    y = _check_domain(space, y)
    plus, _ = _gamma_terms(space, y)
    R = (space.beta * np.exp(-2.0 * y)).sum(axis=-1) + plus.sum(axis=(-3, -2, -1))
    return R if R.ndim else float(R)


def ricci_jacobian(space: HomSpaceSpec, y) -> np.ndarray:
    """Analytic Jacobian dr_i/dy_j"""
    y = _check_domain(space, y)
    plus, minus = _gamma_terms(space, y)
    a = 0.25 * plus
    b = -0.5 * minus
    eye = np.eye(space.n)
    # d/dy_j of e^{2y_i-2y_k-2y_l} carries 2(delta_ij - delta_kj - delta_lj)
    jac = eye * (-space.beta * np.exp(-2.0 * y))[..., :, None]
    jac = jac + eye * (2.0 * a.sum(axis=(-2, -1)))[..., :, None] - 2.0 * a.sum(axis=-1) - 2.0 * a.sum(axis=-2)
    jac = jac + 2.0 * b.sum(axis=-1) - eye * (2.0 * b.sum(axis=(-2, -1)))[..., :, None] - 2.0 * b.sum(axis=-2)
    return jac


def big_R_gradient(space: HomSpaceSpec, y) -> np.ndarray:
    """Analytic gradient of R"""
    y = _check_domain(space, y)
    plus, _ = _gamma_terms(space, y)
    grad = -2.0 * space.beta * np.exp(-2.0 * y)
    return grad + 2.0 * (plus.sum(axis=(-2, -1)) - plus.sum(axis=(-3, -1)) - plus.sum(axis=(-3, -2)))


def gamma_asymmetry(space: HomSpaceSpec) -> float:
    """Largest violation of gamma[i,k,l] = gamma[k,i,l]; warns above the configured tolerance"""
    asymmetry = float(np.max(np.abs(space.gamma - space.gamma.transpose(1, 0, 2)), initial=0.0))
    if Config.WARN_GAMMA_ASYMMETRY and asymmetry > Config.GAMMA_SYMMETRY_TOL:
        logger.warning("[homspace] gamma of '%s' is not symmetric in its lower indices (max deviation %.3e)",
                       space.label, asymmetry)
    return asymmetry


def estimate_ricci_bounds(space: HomSpaceSpec, samples: int = Config.BOUNDS["samples"],
                          box_radius: float = Config.BOUNDS["box_radius"],
                          seed: int = 0) -> RicciBoundEstimates:
    """Monte Carlo estimates of sup |r|/R, sup |Dr|/R and inf |r|/R over a box"""
    if int(samples) < 1:
        raise ParameterDomainError(f"samples must be >= 1, got {samples}")
    if not box_radius > 0:
        raise ParameterDomainError(f"box_radius must be positive, got {box_radius}")
    if space.is_degenerate:
        raise DegenerateSpaceError(f"R vanishes identically on '{space.label}'; curvature ratios are undefined")

    rng = np.random.default_rng(seed)
    y = rng.uniform(-box_radius, box_radius, size=(int(samples), space.n))
    ratios_r, ratios_dr = curvature_ratios(space, y)

    estimates = RicciBoundEstimates(c1=float(ratios_r.max()), c2=float(ratios_dr.max()),
                                    c3=float(ratios_r.min()), samples=int(samples),
                                    box_radius=float(box_radius))
    logger.info("[homspace] bounds for '%s': c1=%.6g c2=%.6g c3=%.6g from %d samples",
                space.label, estimates.c1, estimates.c2, estimates.c3, estimates.samples)
    return estimates


def curvature_ratios(space: HomSpaceSpec, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """|r|/R (Euclidean) and |Dr|/R (Frobenius) for a batch of points"""
    y = np.atleast_2d(y)
    R = np.atleast_1d(big_R(space, y))
    r_norm = np.linalg.norm(ricci_map(space, y), axis=-1)
    dr_norm = np.linalg.norm(ricci_jacobian(space, y), axis=(-2, -1))
    return r_norm / R, dr_norm / R
