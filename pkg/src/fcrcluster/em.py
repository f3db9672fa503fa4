"""EM fitting of Gaussian and Student-t mixtures under constraint regimes.

Initialization is multi-start k-means++ with the hard assignment converted to
one-hot responsibilities for the first M-step.  Constraint regimes:

* ``known``     -- weights and covariances are supplied and held fixed,
                   only the means are estimated;
* ``spherical`` -- each covariance is a scalar multiple of the identity;
* ``diagonal``  -- per-coordinate variances;
* ``full``      -- unconstrained covariance matrices.

Student-t fitting keeps the degrees of freedom fixed (default 4) and uses the
standard per-item precision weights in the M-step.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .mixtures import (
    GAUSSIAN,
    STUDENT_T,
    ComponentParams,
    MixtureParams,
    _mahal_rows,
    mixture_to_json,
    regularize_scatter,
    validate_data,
)

FAMILIES = (GAUSSIAN, "student")


@dataclass
class EmConfig:
    """Settings for multi-start EM.

    ``rel_tol`` enables an early stop on the relative log-likelihood gain;
    set it to ``None`` to always run ``max_iter`` iterations.  ``family``
    selects the component family for :func:`fit_mixture`.
    """

    family: str = GAUSSIAN
    structure: str = "full"
    max_iter: int = 100
    n_starts: int = 10
    rel_tol: float | None = 1e-8
    dof: float = 4.0
    known_weights: np.ndarray | None = None
    known_covariances: tuple[np.ndarray, ...] | None = None
    seed: int | None = None

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.structure not in ("known", "spherical", "diagonal", "full"):
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.structure == "known" and self.known_covariances is None:
            raise ValueError("structure 'known' requires known_covariances")


@dataclass
class FitResult:
    """Best-of-starts EM outcome.

    ``loglik_trace`` is the per-iteration log-likelihood of the winning
    start (non-decreasing up to 1e-8 slack); ``n_reinits`` counts degenerate
    components that were re-seeded at a random data point.
    """

    params: MixtureParams
    loglik_trace: np.ndarray
    n_starts_run: int
    converged: bool
    n_reinits: int = 0

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])


def _kind_for(family: str) -> str:
    return STUDENT_T if family == "student" else GAUSSIAN


def _project_cov(cov: np.ndarray, structure: str) -> np.ndarray:
    d = cov.shape[0]
    if structure == "spherical":
        return (float(np.trace(cov)) / d) * np.eye(d)
    if structure == "diagonal":
        return np.diag(np.diag(cov))
    return cov


def _safe_cov(x: np.ndarray) -> np.ndarray:
    """Overall data covariance with an identity fallback for flat data."""
    d = x.shape[1]
    if x.shape[0] < 2:
        return np.eye(d)
    cov = np.cov(x, rowvar=False, ddof=0).reshape(d, d)
    if not np.all(np.isfinite(cov)) or np.trace(cov) <= 0:
        return np.eye(d)
    return cov


def kmeanspp_init(
    data,
    q: int,
    rng: np.random.Generator,
    structure: str = "full",
    known_covariances: tuple[np.ndarray, ...] | None = None,
    family: str = GAUSSIAN,
    dof: float = 4.0,
) -> MixtureParams:
    """k-means++ seeded mixture initialization.

    Centers are chosen by D^2 weighting (the single-center case uses the
    sample mean, the one-step fixed point).  Weights start uniform and every
    component starts at the pooled within-assignment covariance, projected
    onto the active structure.
    """
    x = validate_data(data)
    n, d = x.shape
    if n < q:
        raise ValueError(f"need at least q={q} rows, got {n}")
    if q == 1:
        centers = x.mean(axis=0, keepdims=True)
    else:
        chosen = [int(rng.integers(n))]
        d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
        for _ in range(q - 1):
            total = float(d2.sum())
            if total > 0.0:
                pick = int(rng.choice(n, p=d2 / total))
            else:
                remaining = np.setdiff1d(np.arange(n), np.array(chosen))
                pick = int(rng.choice(remaining))
            chosen.append(pick)
            d2 = np.minimum(d2, ((x - x[pick]) ** 2).sum(axis=1))
        centers = x[np.array(chosen)]

    dist2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(dist2, axis=1)
    diff = x - centers[assign]
    pooled = (diff.T @ diff) / n
    if np.trace(pooled) <= 0:
        pooled = _safe_cov(x)

    kind = _kind_for(family)
    comps = []
    for j in range(q):
        if structure == "known":
            cov = np.asarray(known_covariances[j], dtype=float)
        else:
            cov = _project_cov(pooled, structure)
        comps.append(
            ComponentParams(kind=kind, mean=centers[j].copy(), scatter=cov,
                            dof=dof if kind == STUDENT_T else None)
        )
    return MixtureParams(
        weights=np.full(q, 1.0 / q),
        components=tuple(comps),
        structure=structure,
    )


def _e_step(params: MixtureParams, x: np.ndarray):
    """Responsibilities, per-component squared Mahalanobis, log-likelihood."""
    n = x.shape[0]
    qn = params.q
    lw = np.empty((n, qn))
    mahal = np.empty((n, qn))
    log_w = np.log(params.weights)
    for q, comp in enumerate(params.components):
        m = _mahal_rows(comp, x)
        mahal[:, q] = m
        if comp.kind == GAUSSIAN:
            lw[:, q] = log_w[q] - 0.5 * (
                comp.dim * np.log(2.0 * np.pi) + comp._log_det + m
            )
        else:
            nu = comp.dof
            dd = comp.dim
            const = (
                math.lgamma(0.5 * (nu + dd))
                - math.lgamma(0.5 * nu)
                - 0.5 * dd * math.log(nu * math.pi)
                - 0.5 * comp._log_det
            )
            lw[:, q] = log_w[q] + const - 0.5 * (nu + dd) * np.log1p(m / nu)
    mx = lw.max(axis=1, keepdims=True)
    p = np.exp(lw - mx)
    s = p.sum(axis=1, keepdims=True)
    resp = np.maximum(p / s, 1e-300)
    loglik = float((mx[:, 0] + np.log(s[:, 0])).sum())
    return resp, mahal, loglik


def _m_step(
    x: np.ndarray,
    resp: np.ndarray,
    mahal: np.ndarray,
    cfg: EmConfig,
    prev: MixtureParams,
    rng: np.random.Generator,
) -> tuple[MixtureParams, int]:
    """One constrained M-step.

    A component is re-seeded at a random data point when its responsibility
    mass collapses below 1/n or its updated scatter degenerates (EM driving
    a covariance to singularity).
    """
    n, d = x.shape
    qn = prev.q
    kind = prev.components[0].kind
    mass = resp.sum(axis=0)

    if kind == STUDENT_T:
        nus = np.array([c.dof for c in prev.components])
        u = (nus[None, :] + d) / (nus[None, :] + mahal)
        w = resp * u
    else:
        w = resp
    wsum = w.sum(axis=0)
    means = (w.T @ x) / wsum[:, None]

    reinit: list[int] = []
    comps = []
    for q in range(qn):
        mean = means[q]
        cov = None
        if mass[q] >= 1.0 / n:
            if cfg.structure == "known":
                cov = np.asarray(cfg.known_covariances[q], dtype=float)
            else:
                diff = x - mean
                num = (w[:, q, None] * diff).T @ diff
                try:
                    cov = regularize_scatter(_project_cov(num / mass[q], cfg.structure))
                except ValueError:
                    cov = None
        if cov is None:
            reinit.append(q)
            mean = x[int(rng.integers(n))].copy()
            if cfg.structure == "known":
                cov = np.asarray(cfg.known_covariances[q], dtype=float)
            else:
                cov = _project_cov(_safe_cov(x), cfg.structure)
        comps.append(
            ComponentParams(
                kind=kind, mean=mean, scatter=cov, dof=prev.components[q].dof
            )
        )

    if cfg.known_weights is not None:
        weights = np.asarray(cfg.known_weights, dtype=float)
    else:
        weights = mass / n
        if reinit:
            weights = weights.copy()
            weights[reinit] = np.maximum(weights[reinit], 1.0 / n)
            weights = weights / weights.sum()
    return (
        MixtureParams(weights=weights, components=tuple(comps), structure=cfg.structure),
        len(reinit),
    )


def _run_start(
    x: np.ndarray, q: int, cfg: EmConfig, rng: np.random.Generator
) -> tuple[MixtureParams, list[float], bool, int]:
    init = kmeanspp_init(
        x,
        q,
        rng,
        structure=cfg.structure,
        known_covariances=cfg.known_covariances,
        family=cfg.family,
        dof=cfg.dof,
    )
    if cfg.known_weights is not None:
        init = MixtureParams(
            weights=np.asarray(cfg.known_weights, dtype=float),
            components=init.components,
            structure=init.structure,
        )
    # first M-step from the hard k-means++ assignment
    centers = np.stack([c.mean for c in init.components])
    dist2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    one_hot = np.zeros((x.shape[0], q))
    one_hot[np.arange(x.shape[0]), np.argmin(dist2, axis=1)] = 1.0
    _, mahal0, _ = _e_step(init, x)
    params, n_reinit = _m_step(x, one_hot, mahal0, cfg, init, rng)

    trace: list[float] = []
    converged = False
    for _ in range(cfg.max_iter):
        resp, mahal, ll = _e_step(params, x)
        trace.append(ll)
        if (
            len(trace) > 1
            and cfg.rel_tol is not None
            and ll - trace[-2] <= cfg.rel_tol * max(abs(trace[-2]), 1e-300)
        ):
            converged = True
            break
        params, k = _m_step(x, resp, mahal, cfg, params, rng)
        n_reinit += k
    if not converged:
        _, _, ll = _e_step(params, x)
        trace.append(ll)
    return params, trace, converged, n_reinit


def fit_mixture(
    data, q: int, config: EmConfig | None = None, rng: np.random.Generator | None = None
) -> FitResult:
    """Multi-start EM fit; the start with the highest log-likelihood wins.

    Start-level RNG streams are split deterministically from the seed, so
    the result does not depend on evaluation order.
    """
    cfg = config or EmConfig()
    cfg.validate()
    x = validate_data(data)
    if x.shape[0] < q:
        raise ValueError(f"need at least q={q} rows, got {x.shape[0]}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    streams = rng.spawn(cfg.n_starts)
    best = None
    for s in range(cfg.n_starts):
        params, trace, converged, n_re = _run_start(x, q, cfg, streams[s])
        if best is None or trace[-1] > best[1][-1]:
            best = (params, trace, converged, n_re)
    params, trace, converged, n_re = best
    return FitResult(
        params=params,
        loglik_trace=np.asarray(trace, dtype=float),
        n_starts_run=cfg.n_starts,
        converged=converged,
        n_reinits=n_re,
    )


def em_fit(data, q: int, config: EmConfig | None = None,
           rng: np.random.Generator | None = None) -> FitResult:
    """Gaussian-mixture EM (family forced to Gaussian)."""
    cfg = replace(config or EmConfig(), family=GAUSSIAN)
    return fit_mixture(data, q, cfg, rng)


def student_em_fit(data, q: int, config: EmConfig | None = None,
                   rng: np.random.Generator | None = None) -> FitResult:
    """Student-t mixture EM with fixed dof (family forced to Student)."""
    cfg = replace(config or EmConfig(), family="student")
    return fit_mixture(data, q, cfg, rng)


def em_steps(
    data,
    params: MixtureParams,
    cfg: EmConfig,
    n_iter: int,
    rng: np.random.Generator,
) -> MixtureParams:
    """Run ``n_iter`` EM iterations from ``params`` (warm start, one start)."""
    x = validate_data(data)
    for _ in range(n_iter):
        resp, mahal, _ = _e_step(params, x)
        params, _ = _m_step(x, resp, mahal, cfg, params, rng)
    return params


def save_fit(result: FitResult, params_path, trace_path=None) -> None:
    """Write fitted parameters as JSON and, optionally, the trace as CSV."""
    with open(params_path, "w") as fh:
        json.dump(mixture_to_json(result.params), fh, indent=2)
        fh.write("\n")
    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loglik"])
            for i, v in enumerate(result.loglik_trace):
                writer.writerow([i, repr(float(v))])
