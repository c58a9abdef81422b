"""Per-vehicle online estimation of the best setpoint.

Each vehicle's best setpoint is modeled as Gaussian with unknown mean and
unknown precision under a Normal-Gamma prior (mu0, kappa0, a0, b0). The
posterior after N observations stays Normal-Gamma, and integrating the
unknowns out gives a location-scale Student-t posterior predictive:

    dof = 2*a_N,  loc = mu_N,  scale^2 = b_N * (kappa_N + 1) / (a_N * kappa_N)

The next-trip setpoint is predicted conservatively as the 0.99 quantile of
that t distribution, so underestimates (which risk draining the battery) are
rare by construction. Updates are sequential: the posterior becomes the
prior as each new trip is observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .errors import SearchError


@dataclass(frozen=True)
class PriorSpec:
    """Prior in its interpretable form.

    ``mu0`` is the prior mean estimate backed by ``n_mu0`` pseudo samples;
    ``lambda0`` the prior precision estimate backed by ``n_lambda0`` pseudo
    samples. Mapping to Normal-Gamma parameters: kappa0 = n_mu0,
    a0 = n_lambda0 / 2, b0 = n_lambda0 / (2 * lambda0).
    """

    mu0: float = 74.0
    n_mu0: float = 5.0
    lambda0: float = 0.01
    n_lambda0: float = 50.0

    def __post_init__(self):
        for name in ("mu0", "n_mu0", "lambda0", "n_lambda0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def kappa0(self) -> float:
        return self.n_mu0

    @property
    def a0(self) -> float:
        return self.n_lambda0 / 2.0

    @property
    def b0(self) -> float:
        return self.n_lambda0 / (2.0 * self.lambda0)


@dataclass(frozen=True)
class PosteriorState:
    """Sufficient statistics of one vehicle's posterior."""

    vehicle_id: str
    mu: float
    kappa: float
    a: float
    b: float
    n_trips: int = 0
    history: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kappa <= 0 or self.a <= 0 or self.b <= 0:
            raise ValueError("kappa, a, b must be positive")
        if self.n_trips < 0:
            raise ValueError("n_trips cannot be negative")


@dataclass(frozen=True)
class StudentT:
    """Location-scale Student t."""

    dof: float
    loc: float
    scale2: float

    def __post_init__(self):
        if self.dof <= 0 or self.scale2 <= 0:
            raise ValueError("dof and scale2 must be positive")

    @property
    def scale(self) -> float:
        return math.sqrt(self.scale2)


def init_state(
    prior: PriorSpec, vehicle_id: str, keep_history: bool = False
) -> PosteriorState:
    """A fresh state: with no trips the posterior is the prior."""
    return PosteriorState(
        vehicle_id=vehicle_id,
        mu=prior.mu0,
        kappa=prior.kappa0,
        a=prior.a0,
        b=prior.b0,
        n_trips=0,
        history=() if keep_history else None,
    )


def update(state: PosteriorState, observed_best_lset: float) -> PosteriorState:
    """Absorb one observation; the old posterior acts as the new prior."""
    x = float(observed_best_lset)
    if not math.isfinite(x) or x <= 0:
        raise ValueError(f"observation must be positive, got {observed_best_lset}")
    kappa_new = state.kappa + 1.0
    return replace(
        state,
        mu=(state.kappa * state.mu + x) / kappa_new,
        kappa=kappa_new,
        a=state.a + 0.5,
        b=state.b + state.kappa / (2.0 * kappa_new) * (x - state.mu) ** 2,
        n_trips=state.n_trips + 1,
        history=None if state.history is None else state.history + (x,),
    )


def batch_posterior(
    prior: PriorSpec,
    observations: Sequence[float],
    vehicle_id: str = "",
) -> PosteriorState:
    """Closed-form posterior from all N observations at once.

    Uses the biased sample variance (divisor N); that convention is what
    makes the batch result equal a chain of single-observation updates.
    """
    obs = np.asarray(list(observations), dtype=float)
    n = len(obs)
    if n == 0:
        return init_state(prior, vehicle_id)
    if np.any(obs <= 0) or not np.all(np.isfinite(obs)):
        raise ValueError("observations must be positive and finite")
    m = float(obs.mean())
    s2 = float(obs.var())  # divisor N
    kappa_n = prior.kappa0 + n
    return PosteriorState(
        vehicle_id=vehicle_id,
        mu=(prior.kappa0 * prior.mu0 + n * m) / kappa_n,
        kappa=kappa_n,
        a=prior.a0 + n / 2.0,
        b=prior.b0 + n * s2 / 2.0
        + prior.kappa0 * n / (2.0 * kappa_n) * (m - prior.mu0) ** 2,
        n_trips=n,
    )


def predictive(state: PosteriorState) -> StudentT:
    """Posterior predictive distribution of the next best setpoint."""
    return StudentT(
        dof=2.0 * state.a,
        loc=state.mu,
        scale2=state.b * (state.kappa + 1.0) / (state.a * state.kappa),
    )


def _std_t_cdf(z, dof: float):
    """CDF of the standard t via the regularized incomplete beta function."""
    z = np.asarray(z, dtype=float)
    x = dof / (dof + z * z)
    tail = 0.5 * betainc(dof / 2.0, 0.5, x)
    return np.where(z >= 0, 1.0 - tail, tail)


def t_cdf(x, dist: StudentT):
    """CDF of the location-scale t at ``x`` (scalar or array)."""
    z = (np.asarray(x, dtype=float) - dist.loc) / dist.scale
    out = _std_t_cdf(z, dist.dof)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


@lru_cache(maxsize=4096)
def _std_t_quantile(dof: float, confidence: float, tol: float = 1e-6) -> float:
    """Standardized t quantile by monotone bisection on the CDF."""
    lo, hi = -50.0, 50.0
    f_lo = float(_std_t_cdf(lo, dof))
    f_hi = float(_std_t_cdf(hi, dof))
    if not f_lo <= confidence <= f_hi:
        raise SearchError(
            f"confidence {confidence} outside bracketable range of t({dof})"
        )
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        f_mid = float(_std_t_cdf(mid, dof))
        if abs(f_mid - confidence) <= tol:
            return mid
        if f_mid < confidence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def predict_lset(state: PosteriorState, confidence: float = 0.99) -> float:
    """Conservative setpoint for the next trip: the predictive quantile.

    Found by bisection on the CDF over loc +/- 50 scale units, to 1e-6 in
    probability.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    dist = predictive(state)
    return dist.loc + dist.scale * _std_t_quantile(dist.dof, confidence)


# ---------------------------------------------------------------------------
# Prior design from fleet replay
# ---------------------------------------------------------------------------

DEFAULT_PRIOR_GRID = {
    "mu0": tuple(range(50, 101, 2)),
    "n_mu0": (1.0, 2.0, 5.0, 10.0, 20.0),
    "lambda0": (0.005, 0.01, 0.02, 0.05),
    "n_lambda0": (10.0, 25.0, 50.0, 100.0),
}


@dataclass(frozen=True)
class PriorFitResult:
    spec: PriorSpec
    mean_gap: float
    initial_prediction: float
    n_feasible: int


class PriorInfeasibleError(SearchError):
    """No grid point satisfied the replay constraints."""

    def __init__(self, message: str, violating_vehicles: tuple[str, ...]):
        super().__init__(message)
        self.violating_vehicles = violating_vehicles


def fit_prior(
    fleet_histories: Mapping[str, Sequence[float]],
    baseline: float = 100.0,
    confidence: float = 0.99,
    baseline_window: float = 5.0,
    grid: Mapping[str, Sequence[float]] | None = None,
) -> PriorFitResult:
    """Pick prior parameters by replaying every vehicle's history.

    Feasible grid points must (a) predict within ``baseline_window`` miles of
    ``baseline`` before any data, and (b) never predict below the observed
    best setpoint at any point of any vehicle's replay. Among feasible
    points, the one minimizing the mean prediction gap wins.
    """
    vehicles = [(vid, np.asarray(list(h), dtype=float))
                for vid, h in fleet_histories.items() if len(h) > 0]
    if not vehicles:
        raise ValueError("need at least one vehicle history")
    grid = dict(DEFAULT_PRIOR_GRID) | dict(grid or {})

    specs = [
        PriorSpec(float(m), float(nm), float(lam), float(nl))
        for m in grid["mu0"]
        for nm in grid["n_mu0"]
        for lam in grid["lambda0"]
        for nl in grid["n_lambda0"]
    ]
    g = len(specs)
    mu0 = np.array([s.mu0 for s in specs])
    kappa0 = np.array([s.kappa0 for s in specs])
    a0 = np.array([s.a0 for s in specs])
    b0 = np.array([s.b0 for s in specs])

    def quantiles(a_vals: np.ndarray) -> np.ndarray:
        return np.array([_std_t_quantile(float(2.0 * a), confidence) for a in a_vals])

    init_pred = mu0 + quantiles(a0) * np.sqrt(b0 * (kappa0 + 1.0) / (a0 * kappa0))
    ok_init = np.abs(init_pred - baseline) <= baseline_window

    n_veh = len(vehicles)
    max_t = max(len(h) for _, h in vehicles)
    obs = np.full((n_veh, max_t), np.nan)
    for i, (_, h) in enumerate(vehicles):
        obs[i, : len(h)] = h

    mu = np.repeat(mu0[:, None], n_veh, axis=1)
    b = np.repeat(b0[:, None], n_veh, axis=1)
    violated = np.zeros((g, n_veh), dtype=bool)
    gap_sum = np.zeros(g)
    n_obs_total = 0

    # kappa and a advance identically for every vehicle of a given spec.
    for k in range(max_t):
        mask = np.isfinite(obs[:, k])
        if not mask.any():
            continue
        kappa_k = kappa0 + k
        a_k = a0 + k / 2.0
        q_k = quantiles(a_k)
        scale = np.sqrt(b * (kappa_k + 1.0)[:, None] / (a_k * kappa_k)[:, None])
        pred = mu + q_k[:, None] * scale
        x = np.where(mask, obs[:, k], 0.0)
        violated |= mask[None, :] & (pred < x[None, :] - 1e-9)
        gap_sum += np.where(mask[None, :], pred - x[None, :], 0.0).sum(axis=1)
        n_obs_total += int(mask.sum())

        kappa_new = kappa_k + 1.0
        mu_new = (kappa_k[:, None] * mu + x[None, :]) / kappa_new[:, None]
        b_new = b + (kappa_k / (2.0 * kappa_new))[:, None] * (x[None, :] - mu) ** 2
        mu = np.where(mask[None, :], mu_new, mu)
        b = np.where(mask[None, :], b_new, b)

    feasible = ok_init & ~violated.any(axis=1)
    if not feasible.any():
        counts = violated.sum(axis=1) + np.where(ok_init, 0, n_veh + 1)
        nearest = int(np.argmin(counts))
        bad = tuple(
            vehicles[i][0] for i in range(n_veh) if violated[nearest, i]
        )
        raise PriorInfeasibleError(
            "no prior in the grid keeps predictions above every observed "
            f"best setpoint (closest grid point violates {len(bad)} vehicles)",
            violating_vehicles=bad,
        )

    mean_gap = np.where(feasible, gap_sum / max(n_obs_total, 1), np.inf)
    best = int(np.argmin(mean_gap))
    return PriorFitResult(
        spec=specs[best],
        mean_gap=float(mean_gap[best]),
        initial_prediction=float(init_pred[best]),
        n_feasible=int(feasible.sum()),
    )


def check_prior_feasible(
    spec: PriorSpec,
    fleet_histories: Mapping[str, Sequence[float]],
    confidence: float = 0.99,
) -> tuple[bool, float]:
    """Replay a single spec; returns (all predictions conservative, miss rate)."""
    misses = 0
    total = 0
    for vid, history in fleet_histories.items():
        state = init_state(spec, vid)
        for x in history:
            if predict_lset(state, confidence) < x - 1e-9:
                misses += 1
            total += 1
            state = update(state, x)
    return misses == 0, (misses / total if total else 0.0)
