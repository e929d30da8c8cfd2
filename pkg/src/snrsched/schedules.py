"""SNR grid builders and loss-adaptive schedule optimization.

Baseline grids (time-uniform, geometric in log-SNR, EDM-style rho spacing)
are built directly from the endpoints (T, delta). The loss-adaptive schedule
(LAS) instead selects K+1 of n candidate SNRs, with endpoints pinned, to
minimize the surrogate objective

    sum_{k=1..K} (eta_{i_k} - eta_{i_{k-1}}) L(i_{k-1})
        + alpha sum_{k=2..K} (h_k - h_{k-1})^2,

where eta(gamma) = gamma / (1 + lambda^2 gamma) is the regularized SNR axis,
L(i) is the model's x0-prediction risk at candidate i, and h_k are log-SNR
steps. With alpha = 0 the objective is first-order and solved exactly by an
O(K n^2) dynamic program; with alpha > 0 consecutive steps couple and a
beam-pruned, windowed second-order DP is used. With beam width >= n^2 and
window radius >= n the beam DP is exhaustive over (previous, current) index
pairs and therefore exact as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .functionals import LossProfile, SnrGrid

__all__ = [
    "InfeasibleError",
    "LasConfig",
    "CandidateSet",
    "Schedule",
    "eta_axis",
    "grid_time_uniform",
    "grid_geometric",
    "grid_edm",
    "schedule_objective",
    "las_exact",
    "las_beam",
    "parse_timestep_list",
    "format_timestep_list",
]


class InfeasibleError(ValueError):
    """Raised when no schedule with the requested K exists."""


def eta_axis(gamma, lam: float):
    """Regularized SNR axis eta(gamma) = gamma / (1 + lambda^2 gamma).

    Strictly increasing in gamma and saturating at 1/lambda^2, which
    compresses the high-SNR end of the objective.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma must be nonnegative")
    out = g / (1.0 + lam**2 * g)
    return float(out) if out.ndim == 0 else out


def _check_endpoints(T: float, delta: float, K: int) -> None:
    if not 0 < delta < T:
        raise ValueError("need 0 < delta < T")
    if K < 1:
        raise ValueError("K must be >= 1")


def grid_time_uniform(T: float, delta: float, K: int) -> SnrGrid:
    """Equally spaced reverse times s_k = k (T - delta) / K, so gamma_k = 1/(T - s_k)."""
    _check_endpoints(T, delta, K)
    s = np.linspace(0.0, T - delta, K + 1)
    g = 1.0 / (T - s)
    g[0], g[-1] = 1.0 / T, 1.0 / delta
    return SnrGrid(g)


def grid_geometric(T: float, delta: float, K: int) -> SnrGrid:
    """Geometric SNR knots gamma_k = (1/T) Lambda^{k/K} with Lambda = T/delta."""
    _check_endpoints(T, delta, K)
    return SnrGrid(np.geomspace(1.0 / T, 1.0 / delta, K + 1))


def grid_edm(T: float, delta: float, K: int, rho: float = 7.0) -> SnrGrid:
    """EDM-style noise levels, mapped through sigma = sqrt(t), gamma = 1/sigma^2.

    sigma_i = (sigma_max^{1/rho} + (i/K)(sigma_min^{1/rho} - sigma_max^{1/rho}))^rho
    with sigma_max = sqrt(T) and sigma_min = sqrt(delta); rho = 1 reduces to
    linear-in-sigma spacing.
    """
    _check_endpoints(T, delta, K)
    if not rho > 0:
        raise ValueError("rho must be positive")
    smax, smin = math.sqrt(T), math.sqrt(delta)
    ramp = np.arange(K + 1) / K
    sig = (smax ** (1.0 / rho) + ramp * (smin ** (1.0 / rho) - smax ** (1.0 / rho))) ** rho
    g = 1.0 / sig**2
    g[0], g[-1] = 1.0 / T, 1.0 / delta
    return SnrGrid(g)


@dataclass(frozen=True)
class LasConfig:
    """Optimizer settings: steps K, axis scale lambda, smoothness weight alpha,
    and the beam/window/extra-candidate knobs of the second-order DP."""

    K: int
    lam: float = 1.5
    alpha: float = 0.0
    beam: int = 128
    window: int = 32
    extra: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.beam < 1 or self.window < 1:
            raise ValueError("beam width and window radius must be >= 1")
        if self.extra < 0:
            raise ValueError("extra candidate count must be nonnegative")


@dataclass(frozen=True)
class CandidateSet:
    """Candidate SNRs (strictly ascending) with their risks L(i) >= 0."""

    gammas: np.ndarray
    risks: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        r = np.asarray(self.risks, dtype=float)
        if g.ndim != 1 or g.size < 2 or r.shape != g.shape:
            raise ValueError("need matching 1-d gammas and risks with at least 2 candidates")
        if np.any(g <= 0) or not np.all(np.diff(g) > 0):
            raise ValueError("candidate gammas must be positive and strictly increasing")
        if np.any(r < 0):
            raise ValueError("risks must be nonnegative")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "risks", r)

    @property
    def n(self) -> int:
        return self.gammas.size

    @property
    def ell(self) -> np.ndarray:
        return np.log(self.gammas)

    def eta(self, lam: float) -> np.ndarray:
        return eta_axis(self.gammas, lam)

    @classmethod
    def from_profile(
        cls, profile: LossProfile, gamma_min: float | None = None, gamma_max: float | None = None
    ) -> "CandidateSet":
        """Use the profile's own knots as candidates, trimmed to [gamma_min, gamma_max]."""
        g = profile.gammas
        lo = profile.x0_losses
        keep = np.ones(g.size, dtype=bool)
        if gamma_min is not None:
            keep &= g >= gamma_min * (1 - 1e-12)
        if gamma_max is not None:
            keep &= g <= gamma_max * (1 + 1e-12)
        return cls(gammas=g[keep], risks=lo[keep])


@dataclass(frozen=True)
class Schedule:
    """An optimized schedule: candidate indices, their SNRs, and the objective."""

    indices: tuple
    gammas: np.ndarray
    objective: float
    algorithm: str
    K: int
    lam: float
    alpha: float
    tie_breaks: int = 0

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) != self.K + 1 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing with length K + 1")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "gammas", np.asarray(self.gammas, dtype=float))

    def grid(self) -> SnrGrid:
        return SnrGrid(self.gammas)

    def to_json_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "gammas": [float(g) for g in self.gammas],
            "K": self.K,
            "lambda": self.lam,
            "alpha": self.alpha,
            "objective": self.objective,
            "algorithm": self.algorithm,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Schedule":
        return cls(
            indices=tuple(obj["indices"]),
            gammas=np.asarray(obj["gammas"], dtype=float),
            objective=float(obj["objective"]),
            algorithm=str(obj["algorithm"]),
            K=int(obj["K"]),
            lam=float(obj["lambda"]),
            alpha=float(obj["alpha"]),
        )


def schedule_objective(cands: CandidateSet, indices, lam: float, alpha: float) -> float:
    """Surrogate objective of an index sequence over the candidate set."""
    idx = np.asarray(indices, dtype=int)
    eta = cands.eta(lam)[idx]
    base = float(np.diff(eta) @ cands.risks[idx[:-1]])
    if alpha == 0 or idx.size < 3:
        return base
    h = np.diff(cands.ell[idx])
    return base + alpha * float((np.diff(h) ** 2).sum())


def _feasible(cands: CandidateSet, K: int) -> None:
    if K > cands.n - 1:
        raise InfeasibleError(f"K = {K} needs at least K + 1 = {K + 1} candidates, got {cands.n}")


def _make_schedule(cands, indices, cfg, algorithm, tie_breaks=0) -> Schedule:
    return Schedule(
        indices=tuple(indices),
        gammas=cands.gammas[np.asarray(indices, dtype=int)],
        objective=schedule_objective(cands, indices, cfg.lam, cfg.alpha),
        algorithm=algorithm,
        K=cfg.K,
        lam=cfg.lam,
        alpha=cfg.alpha,
        tie_breaks=tie_breaks,
    )


def las_exact(cands: CandidateSet, cfg: LasConfig) -> Schedule:
    """Globally optimal first-order schedule by dynamic programming.

    Requires cfg.alpha == 0. dp[k, j] is the best cost of reaching candidate
    j in exactly k transitions from candidate 0; loop bounds keep every
    partial path extendable to the pinned endpoint n - 1. Ties are broken
    toward the smallest predecessor index, so the output is deterministic.
    """
    if cfg.alpha != 0:
        raise ValueError("las_exact requires alpha = 0; use las_beam for alpha > 0")
    K = cfg.K
    _feasible(cands, K)
    n = cands.n
    end = n - 1
    eta = cands.eta(cfg.lam)
    L = cands.risks
    if K == 1:
        return _make_schedule(cands, [0, end], cfg, "exact")

    dp = np.full((K, n), np.inf)
    par = np.full((K, n), -1, dtype=int)
    ties = 0
    dp[1, 1 : end - (K - 1) + 1] = (eta[1 : end - (K - 1) + 1] - eta[0]) * L[0]
    par[1, 1 : end - (K - 1) + 1] = 0
    for k in range(2, K):
        max_j = end - (K - k)
        for j in range(k, max_j + 1):
            cand = dp[k - 1, :j] + (eta[j] - eta[:j]) * L[:j]
            best = int(np.argmin(cand))  # first minimum = smallest predecessor
            dp[k, j] = cand[best]
            par[k, j] = best
            ties += int(np.sum(cand == cand[best])) - 1

    cand = dp[K - 1, :end] + (eta[end] - eta[:end]) * L[:end]
    cur = int(np.argmin(cand))
    ties += int(np.sum(cand == cand[cur])) - 1

    indices = [end, cur]
    for k in range(K - 1, 0, -1):
        cur = int(par[k, cur])
        indices.append(cur)
    indices.reverse()
    return _make_schedule(cands, indices, cfg, "exact", tie_breaks=ties)


def _window(b: int, j: int, max_idx: int, W: int, E: int) -> list:
    lo = max(b + 1, j - W)
    hi = min(max_idx, j + W)
    cs = list(range(lo, hi + 1))
    if E > 0 and max_idx >= b + 1:
        extras = np.unique(np.linspace(b + 1, max_idx, E).round().astype(int))
        cs = sorted(set(cs).union(int(c) for c in extras))
    return cs


def las_beam(cands: CandidateSet, cfg: LasConfig) -> Schedule:
    """Beam-and-window second-order DP for the smoothness-penalized objective.

    Requires cfg.alpha > 0. A state is the pair of the last two chosen
    indices (a, b) with its accumulated cost. From each state the next index
    is predicted by constant log-ratio continuation, ell_pred = 2 ell_b -
    ell_a, and only candidates within ``window`` of its insertion position
    (plus ``extra`` evenly spaced global candidates) are expanded. Per next
    endpoint, only the ``beam`` cheapest states survive. States sharing
    (a, b) are merged keeping the cheaper cost; the continuation cost depends
    on (a, b) only, so the merge is lossless.
    """
    if not cfg.alpha > 0:
        raise ValueError("las_beam requires alpha > 0; use las_exact for alpha = 0")
    K = cfg.K
    _feasible(cands, K)
    n = cands.n
    end = n - 1
    eta = cands.eta(cfg.lam)
    ell = cands.ell
    L = cands.risks
    alpha, B, W, E = cfg.alpha, cfg.beam, cfg.window, cfg.extra
    if K == 1:
        return _make_schedule(cands, [0, end], cfg, "beam")

    # states[(a, b)] = cost; parents[k][(a, b)] = predecessor state at stage k - 1
    states = {}
    parents = [None, {}]
    for b in range(1, end - (K - 1) + 1):
        states[(0, b)] = (eta[b] - eta[0]) * L[0]
        parents[1][(0, b)] = None

    for k in range(2, K):
        max_idx = end - (K - k)
        new_states = {}
        stage_parents = {}
        for (a, b), cost in states.items():
            pred = 2.0 * ell[b] - ell[a]
            j = int(np.searchsorted(ell, pred, side="left"))
            if j >= n:
                j = max_idx
            for c in _window(b, j, max_idx, W, E):
                new_cost = (
                    cost
                    + (eta[c] - eta[b]) * L[b]
                    + alpha * ((ell[c] - ell[b]) - (ell[b] - ell[a])) ** 2
                )
                key = (b, c)
                if key not in new_states or new_cost < new_states[key]:
                    new_states[key] = new_cost
                    stage_parents[key] = (a, b)
        if not new_states:
            raise RuntimeError("beam search exhausted; increase the window radius")
        # beam pruning: keep the B cheapest states per endpoint
        by_endpoint = {}
        for (a, b), cost in new_states.items():
            by_endpoint.setdefault(b, []).append((cost, a))
        states = {}
        parents.append({})
        for b, entries in by_endpoint.items():
            entries.sort()
            for cost, a in entries[:B]:
                states[(a, b)] = cost
                parents[k][(a, b)] = stage_parents[(a, b)]

    best_key = None
    best_total = np.inf
    for (a, b), cost in states.items():
        total = (
            cost
            + (eta[end] - eta[b]) * L[b]
            + alpha * ((ell[end] - ell[b]) - (ell[b] - ell[a])) ** 2
        )
        if (
            best_key is None
            or total < best_total
            or (total == best_total and (b, a) < (best_key[1], best_key[0]))
        ):
            best_total = total
            best_key = (a, b)
    if best_key is None:
        raise RuntimeError("beam search exhausted; increase the window radius")

    indices = [end]
    key = best_key
    k = K - 1
    while key is not None:
        indices.append(key[1])
        nxt = parents[k][key]
        if nxt is None:
            indices.append(key[0])  # the pinned start, index 0
        key = nxt
        k -= 1
    indices.reverse()
    return _make_schedule(cands, indices, cfg, "beam")


def parse_timestep_list(text: str) -> list:
    """Parse a comma-separated noisy-to-clean timestep list into ints.

    Accepts an optional surrounding [ ] and whitespace. The list must be
    strictly decreasing and nonnegative.
    """
    body = text.strip().strip("[]")
    parts = [p.strip() for p in body.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty timestep list")
    steps = [int(p) for p in parts]
    if any(s < 0 for s in steps) or any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValueError("timesteps must be nonnegative and strictly decreasing")
    return steps


def format_timestep_list(steps) -> str:
    """Inverse of :func:`parse_timestep_list`: comma-joined without spaces."""
    return ",".join(str(int(s)) for s in steps)
