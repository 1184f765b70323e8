"""Randomized, approximately truthful selection for linear utilities.

Deterministic core-style solvers are manipulable: a voter can misreport to
drag the allocation toward their favorite item.  This module trades a little
allocation quality for a bounded incentive to lie.  It scores each feasible
allocation by how far it is from proportional fairness, then draws an
allocation with probability proportional to ``exp(epsilon * score)`` -- large
``epsilon`` concentrates near the fair point, small ``epsilon`` approaches a
uniform draw and makes misreporting nearly useless.

Everything here is specific to linear utilities ``U_i(x) = u_i . x``, with the
budget normalized to 1 and every utility row normalized to unit l1 norm
(:func:`normalize_instance`).  Allocations live in the "floored simplex"

    P = { x : x_j >= n^(-gamma),  sum_j x_j <= 1 }

whose floor keeps every voter's utility bounded away from zero, which is what
caps the score's sensitivity to any single report.

The sampler is hit-and-run: pick a random direction, intersect it with ``P``,
and resample the position along that chord from the restricted density.  The
score is concave, so the chord density is unimodal and rejection sampling
against its peak is cheap.  Chains are vectorized: many chains advance in
lockstep, and manipulation experiments reuse one stream of randomness across
report variants so that identical reports yield identical chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import Allocation, Instance, allocation_vector

__all__ = [
    "MechanismError",
    "InfeasibleError",
    "RejectionCapError",
    "MechanismConfig",
    "FeasibleSet",
    "normalize_instance",
    "inner_max",
    "score_q",
    "proportional_fairness_point",
    "sample_mechanism",
    "sample_chain",
    "approximation_certificate",
    "privacy_precondition_ok",
    "manipulation_gain",
    "manipulation_experiment",
    "manipulation_sweep",
]

# Shrinking a bracket by (2/3)^36 leaves ~4e-7 of the chord, far below any
# scale at which the concave chord score can hide extra mass above the
# rejection envelope.
_TERNARY_ITERS = 36

_FEAS_TOL = 1e-9


class MechanismError(ValueError):
    """Invalid input to the randomized mechanism."""


class InfeasibleError(MechanismError):
    """The floored simplex is empty (or has no volume when volume is needed)."""


class RejectionCapError(MechanismError):
    """Chord resampling exhausted its proposal budget; diagnostic, not fatal math."""


@dataclass(frozen=True)
class MechanismConfig:
    """Knobs for the exponential-weighting mechanism and its sampler.

    ``gamma`` sets the allocation floor n^(-gamma).  ``epsilon_priv`` is the
    exponential weight on the score; it doubles as the truthfulness parameter
    (misreporting can gain at most ``exp(2*epsilon_priv) - 1`` in expectation).
    """

    gamma: float = 0.5
    epsilon_priv: float = 1.0
    chain_steps: int = 20_000
    burn_in: int = 5_000
    seed: int = 0
    max_rejection_tries: int = 10_000

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise MechanismError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.epsilon_priv > 0.0:
            raise MechanismError(f"epsilon_priv must be positive, got {self.epsilon_priv}")
        if self.chain_steps <= 0:
            raise MechanismError("chain_steps must be positive")
        if not 0 <= self.burn_in < self.chain_steps:
            raise MechanismError("burn_in must lie in [0, chain_steps)")
        if self.max_rejection_tries <= 0:
            raise MechanismError("max_rejection_tries must be positive")


@dataclass(frozen=True)
class FeasibleSet:
    """The floored simplex { x >= n^(-gamma), sum(x) <= 1 } for n voters, k items."""

    n: int
    k: int
    gamma: float

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 1:
            raise MechanismError("need at least one voter and one item")
        if not 0.0 < self.gamma < 1.0:
            raise MechanismError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.k * self.lower_bound > 1.0 + _FEAS_TOL:
            raise InfeasibleError(
                f"floor {self.k} * {self.n}^-{self.gamma} = "
                f"{self.k * self.lower_bound:.6g} exceeds the unit budget; "
                "increase gamma or the voter count"
            )

    @property
    def lower_bound(self) -> float:
        return float(self.n ** -self.gamma)

    @property
    def slack(self) -> float:
        """Budget left over after every item is funded at the floor."""
        return max(1.0 - self.k * self.lower_bound, 0.0)

    def require_interior(self) -> None:
        if self.slack <= _FEAS_TOL:
            raise InfeasibleError(
                "the floored simplex is a single point; nothing to sample"
            )

    def center(self) -> np.ndarray:
        return np.full(self.k, self.lower_bound + self.slack / self.k)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> Union[bool, np.ndarray]:
        """Membership test; accepts one point (k,) or a batch (m, k)."""
        X = np.atleast_2d(np.asarray(x, dtype=float))
        ok = (X >= self.lower_bound - tol).all(axis=1) & (X.sum(axis=1) <= 1.0 + tol)
        return ok if np.asarray(x).ndim == 2 else bool(ok[0])

    def uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform draws from the set, via a flat Dirichlet over the slack."""
        w = rng.dirichlet(np.ones(self.k + 1), size=size)
        return self.lower_bound + self.slack * w[:, : self.k]

    def chord(self, X: np.ndarray, D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Parameter interval [t_lo, t_hi] with X + t*D inside the set, per row."""
        lb = self.lower_bound
        with np.errstate(divide="ignore", invalid="ignore"):
            t_floor = (lb - X) / D
        t_lo = np.where(D > 0, t_floor, -np.inf).max(axis=1)
        t_hi = np.where(D < 0, t_floor, np.inf).min(axis=1)
        sd = D.sum(axis=1)
        room = 1.0 - X.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_sum = room / sd
        t_lo = np.maximum(t_lo, np.where(sd < 0, t_sum, -np.inf))
        t_hi = np.minimum(t_hi, np.where(sd > 0, t_sum, np.inf))
        return t_lo, np.maximum(t_hi, t_lo)


def normalize_instance(inst: Instance) -> Instance:
    """Rescale to the mechanism's convention: unit budget, unit-l1 utility rows."""
    u = inst.utilities
    return Instance(
        utilities=u / u.sum(axis=1, keepdims=True),
        budget=1.0,
        item_names=inst.item_names,
    )


def _require_normalized(inst: Instance) -> None:
    if abs(inst.budget - 1.0) > 1e-9 or np.abs(inst.utilities.sum(axis=1) - 1.0).max() > 1e-9:
        raise MechanismError(
            "expected a normalized instance (unit budget, unit-sum utility rows); "
            "run normalize_instance first"
        )


class _Scorer:
    """Vectorized score evaluation, optionally with one report row swapped per chain.

    The score of an allocation x is

        q(x) = n - n^(-gamma) * max_{y in P} sum_i U_i(y) / U_i(x)

    and the inner maximum is linear in y, so it is attained at a vertex of P:
    everything at the floor plus all slack on the single best item.  That
    reduces scoring to one pass over the utility matrix.
    """

    def __init__(
        self,
        nu: np.ndarray,
        fs: FeasibleSet,
        agent: Optional[int] = None,
        override: Optional[np.ndarray] = None,
    ) -> None:
        self.nu = nu
        self.fs = fs
        self.agent = agent
        self.override = override

    def inner_terms(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inner maximum value and its argmax item, for each row of X."""
        U = X @ self.nu.T
        override = self.override
        if override is not None and override.shape[0] != X.shape[0]:
            # Probe batches stack several points per chain; repeat the per-chain
            # rows to match.
            override = np.tile(override, (X.shape[0] // override.shape[0], 1))
        if self.agent is not None:
            U[:, self.agent] = np.einsum("ck,ck->c", X, override)
        inv = 1.0 / U
        per_item = inv @ self.nu
        if self.agent is not None:
            corr = inv[:, self.agent][:, None]
            per_item = per_item + corr * (override - self.nu[self.agent][None, :])
        best_j = per_item.argmax(axis=1)
        value = self.fs.lower_bound * inv.sum(axis=1) + self.fs.slack * per_item.max(axis=1)
        return value, best_j

    def q(self, X: np.ndarray) -> np.ndarray:
        value, _ = self.inner_terms(X)
        return self.fs.n - self.fs.lower_bound * value


def _check_membership(fs: FeasibleSet, x: np.ndarray) -> None:
    if not fs.contains(x, tol=1e-7):
        raise MechanismError(
            "allocation lies outside the floored simplex "
            f"(floor {fs.lower_bound:.6g}, total {x.sum():.6g})"
        )


def inner_max(
    inst: Instance, x: Union[Allocation, np.ndarray], cfg: MechanismConfig
) -> tuple[float, Allocation]:
    """max_y sum_i U_i(y)/U_i(x) over the floored simplex, with its argmax vertex."""
    _require_normalized(inst)
    fs = FeasibleSet(inst.n, inst.k, cfg.gamma)
    xv = allocation_vector(x)
    _check_membership(fs, xv)
    value, best_j = _Scorer(inst.utilities, fs).inner_terms(xv[None, :])
    y = np.full(inst.k, fs.lower_bound)
    y[int(best_j[0])] += fs.slack
    return float(value[0]), Allocation(x=y)


def score_q(inst: Instance, x: Union[Allocation, np.ndarray], cfg: MechanismConfig) -> float:
    """The mechanism's concave quality score; 0 <= q <= n - n^(1-gamma)."""
    value, _ = inner_max(inst, x, cfg)
    return inst.n - FeasibleSet(inst.n, inst.k, cfg.gamma).lower_bound * value


def privacy_precondition_ok(n: int, k: int, epsilon: float) -> bool:
    """Whether epsilon is small enough for the sampled-score utility guarantee.

    The high-probability bound on the sampled allocation's quality needs
    1/epsilon > k*n / ((n - k^2) * ln n); in particular n must exceed k^2.
    """
    if n <= k * k or n < 2:
        return False
    return 1.0 / epsilon > k * n / ((n - k * k) * math.log(n))


def approximation_certificate(
    inst: Instance, x: Union[Allocation, np.ndarray], cfg: MechanismConfig
) -> float:
    """Additive blocking-margin bound implied by x's score gap.

    If the inner maximum at x is n + alpha, no coalition deviating with its
    proportional budget share can raise every member's (normalized) utility by
    more than ((k-1) n^-gamma + alpha/n) / (1 - k n^-gamma).  Accepts x in the
    instance's own budget units.
    """
    if not privacy_precondition_ok(inst.n, inst.k, cfg.epsilon_priv):
        raise MechanismError(
            "epsilon_priv too large for the sampled-score guarantee: need "
            f"1/eps > k*n/((n-k^2)*ln n) with n={inst.n}, k={inst.k}, "
            f"eps={cfg.epsilon_priv:g}"
        )
    norm = normalize_instance(inst)
    fs = FeasibleSet(norm.n, norm.k, cfg.gamma)
    xv = allocation_vector(x) / inst.budget
    _check_membership(fs, xv)
    value, _ = _Scorer(norm.utilities, fs).inner_terms(xv[None, :])
    alpha = max(float(value[0]) - norm.n, 0.0)
    lb = fs.lower_bound
    return ((norm.k - 1) * lb + alpha / norm.n) / (1.0 - norm.k * lb)


# ---------------------------------------------------------------------------
# Proportional fairness restricted to the floored simplex
# ---------------------------------------------------------------------------


def _project_floored(v: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto { v >= 0, sum(v) <= cap }."""
    w = np.maximum(v, 0.0)
    if w.sum() <= cap:
        return w
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - cap
    idx = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _segment_argmax(U: np.ndarray, w: np.ndarray) -> float:
    """argmax over t in [0, 1] of sum_i log(U_i + t * w_i), given positive slope at 0."""
    hi_slope = float((w / (U + w)).sum())
    if hi_slope >= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float((w / (U + mid * w)).sum()) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def proportional_fairness_point(
    inst: Instance,
    cfg: MechanismConfig,
    tol: Optional[float] = None,
    max_iters: int = 20_000,
) -> np.ndarray:
    """Maximize sum_i log U_i over the floored simplex.

    Stops when the inner maximum at the iterate is within ``tol`` of n, which
    certifies the score is within n^(-gamma) * tol of its maximum value
    n - n^(1-gamma).  Uses projected gradient ascent with backtracking, plus an
    exact line search toward the best vertex to escape slow corner approaches.
    """
    _require_normalized(inst)
    fs = FeasibleSet(inst.n, inst.k, cfg.gamma)
    if fs.slack <= _FEAS_TOL:
        return fs.center()
    if tol is None:
        tol = 1e-8 * inst.n ** cfg.gamma
    u = inst.utilities
    lb, slack = fs.lower_bound, fs.slack
    x = fs.center()
    fx = float(np.log(u @ x).sum())
    eta = 1.0
    for _ in range(max_iters):
        U = u @ x
        grad = (u / U[:, None]).sum(axis=0)
        value = lb * (1.0 / U).sum() + slack * grad.max()
        if value - inst.n <= tol:
            break
        candidates: list[tuple[float, np.ndarray]] = []

        y = np.full(inst.k, lb)
        y[int(np.argmax(grad))] += slack
        d = y - x
        w = u @ d
        if float((w / U).sum()) > 0.0:
            x_seg = x + _segment_argmax(U, w) * d
            candidates.append((float(np.log(u @ x_seg).sum()), x_seg))

        while eta > 1e-18:
            x_pg = lb + _project_floored((x - lb) + eta * grad, slack)
            f_pg = float(np.log(u @ x_pg).sum())
            if f_pg >= fx + 1e-4 * float(grad @ (x_pg - x)):
                candidates.append((f_pg, x_pg))
                eta *= 1.3
                break
            eta *= 0.5

        best = max(candidates, key=lambda c: c[0], default=None)
        if best is None or best[0] <= fx:
            break
        fx, x = best[0], best[1]
    return x


# ---------------------------------------------------------------------------
# Hit-and-run sampling
# ---------------------------------------------------------------------------


def _tile(a: np.ndarray, chains: int, width: int) -> np.ndarray:
    if width == chains:
        return a
    reps = (chains // width,) + (1,) * (a.ndim - 1)
    return np.tile(a, reps)


def _hit_and_run(
    scorer: _Scorer,
    eps: float,
    X0: np.ndarray,
    n_steps: int,
    burn_in: int,
    thin: int,
    rng: np.random.Generator,
    max_tries: int,
    crn_width: Optional[int] = None,
    collect: bool = True,
):
    """Advance all chains in lockstep; optionally collect thinned states.

    ``crn_width`` < chains means random draws are made at that width and tiled,
    so chains that differ only in block index consume identical randomness --
    the pairing that makes misreport experiments exactly reproducible.
    """
    fs = scorer.fs
    X = np.array(X0, dtype=float)
    chains, k = X.shape
    width = crn_width or chains
    if chains % width != 0:
        raise MechanismError("chain count must be a multiple of the random-draw width")
    lb = fs.lower_bound
    kept: list[np.ndarray] = []
    proposals = 0
    worst_round = 0
    for step in range(n_steps):
        D = _tile(rng.standard_normal((width, k)), chains, width)
        D /= np.linalg.norm(D, axis=1, keepdims=True)
        t_lo, t_hi = fs.chord(X, D)

        # Bracket the chord maximum of the (concave) score by ternary search,
        # tracking the best value ever seen as the rejection envelope.
        a, b = t_lo.copy(), t_hi.copy()
        phi_best = scorer.q(X)
        for _ in range(_TERNARY_ITERS):
            m1 = a + (b - a) / 3.0
            m2 = b - (b - a) / 3.0
            ph = scorer.q(np.concatenate([X + m1[:, None] * D, X + m2[:, None] * D]))
            f1, f2 = ph[:chains], ph[chains:]
            phi_best = np.maximum(phi_best, np.maximum(f1, f2))
            left = f1 < f2
            a = np.where(left, m1, a)
            b = np.where(left, b, m2)

        accepted = np.zeros(chains, dtype=bool)
        t_new = np.zeros(chains)
        rounds = 0
        while not accepted.all():
            if rounds >= max_tries:
                raise RejectionCapError(
                    f"chord resampling exceeded {max_tries} proposals at step {step} "
                    f"({int((~accepted).sum())} of {chains} chains pending, "
                    f"epsilon={eps:g}); raise max_rejection_tries or lower epsilon"
                )
            u_t = _tile(rng.random(width), chains, width)
            u_acc = _tile(rng.random(width), chains, width)
            t_prop = t_lo + u_t * (t_hi - t_lo)
            ph = scorer.q(X + t_prop[:, None] * D)
            ok = u_acc <= np.exp(np.minimum(eps * (ph - phi_best), 0.0))
            t_new = np.where(ok & ~accepted, t_prop, t_new)
            accepted |= ok
            rounds += 1
            proposals += chains
        worst_round = max(worst_round, rounds)

        X = X + t_new[:, None] * D
        np.maximum(X, lb, out=X)
        totals = X.sum(axis=1)
        over = totals > 1.0
        if over.any():
            scale = (1.0 - k * lb) / (totals[over] - k * lb)
            X[over] = lb + (X[over] - lb) * scale[:, None]

        if collect and step >= burn_in and (step - burn_in) % thin == 0:
            kept.append(X.copy())

    diag = {
        "chains": int(chains),
        "steps": int(n_steps),
        "burn_in": int(burn_in),
        "proposals": int(proposals),
        "accept_rate": float(n_steps * chains / max(proposals, 1)),
        "worst_rejection_rounds": int(worst_round),
    }
    samples = np.stack(kept) if kept else None
    return samples, X, diag


def sample_mechanism(inst: Instance, cfg: MechanismConfig) -> tuple[Allocation, dict]:
    """One draw with probability density proportional to exp(epsilon * q(x)).

    Runs a single seeded hit-and-run chain for ``cfg.chain_steps`` steps and
    returns the final state, rescaled to the instance's budget units.
    """
    norm = normalize_instance(inst)
    fs = FeasibleSet(norm.n, norm.k, cfg.gamma)
    fs.require_interior()
    rng = np.random.default_rng(cfg.seed)
    scorer = _Scorer(norm.utilities, fs)
    X0 = fs.uniform(rng, 1)
    _, X, diag = _hit_and_run(
        scorer,
        cfg.epsilon_priv,
        X0,
        cfg.chain_steps,
        burn_in=cfg.chain_steps,
        thin=1,
        rng=rng,
        max_tries=cfg.max_rejection_tries,
        collect=False,
    )
    x = X[0]
    diag["score"] = float(scorer.q(X)[0])
    diag["epsilon_priv"] = float(cfg.epsilon_priv)
    diag["gamma"] = float(cfg.gamma)
    diag["seed"] = int(cfg.seed)
    return Allocation(x=x * inst.budget), diag


def sample_chain(
    inst: Instance,
    cfg: MechanismConfig,
    n_samples: int,
    n_chains: int = 50,
    thin: int = 1,
) -> tuple[np.ndarray, dict]:
    """Pooled draws from many parallel chains, in normalized (unit-budget) units.

    Each chain burns in for ``cfg.burn_in`` steps, then contributes every
    ``thin``-th state until ``n_samples`` total are collected.  Returns an
    (n_samples, k) array ordered step-major, so consecutive rows come from
    different chains.
    """
    if n_samples <= 0 or n_chains <= 0 or thin <= 0:
        raise MechanismError("n_samples, n_chains and thin must be positive")
    norm = normalize_instance(inst)
    fs = FeasibleSet(norm.n, norm.k, cfg.gamma)
    fs.require_interior()
    rng = np.random.default_rng(cfg.seed)
    scorer = _Scorer(norm.utilities, fs)
    per_chain = -(-n_samples // n_chains)
    n_steps = cfg.burn_in + (per_chain - 1) * thin + 1
    X0 = fs.uniform(rng, n_chains)
    samples, _, diag = _hit_and_run(
        scorer,
        cfg.epsilon_priv,
        X0,
        n_steps,
        burn_in=cfg.burn_in,
        thin=thin,
        rng=rng,
        max_tries=cfg.max_rejection_tries,
    )
    flat = samples.reshape(-1, norm.k)[:n_samples]
    diag["thin"] = int(thin)
    diag["collected"] = int(flat.shape[0])
    return flat, diag


# ---------------------------------------------------------------------------
# Manipulation experiments
# ---------------------------------------------------------------------------


def _prepare_reports(inst: Instance, agent: int, misreports: np.ndarray) -> np.ndarray:
    R = np.atleast_2d(np.asarray(misreports, dtype=float))
    if R.shape[1] != inst.k:
        raise MechanismError(f"misreports must have {inst.k} columns")
    if not np.all(np.isfinite(R)) or np.any(R < 0):
        raise MechanismError("misreports must be finite and nonnegative")
    if np.abs(R.sum(axis=1) - 1.0).max() > 1e-9:
        raise MechanismError("misreports must be normalized to unit l1 norm")
    if not 0 <= agent < inst.n:
        raise MechanismError(f"agent index {agent} out of range")
    return R


def _manipulation_stats(
    inst: Instance,
    agent: int,
    misreports: np.ndarray,
    cfg: MechanismConfig,
    trials: int,
    thin: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-misreport expected-utility gains and paired standard errors.

    Runs one chain block per report variant (truth first), all blocks seeing
    the same random draws, and compares per-chain time averages of the agent's
    true utility.  Identical reports therefore produce identical chains and an
    exactly zero gain estimate.
    """
    if trials < 2:
        raise MechanismError("need at least 2 trials for a standard error")
    norm = normalize_instance(inst)
    R = _prepare_reports(norm, agent, misreports)
    reports = np.vstack([norm.utilities[agent][None, :], R])
    variants = reports.shape[0]
    chains = variants * trials
    fs = FeasibleSet(norm.n, norm.k, cfg.gamma)
    fs.require_interior()
    rng = np.random.default_rng(cfg.seed)
    scorer = _Scorer(
        norm.utilities, fs, agent=agent, override=np.repeat(reports, trials, axis=0)
    )
    X0 = _tile(fs.uniform(rng, trials), chains, trials)
    samples, _, _ = _hit_and_run(
        scorer,
        cfg.epsilon_priv,
        X0,
        cfg.chain_steps,
        burn_in=cfg.burn_in,
        thin=thin,
        rng=rng,
        max_tries=cfg.max_rejection_tries,
        crn_width=trials,
    )
    # samples: (kept_steps, variants * trials, k); average the agent's true
    # utility over each chain's trajectory.
    per_chain = (samples @ norm.utilities[agent]).mean(axis=0)
    per = per_chain.reshape(variants, trials)
    diffs = per[1:] - per[0][None, :]
    gains = diffs.mean(axis=1)
    ses = diffs.std(axis=1, ddof=1) / math.sqrt(trials)
    return gains, ses


def manipulation_gain(
    inst: Instance,
    agent: int,
    misreport: np.ndarray,
    cfg: MechanismConfig,
    trials: int = 8,
) -> float:
    """Estimated change in agent's expected true utility from one misreport."""
    gains, _ = _manipulation_stats(inst, agent, np.asarray(misreport)[None, :], cfg, trials)
    return float(gains[0])


def manipulation_experiment(
    inst: Instance,
    agent: int,
    misreport: np.ndarray,
    cfg: MechanismConfig,
    trials: int = 8,
) -> tuple[float, float]:
    """Gain estimate plus its paired Monte-Carlo standard error."""
    gains, ses = _manipulation_stats(inst, agent, np.asarray(misreport)[None, :], cfg, trials)
    return float(gains[0]), float(ses[0])


def manipulation_sweep(
    inst: Instance,
    agent: int,
    misreports: np.ndarray,
    cfg: MechanismConfig,
    trials: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Gains and standard errors for a whole batch of misreports in one run."""
    return _manipulation_stats(inst, agent, np.asarray(misreports), cfg, trials)
