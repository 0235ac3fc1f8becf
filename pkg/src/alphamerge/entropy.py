"""Asymptotic and one-shot entropy functionals.

All entropies are in bits (log base 2).  The conditional min-entropy

    H_min(A|R) = -log2 min{ Tr sigma : rho_AR <= id_A (x) sigma,  sigma >= 0 }

is computed without an external SDP solver: bisection on t = Tr sigma with
an inner projected-subgradient minimisation of lambda_max(rho - id (x) sigma)
over the trace-t PSD cone, warm starts and random restarts.  The returned
value is the certified feasible side of the final bracket.

Smoothing is deliberately restricted to the eigenbasis spectrum family
(truncate the smallest eigenvalues for H_max, cap the largest for H_min,
renormalise) within purified distance epsilon.  This is a standard practical
heuristic, not the full epsilon-ball optimisation, and every report that
carries smoothed values says so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, LabelError, StateError
from .hilbert import (MultipartiteState, _clip_spectrum, _density_of, as_rng,
                      partial_trace, permute_factors)

SMOOTHING_NOTE = "eigenbasis spectrum truncation; O(log eps) corrections dropped"


def _spectrum(rho) -> np.ndarray:
    mat = _density_of(rho)
    return _clip_spectrum(np.linalg.eigvalsh(mat))


def von_neumann(rho) -> float:
    """H(rho) = -sum lambda log2 lambda, with 0 log 0 = 0."""
    w = _spectrum(rho)
    w = w[w > 0]
    return float(-(w * np.log2(w)).sum()) if w.size else 0.0


def min_entropy(rho) -> float:
    """Unconditional min-entropy -log2 lambda_max."""
    w = _spectrum(rho)
    return float(-np.log2(w.max()))


def max_entropy(rho) -> float:
    """Renyi-1/2 entropy H_max = 2 log2 Tr sqrt(rho)."""
    w = _spectrum(rho)
    return float(2.0 * np.log2(np.sqrt(w).sum()))


@dataclass(frozen=True)
class EntropyReport:
    """Marginal and derived entropies of a tripartite pure state (bits)."""

    hA: float
    hB: float
    hAB: float
    hR: float
    condAB: float        # H(A|B)
    mutAR: float         # I(A:R)
    mutAB: float         # I(A:B)
    coherentInfo: float  # I_c(A>B) = -H(A|B)

    def to_dict(self) -> dict:
        return asdict(self)


def entropy_report(psi: MultipartiteState, a: str = "A", b: str = "B",
                   r: str = "R") -> EntropyReport:
    """All marginal entropies of a pure state over three labelled parts."""
    if not psi.is_pure:
        raise StateError("entropy_report needs a pure state")
    if sorted(psi.names) != sorted([a, b, r]):
        raise LabelError(f"expected exactly the factors {[a, b, r]}, got {psi.names}")
    h = {}
    for keep in ((a,), (b,), (r,), (a, b), (a, r)):
        h[keep] = von_neumann(partial_trace(psi, keep))
    hA, hB, hR = h[(a,)], h[(b,)], h[(r,)]
    hAB, hAR = h[(a, b)], h[(a, r)]
    cond_ab = hAB - hB
    mut_ar = hA + hR - hAR
    mut_ab = hA + hB - hAB
    return EntropyReport(hA=hA, hB=hB, hAB=hAB, hR=hR, condAB=cond_ab,
                         mutAR=mut_ar, mutAB=mut_ab, coherentInfo=-cond_ab)


# ---------------------------------------------------------------------------
# conditional min-entropy solver
# ---------------------------------------------------------------------------

def _project_simplex_scaled(w: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of w onto {x >= 0, sum x = total}."""
    if total <= 0:
        return np.zeros_like(w)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, w.size + 1)
    cond = u - css / idx > 0
    k = int(idx[cond][-1])
    theta = css[k - 1] / k
    return np.clip(w - theta, 0.0, None)


def _project_psd_trace(sigma: np.ndarray, total: float) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (sigma + sigma.conj().T))
    w = _project_simplex_scaled(w, total)
    return (v * w) @ v.conj().T


def _top_eigpair(mat: np.ndarray):
    n = mat.shape[0]
    if n <= 64:
        w, v = np.linalg.eigh(mat)
        return float(w[-1]), v[:, -1]
    w, v = scipy.linalg.eigh(mat, subset_by_index=[n - 1, n - 1])
    return float(w[0]), v[:, 0]


def _env_of(rho_ar: np.ndarray, d_a: int, d_r: int) -> np.ndarray:
    """Partial trace over the A part of an AR operator."""
    return np.einsum("aras->rs", rho_ar.reshape(d_a, d_r, d_a, d_r))


FEAS_TOL = 1e-11


def _pg_descend(rho, eye_a, d_a, d_r, sigma, total, iters, stall, imp_tol):
    """One projected-subgradient run; returns (best lambda, last sigma)."""
    best = np.inf
    stale = 0
    for k in range(iters):
        lam, vec = _top_eigpair(rho - np.kron(eye_a, sigma))
        if lam < best - imp_tol:
            best = lam
            stale = 0
        else:
            best = min(best, lam)
            stale += 1
        if best <= FEAS_TOL:
            return best, sigma
        if stale > stall:
            break
        grad = -_env_of(np.outer(vec, vec.conj()), d_a, d_r)
        gn2 = float(np.real(np.vdot(grad, grad)))
        if gn2 < 1e-300:
            break
        # Polyak step toward the lam <= 0 level set, with a floor so the
        # iteration keeps moving when lam hovers just above zero
        step = max(lam, 1e-6 * total) / gn2
        sigma = _project_psd_trace(sigma - step * grad, total)
    return best, sigma


def _min_lmax_at_trace(rho: np.ndarray, d_a: int, d_r: int, total: float,
                       inits, max_iter: int, stall: int):
    """Minimise lambda_max(rho - id (x) sigma) over sigma >= 0, Tr sigma = total.

    Feasibility search: a quick screen over all starting points, a coarse
    projected-subgradient pass from the most promising ones, then one
    escalated pass only when the coarse result lands in the ambiguous band
    just above zero.  Returns (best value, feasible sigma or None).
    """
    eye_a = np.eye(d_a)
    screened = []
    for sigma0 in inits:
        sigma = _project_psd_trace(sigma0, total)
        lam, _ = _top_eigpair(rho - np.kron(eye_a, sigma))
        if lam <= FEAS_TOL:
            return lam, sigma
        screened.append((lam, sigma))
    screened.sort(key=lambda t: t[0])
    best = np.inf
    survivors = []
    coarse_iters = min(max_iter, max(2 * stall, 120))
    for lam0, sigma in screened[:2]:
        val, sig = _pg_descend(rho, eye_a, d_a, d_r, sigma, total,
                               coarse_iters, stall, imp_tol=1e-6 * total)
        best = min(best, val)
        if best <= FEAS_TOL:
            return best, sig
        survivors.append(sig)
    if best > 0.02 * max(total, 1e-6):
        return best, None
    # ambiguous: one polish pass with a tighter improvement test
    val, sig = _pg_descend(rho, eye_a, d_a, d_r, survivors[0], total,
                           min(max_iter, 1500), 4 * stall, imp_tol=1e-11)
    best = min(best, val)
    return best, (sig if best <= FEAS_TOL else None)


def min_entropy_cond(rho: MultipartiteState, conditioned_on: str | None = None, *,
                     tol: float = 1e-6, max_iter: int = 10_000, restarts: int = 2,
                     seed: int = 0) -> float:
    """Conditional min-entropy H_min(A|R) of a bipartite density matrix.

    `rho` must have exactly two factors; `conditioned_on` names the R factor
    (default: the second one).  Raises ConvergenceError with the best bound
    attached if the bracket cannot be tightened within the iteration budget.
    """
    if len(rho.factors) != 2:
        raise LabelError(f"min_entropy_cond needs a bipartite state, got {rho.names}")
    r_name = conditioned_on or rho.names[1]
    if r_name not in rho.names:
        raise LabelError(f"unknown conditioning factor {r_name!r}")
    a_name = [n for n in rho.names if n != r_name][0]
    if rho.names != (a_name, r_name):
        rho = permute_factors(rho, [a_name, r_name])
    mat = rho.density()
    d_a, d_r = rho.dim_of(a_name), rho.dim_of(r_name)
    rng = as_rng(seed)

    rho_r = _env_of(mat, d_a, d_r)
    lam_max = float(np.linalg.eigvalsh(mat)[-1])
    # certified bracket: t_lo infeasible, t_hi feasible
    t_hi = max(lam_max * d_r, 1e-12)
    t_lo = max(np.linalg.eigvalsh(rho_r)[-1], 1e-300)  # rho_R <= d_A sigma-ish floor
    t_lo = max(t_lo / d_a, 1e-300)
    if t_lo >= t_hi:
        t_lo = t_hi / 2

    w_r, v_r = np.linalg.eigh(rho_r)
    sqrt_rho_r = (v_r * np.sqrt(_clip_spectrum(w_r))) @ v_r.conj().T
    warm = {"sigma": None, "t": None}

    def inits_for(total):
        base = []
        if warm["sigma"] is not None:
            base.append(total / warm["t"] * warm["sigma"])
        base += [total * sqrt_rho_r / max(np.trace(sqrt_rho_r).real, 1e-300),
                 total * rho_r / max(np.trace(rho_r).real, 1e-300),
                 total * np.eye(d_r) / d_r]
        for _ in range(restarts):
            g = rng.standard_normal((d_r, d_r)) + 1j * rng.standard_normal((d_r, d_r))
            p = g @ g.conj().T
            base.append(total * p / np.trace(p).real)
        return base

    def probe(total):
        val, sig = _min_lmax_at_trace(mat, d_a, d_r, total, inits_for(total),
                                      max_iter, stall)
        if val <= FEAS_TOL and sig is not None:
            warm["sigma"], warm["t"] = sig, total
        return val

    stall = max(60, d_a * d_r)
    # confirm the endpoints before trusting the bracket
    if probe(t_hi) > FEAS_TOL:
        t_hi *= d_a * d_r
        if probe(t_hi) > FEAS_TOL:
            raise ConvergenceError("no feasible trace found for H_min(A|R)",
                                   best_bound=-math.log2(t_hi))
    for _ in range(200):
        if math.log2(t_hi) - math.log2(t_lo) <= tol * 0.5:
            break
        t_mid = math.sqrt(t_lo * t_hi)
        if probe(t_mid) <= FEAS_TOL:
            t_hi = t_mid
        else:
            t_lo = t_mid
    else:
        raise ConvergenceError("H_min(A|R) bracket did not converge",
                               best_bound=-math.log2(t_hi))
    return float(-math.log2(t_hi))


# ---------------------------------------------------------------------------
# smoothing (eigenbasis spectrum family)
# ---------------------------------------------------------------------------

def _check_eps(eps: float):
    if not (0.0 <= eps <= 0.3):
        raise StateError(f"smoothing epsilon must lie in [0, 0.3], got {eps}")


def _truncate_tail(w: np.ndarray, eps: float) -> np.ndarray:
    """Drop the smallest eigenvalues with total weight <= eps^2, renormalise.

    For a same-eigenbasis truncation the purified distance to the original
    equals sqrt(removed weight), so the budget is exactly eps^2.
    """
    order = np.argsort(w)
    removed = 0.0
    keep = w.copy()
    for i in order:
        if w[i] <= 0:
            continue
        if removed + w[i] > eps * eps + 1e-15:
            break
        removed += w[i]
        keep[i] = 0.0
    s = keep.sum()
    return keep / s if s > 0 else w


def _cap_spectrum(w: np.ndarray, eps: float) -> np.ndarray:
    """Cap the largest eigenvalues at the smallest c with purified distance <= eps."""
    if eps <= 0:
        return w

    def pdist(c):
        mu = np.minimum(w, c)
        s = mu.sum()
        if s <= 0:
            return 1.0
        fid = np.sqrt(w * mu).sum() / math.sqrt(s)
        return math.sqrt(max(0.0, 1.0 - min(1.0, fid) ** 2))

    lo, hi = 0.0, float(w.max())
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if pdist(mid) <= eps:
            hi = mid
        else:
            lo = mid
    mu = np.minimum(w, hi)
    s = mu.sum()
    return mu / s if s > 0 else w


def smooth(kind: str, rho, epsilon: float, *, conditioned_on: str | None = None,
           **solver_kw) -> float:
    """Smoothed entropy over the spectrum-truncation family.

    kind is one of 'hmax', 'hmin' (both unconditional, any density input) or
    'hmin-cond' (bipartite MultipartiteState).  epsilon is the purified
    distance budget in [0, 0.3].
    """
    _check_eps(epsilon)
    if kind == "hmax":
        w = _spectrum(rho)
        w = _truncate_tail(w, epsilon)
        w = w[w > 0]
        return float(2.0 * np.log2(np.sqrt(w).sum()))
    if kind == "hmin":
        w = _spectrum(rho)
        w = _cap_spectrum(w, epsilon)
        return float(-np.log2(w.max()))
    if kind == "hmin-cond":
        if not isinstance(rho, MultipartiteState) or len(rho.factors) != 2:
            raise StateError("hmin-cond smoothing needs a bipartite MultipartiteState")
        if epsilon == 0.0:
            return min_entropy_cond(rho, conditioned_on, **solver_kw)
        mat = rho.density()
        w, v = np.linalg.eigh(mat)
        w = _clip_spectrum(w)
        w = _cap_spectrum(w, epsilon)
        smoothed = (v * w) @ v.conj().T
        state = MultipartiteState(rho.factors, smoothed, validate=False)
        return min_entropy_cond(state, conditioned_on, **solver_kw)
    raise StateError(f"unknown smoothing kind {kind!r}")


@dataclass(frozen=True)
class OneShotEntropies:
    """Smoothed one-shot pair used by the one-shot ledger formulas."""

    hMinCond: float   # H_min^eps(A|R)
    hMax: float       # H_max^eps(A)
    epsilon: float
    note: str = SMOOTHING_NOTE

    def to_dict(self) -> dict:
        return asdict(self)


def one_shot_entropies(psi: MultipartiteState, epsilon: float = 0.05, *,
                       a: str = "A", b: str = "B", r: str = "R",
                       **solver_kw) -> OneShotEntropies:
    """H_max^eps(A) and H_min^eps(A|R) of a tripartite pure state."""
    _check_eps(epsilon)
    rho_a = partial_trace(psi, (a,))
    rho_ar = partial_trace(psi, (a, r))
    hmax = smooth("hmax", rho_a, epsilon)
    hmin = smooth("hmin-cond", rho_ar, epsilon, conditioned_on=r, **solver_kw)
    return OneShotEntropies(hMinCond=hmin, hMax=hmax, epsilon=epsilon)
