"""Per-subcarrier digital precoding on the equivalent K x K channel.

The equivalent channel is stored row-wise: ``H_equ[m][k, :] = h^T[k, m] F_RF``,
so the effective gain of stream ``i`` at user ``k`` is ``(H_equ[m] @ F_BB[m])[k, i]``.
Regularized-inverse updates operate on the column vectors ``v_k = conj(row_k)``,
i.e. on ``H_equ[m]^H``; with that convention the single-user solution is
maximum-ratio transmission ``f ∝ conj(h_equ)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError, RankError
from .metrics import sinr_from_gains

ZF_COND_LIMIT = 1e12
WELL_CONDITIONED = 1e6


@dataclass(frozen=True, eq=False)
class EquivalentChannel:
    h_equ: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h_equ, dtype=complex)
        if h.ndim != 3 or h.shape[1] != h.shape[2]:
            raise ConfigurationError(f"equivalent channel must be (N_c, K, K), got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise NumericalError("equivalent channel contains non-finite entries")
        object.__setattr__(self, "h_equ", h)

    def __array__(self, dtype=None, copy=None):
        return self.h_equ if dtype is None else self.h_equ.astype(dtype)

    @property
    def n_c(self) -> int:
        return self.h_equ.shape[0]

    @property
    def k_users(self) -> int:
        return self.h_equ.shape[1]


@dataclass(frozen=True, eq=False)
class DigitalBeamformer:
    """Stack of ``F_BB[m]`` matrices, shape ``(N_c, K, K)``; column ``k`` serves user ``k``."""

    f_bb: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f_bb, dtype=complex)
        if f.ndim != 3:
            raise ConfigurationError(f"digital beamformer must be 3-D, got shape {f.shape}")
        object.__setattr__(self, "f_bb", f)

    def __array__(self, dtype=None, copy=None):
        return self.f_bb if dtype is None else self.f_bb.astype(dtype)

    def power(self) -> np.ndarray:
        return np.sum(np.abs(self.f_bb) ** 2, axis=(1, 2))


@dataclass
class WmmseState:
    """Auxiliary variables of the last WMMSE update.

    ``u``, ``w`` have shape (N_c, K), ``mu`` (N_c,). ``f_raw`` is the
    beamformer produced from them before power projection.
    """

    u: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    se_trace: List[float] = field(default_factory=list)
    f_raw: Optional[np.ndarray] = None
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Coefficients of the regularized-inverse beamformer family.

    ``a`` (N_c, K) complex, ``b`` (N_c,) and ``c`` (N_c, K) non-negative.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=complex))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))

    def to_matrix(self) -> np.ndarray:
        """Real layout, one row per subcarrier: ``[Re a | Im a | b | c]``."""
        return np.concatenate([self.a.real, self.a.imag, self.b[:, None], self.c], axis=1)

    @classmethod
    def from_matrix(cls, x: np.ndarray) -> "ParamSet":
        k = (x.shape[1] - 1) // 3
        return cls(x[:, :k] + 1j * x[:, k:2 * k], x[:, 2 * k], x[:, 2 * k + 1:])

    def is_valid(self) -> bool:
        return bool(np.all(self.b >= 0) and np.all(self.c >= 0)
                    and np.all(np.isfinite(self.to_matrix())))


def _arr(x) -> np.ndarray:
    return np.asarray(x)


def equivalent_channel(h, f_rf) -> EquivalentChannel:
    h = _arr(h)
    f_rf = _arr(f_rf)
    if f_rf.ndim != 2 or h.shape[-1] != f_rf.shape[0]:
        raise ConfigurationError(f"channel {h.shape} and F_RF {f_rf.shape} do not conform")
    return EquivalentChannel(h @ f_rf)


def project_power(f_bb, p_t: float) -> np.ndarray:
    """Scale every ``F_BB[m]`` to squared Frobenius norm ``p_t``."""
    f = _arr(f_bb)
    norm = np.sqrt(np.sum(np.abs(f) ** 2, axis=(1, 2)))
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        bad = int(np.flatnonzero((norm == 0) | ~np.isfinite(norm))[0])
        raise DomainError(f"cannot power-project a degenerate beamformer (subcarrier {bad})")
    return f * (np.sqrt(p_t) / norm)[:, None, None]


def rates(h_equ, f_bb, sigma_sq) -> np.ndarray:
    """Per-subcarrier sum rate ``sum_k log2(1 + SINR[m, k])``."""
    s = sinr_from_gains(_arr(h_equ) @ _arr(f_bb), sigma_sq)
    return np.log2(1.0 + s).sum(axis=1)


def sum_rate(h_equ, f_bb, sigma_sq) -> float:
    r = rates(h_equ, f_bb, sigma_sq)
    return float(r.sum() / r.shape[0])


def zf(h_equ, p_t: float) -> DigitalBeamformer:
    h = _arr(h_equ)
    cond = np.linalg.cond(h)
    bad = ~np.isfinite(cond) | (cond > ZF_COND_LIMIT)
    if np.any(bad):
        m = int(np.flatnonzero(bad)[0])
        raise RankError(f"equivalent channel is singular on subcarrier {m} "
                        f"(condition number {cond[m]:.3g})", subcarrier=m)
    f = np.linalg.inv(h)
    # one refinement step keeps H @ F diagonal to near machine precision
    eye = np.eye(h.shape[1])
    f = f + f @ (eye - h @ f)
    return DigitalBeamformer(project_power(f, p_t))


def matched_filter(h_equ, p_t: float) -> DigitalBeamformer:
    h = _arr(h_equ)
    return DigitalBeamformer(project_power(np.conj(np.swapaxes(h, 1, 2)), p_t))


def initial_beamformer(h_equ, p_t: float, cond_limit: float = WELL_CONDITIONED) -> DigitalBeamformer:
    """ZF on well-conditioned subcarriers, matched filter elsewhere."""
    h = _arr(h_equ)
    f = np.conj(np.swapaxes(h, 1, 2))
    cond = np.linalg.cond(h)
    good = np.isfinite(cond) & (cond <= cond_limit)
    if np.any(good):
        f = f.copy()
        f[good] = np.linalg.inv(h[good])
    return DigitalBeamformer(project_power(f, p_t))


# -- regularized inverse beamformer -------------------------------------------------

def regularized_beamformer(h_equ, a, b, c) -> np.ndarray:
    """``f_k = (b I + sum_l c_l v_l v_l^H)^{-1} a_k v_k`` with ``v_k = conj(row_k)``.

    Returned before any power projection.
    """
    h = _arr(h_equ)
    vh = np.conj(np.swapaxes(h, 1, 2))                  # columns v_k
    k = h.shape[1]
    mat = b[:, None, None] * np.eye(k) + (vh * c[:, None, :]) @ h
    rhs = vh * a[:, None, :]
    singular = b <= 0
    if np.any(singular):
        cond = np.linalg.cond(mat[singular])
        if np.any(~np.isfinite(cond) | (cond > ZF_COND_LIMIT)):
            m = int(np.flatnonzero(singular)[np.argmax(~np.isfinite(cond) | (cond > ZF_COND_LIMIT))])
            raise RankError(f"regularized matrix singular on subcarrier {m}", subcarrier=m)
    return np.linalg.solve(mat, rhs)


def param_beamformer(h_equ, params: ParamSet, p_t: float, project: bool = True) -> DigitalBeamformer:
    f = regularized_beamformer(h_equ, params.a, params.b, params.c)
    return DigitalBeamformer(project_power(f, p_t) if project else f)


def wmmse_to_params(state: WmmseState) -> ParamSet:
    return ParamSet(a=state.u * state.w, b=np.array(state.mu, dtype=float),
                    c=state.w * np.abs(state.u) ** 2)


# -- WMMSE ------------------------------------------------------------------------

def wmmse_weights(h_equ, f_bb, sigma_sq, denominator: str = "full"):
    """MMSE receive scalars ``u`` and MSE weights ``w``, each (N_c, K).

    ``denominator="printed"`` drops the desired term from the denominators;
    then ``w = 1/(1 - SINR)`` which is negative whenever SINR > 1.
    """
    g = _arr(h_equ) @ _arr(f_bb)
    power = np.abs(g) ** 2
    desired = np.diagonal(g, axis1=1, axis2=2)
    total = power.sum(axis=2) + sigma_sq
    if denominator == "printed":
        total = total - np.abs(desired) ** 2
    elif denominator != "full":
        raise ConfigurationError(f"unknown denominator convention {denominator!r}")
    u = desired / total
    w = 1.0 / (1.0 - np.abs(desired) ** 2 / total)
    return u, w


def _power_spectrum(a_mat, rhs, clip: bool = True):
    lam, q = np.linalg.eigh(a_mat)
    if clip:
        lam = np.maximum(lam, 0.0)
    qb = np.conj(np.swapaxes(q, 1, 2)) @ rhs
    energy = np.sum(np.abs(qb) ** 2, axis=2)
    return lam, q, qb, energy


def _power_at(lam, energy, mu):
    denom = (lam + mu[:, None]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(energy > 0, energy / denom, 0.0)
    return terms.sum(axis=1)


def _bisect(lam, energy, p_t, tol, max_steps=200):
    n = lam.shape[0]
    floor = np.maximum(0.0, -lam.min(axis=1))
    mu = floor.copy()
    active = ~(_power_at(lam, energy, floor) <= p_t * (1 + tol))
    if not np.any(active):
        return mu
    width = np.ones(n)
    for _ in range(max_steps):
        grow = active & (_power_at(lam, energy, floor + width) >= p_t)
        if not np.any(grow):
            break
        width[grow] *= 2
    else:
        raise NumericalError("could not bracket the Lagrange multiplier in 200 doublings")
    lo, hi = floor.copy(), floor + width
    done = ~active
    target = p_t * tol
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        # mid > floor, so every shifted eigenvalue is positive here
        pw = (energy / (lam + mid[:, None]) ** 2).sum(axis=1)
        hit = ~done & (np.abs(pw - p_t) < target)
        if hit.any():
            mu[hit] = mid[hit]
            done |= hit
            if done.all():
                break
        above = pw > p_t
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    # unconverged subcarriers fall back to the feasible end of the bracket
    mu[~done] = hi[~done]
    return mu


def mu_bisection(a_mat, rhs, p_t: float, tol: float = 1e-8) -> np.ndarray:
    """Lagrange multiplier per subcarrier for ``F(mu) = (mu I + A)^{-1} B``.

    ``a_mat`` is the Hermitian PSD quadratic term (N_c, K, K) and ``rhs`` the
    linear term (N_c, K, K). Returns ``mu >= 0`` with
    ``|‖F(mu)‖_F^2 - p_t| / p_t < tol`` when the power constraint is active,
    else 0.
    """
    lam, _, _, energy = _power_spectrum(_arr(a_mat), _arr(rhs))
    return _bisect(lam, energy, p_t, tol)


def wmmse_update(h_equ, u, w, mu) -> np.ndarray:
    """Closed-form precoder update for given ``u``, ``w``, ``mu`` (pre-projection)."""
    h = _arr(h_equ)
    vh = np.conj(np.swapaxes(h, 1, 2))
    a_mat = (vh * (w * np.abs(u) ** 2)[:, None, :]) @ h
    rhs = vh * (u * w)[:, None, :]
    lam, q, qb, _ = _power_spectrum(a_mat, rhs)
    return _apply_inverse(lam, q, qb, mu)


def _apply_inverse(lam, q, qb, mu):
    shifted = lam + mu[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(shifted > 0, 1.0 / shifted, 0.0)
    return q @ (inv[:, :, None] * qb)


def wmmse(h_equ, p_t: float, sigma_sq: float, init=None, max_iters: int = 200,
          tol: float = 1e-6, denominator: str = "full", bisection_tol: float = 1e-12):
    """Iterative WMMSE sum-rate maximization.

    Parameters
    ----------
    h_equ : EquivalentChannel or array, shape (N_c, K, K)
    p_t : float
        Per-subcarrier power budget.
    sigma_sq : float
        Per-subcarrier noise power.
    init : DigitalBeamformer, optional
        Feasible start; defaults to :func:`initial_beamformer`.
    max_iters, tol
        Stop after ``max_iters`` updates or once ``|ΔSE| < tol``.
    denominator : {"full", "printed"}
        Convention for the ``u``/``w`` denominators, see :func:`wmmse_weights`.

    Returns
    -------
    (DigitalBeamformer, WmmseState)
        The best iterate seen (by SE) and the auxiliary state of the last update.
    """
    if max_iters < 1 or not tol > 0:
        raise ConfigurationError("max_iters must be >= 1 and tol > 0")
    h = _arr(h_equ)
    f = initial_beamformer(h, p_t) if init is None else DigitalBeamformer(project_power(init, p_t))
    f = f.f_bb
    se = sum_rate(h, f, sigma_sq)
    trace = [se]
    best_se, best_f = se, f
    vh = np.conj(np.swapaxes(h, 1, 2))
    clip = denominator == "full"
    it = 0
    for it in range(1, max_iters + 1):
        u, w = wmmse_weights(h, f, sigma_sq, denominator)
        a_mat = (vh * (w * np.abs(u) ** 2)[:, None, :]) @ h
        rhs = vh * (u * w)[:, None, :]
        if not (np.all(np.isfinite(a_mat)) and np.all(np.isfinite(rhs))):
            raise NumericalError(f"non-finite WMMSE weights at iteration {it}")
        lam, q, qb, energy = _power_spectrum(a_mat, rhs, clip=clip)
        mu = _bisect(lam, energy, p_t, bisection_tol)
        f_raw = _apply_inverse(lam, q, qb, mu)
        if not np.all(np.isfinite(f_raw)):
            raise NumericalError(f"non-finite precoder at iteration {it}")
        f = project_power(f_raw, p_t)
        new_se = sum_rate(h, f, sigma_sq)
        if not math.isfinite(new_se):
            raise NumericalError(f"non-finite SE at iteration {it}")
        trace.append(new_se)
        if new_se > best_se:
            best_se, best_f = new_se, f
        converged = abs(new_se - se) < tol
        se = new_se
        if converged:
            break
    state = WmmseState(u=u, w=w, mu=mu, se_trace=trace, f_raw=f_raw, iterations=it)
    return DigitalBeamformer(best_f), state


# -- direct ascent over the parametrized family -------------------------------------

@dataclass(frozen=True)
class BacktrackRule:
    """Step control for :func:`param_ascent`.

    Steps are relative: a step ``s`` moves subcarrier ``m``'s parameter row by
    ``s * ‖x_m‖`` along the normalized gradient.
    """

    initial: float = 0.1
    shrink: float = 0.5
    grow: float = 2.0
    max_step: float = 1.0
    min_step: float = 1e-10


def _param_rates(h, x, p_t, sigma_sq):
    """Per-subcarrier rates for parameter rows ``x``; ``-inf`` where undefined."""
    k = h.shape[1]
    a = x[:, :k] + 1j * x[:, k:2 * k]
    b = x[:, 2 * k]
    c = x[:, 2 * k + 1:]
    vh = np.conj(np.swapaxes(h, 1, 2))
    mat = b[:, None, None] * np.eye(k) + (vh * c[:, None, :]) @ h
    rhs = vh * a[:, None, :]
    out = np.full(h.shape[0], -np.inf)
    cond = np.linalg.cond(mat)
    ok = np.isfinite(cond) & (cond <= ZF_COND_LIMIT)
    if not np.any(ok):
        return out
    f = np.linalg.solve(mat[ok], rhs[ok])
    norm = np.sqrt(np.sum(np.abs(f) ** 2, axis=(1, 2)))
    good = (norm > 0) & np.isfinite(norm)
    f[good] *= (np.sqrt(p_t) / norm[good])[:, None, None]
    r = rates(h[ok], f, sigma_sq)
    r[~good] = -np.inf
    out[ok] = r
    return out


def se_gradient(h_equ, params, p_t: float, sigma_sq: float, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of the SE w.r.t. the real parameter rows.

    Subcarriers are decoupled, so one column is perturbed across all
    subcarriers at once. Non-negative coordinates sitting at their bound use
    a forward difference.
    """
    h = _arr(h_equ)
    x = params.to_matrix() if isinstance(params, ParamSet) else np.asarray(params, dtype=float)
    n_c, n_p = x.shape
    k = h.shape[1]
    scale = np.max(np.abs(x), axis=1, keepdims=True)
    step = rel_step * np.maximum(np.abs(x), 1e-3 * np.where(scale > 0, scale, 1.0))
    base = None
    grad = np.empty_like(x)
    for j in range(n_p):
        e = np.zeros_like(x)
        e[:, j] = step[:, j]
        plus = _param_rates(h, x + e, p_t, sigma_sq)
        bounded = j >= 2 * k
        at_bound = (x[:, j] - step[:, j] < 0) if bounded else np.zeros(n_c, bool)
        minus = _param_rates(h, x - np.where(at_bound[:, None], 0, e), p_t, sigma_sq)
        denom = np.where(at_bound, 1.0, 2.0) * step[:, j]
        grad[:, j] = (plus - minus) / denom
    return grad / n_c


def param_ascent(h_equ, p_t: float, sigma_sq: float, init: ParamSet, max_iters: int = 100,
                 step_rule: Optional[BacktrackRule] = None, rel_step: float = 1e-6,
                 tol: float = 1e-12, gradient: Optional[Callable] = None):
    """Projected gradient ascent of the SE over ``(Re a, Im a, b, c)``.

    Each subcarrier keeps its own step length and only accepts improving
    steps, so the SE trace is non-decreasing. ``gradient`` may replace the
    finite-difference gradient; it receives ``(h_equ, x, p_t, sigma_sq)``.

    Returns
    -------
    (ParamSet, list of float)
    """
    rule = step_rule or BacktrackRule()
    h = _arr(h_equ)
    k = h.shape[1]
    x = init.to_matrix().astype(float)
    x[:, 2 * k:] = np.maximum(x[:, 2 * k:], 0.0)
    cur = _param_rates(h, x, p_t, sigma_sq)
    if not np.all(np.isfinite(cur)):
        raise NumericalError("SE is not finite at the initial parameters")
    n_c = h.shape[0]
    trace = [float(cur.sum() / n_c)]
    step = np.full(n_c, rule.initial)
    grad_fn = gradient or (lambda hh, xx, pp, ss: se_gradient(hh, xx, pp, ss, rel_step))
    for _ in range(max_iters):
        g = grad_fn(h, x, p_t, sigma_sq)
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient")
        gnorm = np.linalg.norm(g, axis=1)
        xnorm = np.linalg.norm(x, axis=1)
        direction = np.divide(g, gnorm[:, None], out=np.zeros_like(g), where=gnorm[:, None] > 0)
        pending = (gnorm > 0) & (step >= rule.min_step)
        improved = np.zeros(n_c, bool)
        while np.any(pending):
            cand = x + (step * xnorm)[:, None] * direction
            cand[:, 2 * k:] = np.maximum(cand[:, 2 * k:], 0.0)
            new = _param_rates(h, cand, p_t, sigma_sq)
            accept = pending & (new > cur)
            x[accept] = cand[accept]
            cur[accept] = new[accept]
            improved |= accept
            pending &= ~accept
            step[pending] *= rule.shrink
            pending &= step >= rule.min_step
        step[improved] = np.minimum(step[improved] * rule.grow, rule.max_step)
        new_total = float(cur.sum() / n_c)
        gain = new_total - trace[-1]
        trace.append(new_total)
        if not np.any(improved) or gain < tol:
            break
    return ParamSet.from_matrix(x), trace


# -- solver handles ------------------------------------------------------------------

def make_solver(name: str, **options) -> Callable:
    """Return ``solve(h_equ, p_t, sigma_sq) -> DigitalBeamformer`` for a method name."""
    if name == "zf":
        return lambda h, p_t, sigma_sq: zf(h, p_t)
    if name == "wmmse":
        return lambda h, p_t, sigma_sq: wmmse(h, p_t, sigma_sq, **options)[0]
    if name == "param_ascent":
        wmmse_opts = {k: options.pop(k) for k in ("denominator",) if k in options}

        def solve(h, p_t, sigma_sq):
            f_w, state = wmmse(h, p_t, sigma_sq, **wmmse_opts)
            params, _ = param_ascent(h, p_t, sigma_sq, wmmse_to_params(state), **options)
            f_p = param_beamformer(h, params, p_t)
            # the ascent starts from the last WMMSE update; keep the better of the two
            if sum_rate(h, f_w, sigma_sq) > sum_rate(h, f_p, sigma_sq):
                return f_w
            return f_p
        return solve
    raise ConfigurationError(f"unknown digital method {name!r}")
