"""Antenna-to-RF-chain assignment under the dynamic-subarray constraint.

Every antenna feeds exactly one RF chain, so a selection is a binary
``N_t x K`` matrix with a single one per row, equivalently a length-``N_t``
vector of RF-chain indices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from .channel import SystemConfig
from .digital import sum_rate
from .errors import ConfigurationError, RankError, SizeGuardError, SolverFailure

PATTERNS = ("vertical", "horizontal", "squared", "interlaced")
EXHAUSTIVE_LIMIT = 10 ** 6


@dataclass(frozen=True, eq=False)
class SelectionMatrix:
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.ndim != 2:
            raise ConfigurationError(f"selection matrix must be 2-D, got shape {x.shape}")
        if not np.all((x == 0) | (x == 1)):
            raise ConfigurationError("selection matrix entries must be 0 or 1")
        if not np.all(x.sum(axis=1) == 1):
            raise ConfigurationError("every antenna must connect to exactly one RF chain")
        object.__setattr__(self, "x", x.astype(np.int8))

    def __array__(self, dtype=None, copy=None):
        return self.x if dtype is None else self.x.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, SelectionMatrix) and np.array_equal(self.x, other.x)

    @classmethod
    def from_assignment(cls, assignment, k: int) -> "SelectionMatrix":
        a = np.asarray(assignment, dtype=int)
        if a.ndim != 1 or np.any(a < 0) or np.any(a >= k):
            raise ConfigurationError(f"assignment entries must lie in [0, {k})")
        x = np.zeros((a.size, k), dtype=np.int8)
        x[np.arange(a.size), a] = 1
        return cls(x)

    @property
    def assignment(self) -> np.ndarray:
        return np.argmax(self.x, axis=1)

    def counts(self) -> np.ndarray:
        return self.x.sum(axis=0)

    def to_line(self) -> str:
        return " ".join(str(int(v)) for v in self.assignment)

    @classmethod
    def from_line(cls, line: str, k: int) -> "SelectionMatrix":
        return cls.from_assignment([int(t) for t in line.split()], k)


def compose(f_tilde, x) -> np.ndarray:
    """``F_RF = F~_RF ⊙ X_sel``."""
    f = np.asarray(f_tilde)
    x = np.asarray(x)
    if f.shape != x.shape:
        raise ConfigurationError(f"analog matrix {f.shape} and selection {x.shape} differ in shape")
    return f * x


def squared_split(config: SystemConfig) -> Tuple[int, int]:
    """Vertical/horizontal RF-chain grid ``(K_v, K_h)`` for the squared pattern.

    ``K_v`` divides ``K`` and ``N_t^v`` with ``K/K_v`` dividing ``N_t^h``;
    the one nearest ``sqrt(K)`` wins, the smaller on ties.
    """
    k = config.k_users
    options = [kv for kv in range(1, k + 1)
               if k % kv == 0 and config.n_tv % kv == 0 and config.n_th % (k // kv) == 0]
    if not options:
        raise ConfigurationError(
            f"no K_v x K_h grid of K={k} tiles a {config.n_tv}x{config.n_th} array")
    kv = min(options, key=lambda v: (abs(v - math.sqrt(k)), v))
    return kv, k // kv


def fixed_pattern(kind: str, config: SystemConfig) -> SelectionMatrix:
    k = config.k_users
    m1, m2 = np.divmod(np.arange(config.n_t), config.n_th)
    if kind == "vertical":
        if config.n_tv % k:
            raise ConfigurationError(f"vertical pattern needs K | N_t^v (K={k}, N_t^v={config.n_tv})")
        assign = m1 // (config.n_tv // k)
    elif kind == "horizontal":
        if config.n_th % k:
            raise ConfigurationError(f"horizontal pattern needs K | N_t^h (K={k}, N_t^h={config.n_th})")
        assign = m2 // (config.n_th // k)
    elif kind == "squared":
        kv, kh = squared_split(config)
        assign = (m1 // (config.n_tv // kv)) * kh + m2 // (config.n_th // kh)
    elif kind == "interlaced":
        if config.n_t % k:
            raise ConfigurationError(f"interlaced pattern needs K | N_t (K={k}, N_t={config.n_t})")
        assign = np.arange(config.n_t) % k
    else:
        raise ConfigurationError(f"unknown fixed pattern {kind!r}")
    return SelectionMatrix.from_assignment(assign, k)


def random_selection(config: SystemConfig, rng_seed) -> SelectionMatrix:
    rng = np.random.default_rng(rng_seed)
    return SelectionMatrix.from_assignment(rng.integers(0, config.k_users, config.n_t),
                                           config.k_users)


def gain_greedy_select(h, config: SystemConfig) -> SelectionMatrix:
    """Give each antenna to the user with the largest channel energy on it."""
    energy = np.sum(np.abs(np.asarray(h)) ** 2, axis=0)  # (K, N_t)
    return SelectionMatrix.from_assignment(np.argmax(energy, axis=0), config.k_users)


class _Scorer:
    """SE of a candidate assignment for a fixed analog matrix and inner solver."""

    def __init__(self, h, f_tilde, solver, config):
        self.h = np.asarray(h)
        self.f = np.asarray(f_tilde)
        self.solver = solver
        self.p_t = config.p_t
        self.sigma_sq = config.sigma_m_sq
        self.k = self.f.shape[1]

    def h_equ(self, assignment) -> np.ndarray:
        f_rf = np.zeros_like(self.f)
        idx = np.arange(self.f.shape[0])
        f_rf[idx, assignment] = self.f[idx, assignment]
        return self.h @ f_rf

    def score(self, h_equ, antenna=None, candidate=None) -> float:
        try:
            f_bb = self.solver(h_equ, self.p_t, self.sigma_sq)
        except RankError:
            # no full-rank equivalent channel for this candidate
            return -math.inf
        except Exception as exc:
            raise SolverFailure(f"inner solver failed for antenna {antenna}, "
                                f"candidate chain {candidate}: {exc}",
                                antenna=antenna, candidate=candidate) from exc
        return sum_rate(h_equ, np.asarray(f_bb), self.sigma_sq)


def coordinate_ascent_select(h, f_tilde, init: SelectionMatrix, digital_solver: Callable,
                             max_sweeps: int, config: SystemConfig, swap_moves: bool = False
                             ) -> Tuple[SelectionMatrix, List[float]]:
    """Single-antenna reassignment sweeps until no move improves the SE.

    Returns the final selection and the SE after initialization and after
    each sweep. Candidates whose equivalent channel the inner solver reports
    as rank-deficient score ``-inf``.

    With ``swap_moves`` each sweep additionally tries exchanging the chains
    of every antenna pair, which lets the search move between balanced
    splits without passing through a worse unbalanced one. This costs
    O(N_t^2) extra solves per sweep.
    """
    if max_sweeps < 1:
        raise ConfigurationError("max_sweeps must be >= 1")
    scorer = _Scorer(h, f_tilde, digital_solver, config)
    f = scorer.f
    assign = init.assignment.copy()
    current = scorer.score(scorer.h_equ(assign))
    trace = [current]
    for _ in range(max_sweeps):
        changed = False
        for n in range(f.shape[0]):
            old = assign[n]
            best_j, best_se = old, current
            for j in range(scorer.k):
                if j == old:
                    continue
                assign[n] = j
                se = scorer.score(scorer.h_equ(assign), antenna=n, candidate=j)
                if se > best_se:
                    best_j, best_se = j, se
            assign[n] = best_j
            if best_j != old:
                current = best_se
                changed = True
        if swap_moves:
            for n1, n2 in itertools.combinations(range(f.shape[0]), 2):
                if assign[n1] == assign[n2]:
                    continue
                assign[n1], assign[n2] = assign[n2], assign[n1]
                se = scorer.score(scorer.h_equ(assign), antenna=(n1, n2), candidate="swap")
                if se > current:
                    current = se
                    changed = True
                else:
                    assign[n1], assign[n2] = assign[n2], assign[n1]
        trace.append(current)
        if not changed:
            break
    return SelectionMatrix.from_assignment(assign, scorer.k), trace


def exhaustive_select(h, f_tilde, digital_solver: Callable, config: SystemConfig
                      ) -> Tuple[SelectionMatrix, float]:
    f = np.asarray(f_tilde)
    n_t, k = f.shape
    size = k ** n_t
    if size > EXHAUSTIVE_LIMIT:
        raise SizeGuardError(f"exhaustive search over K^N_t = {size} assignments refused "
                             f"(limit {EXHAUSTIVE_LIMIT})", size)
    scorer = _Scorer(h, f, digital_solver, config)
    best, best_se = None, -math.inf
    for assign in itertools.product(range(k), repeat=n_t):
        se = scorer.score(scorer.h_equ(np.array(assign)), candidate=assign)
        if best is None or se > best_se:
            best, best_se = assign, se
    return SelectionMatrix.from_assignment(best, k), best_se


def selection_se(h, f_tilde, x, digital_solver: Callable, config: SystemConfig) -> float:
    """SE reached by ``digital_solver`` for one selection (``-inf`` if rank-deficient)."""
    scorer = _Scorer(h, f_tilde, digital_solver, config)
    return scorer.score(scorer.h_equ(SelectionMatrix(np.asarray(x)).assignment))
