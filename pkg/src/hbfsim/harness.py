"""Seeded Monte-Carlo experiments over beamforming schemes.

A scheme is an (analog, selection, digital) triple. For every transmit
power, target NCPE and realization the pipeline is

    paths -> true channel -> perturbed estimate -> analog -> selection
          -> digital -> SE/EE on the true channel

Beamformers are designed from the perturbed estimate and scored on the
true channel. Realization ``i`` always uses seed ``base_seed + i``, so
different schemes with the same base seed see identical channels.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import analog, digital, selection
from .channel import SystemConfig, perturb_channel, sample_paths, synthesize_channel
from .errors import ConfigurationError, HBFError
from .metrics import DYNAMIC_SUBARRAY, FULLY_CONNECTED, PowerModel, evaluate

log = logging.getLogger(__name__)

ANALOG_METHODS = ("beam_align_los", "conj_phase_match")
SELECTION_METHODS = selection.PATTERNS + (
    "random", "gain_greedy", "coordinate_ascent", "exhaustive", FULLY_CONNECTED)
DIGITAL_METHODS = ("zf", "wmmse", "param_ascent")

# independent random streams derived from one realization seed
_PERTURB_STREAM = 1
_SELECT_STREAM = 2

MODULUS_TOL = 1e-12
POWER_TOL = 1e-9


def dbm_to_watts(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def watts_to_dbm(watts: float) -> float:
    return 10 * math.log10(watts) + 30


def substream(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentSpec:
    config: SystemConfig = field(default_factory=SystemConfig)
    analog_method: str = "conj_phase_match"
    selection_method: str = "coordinate_ascent"
    digital_method: str = "wmmse"
    realizations: int = 10
    base_seed: int = 0
    pt_sweep_dbm: Tuple[float, ...] = (30.0,)
    ncpe_sweep: Tuple[float, ...] = (0.0,)
    power_model: PowerModel = field(default_factory=PowerModel)
    # solver used inside coordinate-ascent / exhaustive selection
    inner_solver: str = "zf"
    max_sweeps: int = 10
    swap_moves: bool = False
    wmmse_max_iters: int = 200
    wmmse_tol: float = 1e-6

    def __post_init__(self):
        if self.analog_method not in ANALOG_METHODS:
            raise ConfigurationError(f"unknown analog method {self.analog_method!r}")
        if self.selection_method not in SELECTION_METHODS:
            raise ConfigurationError(f"unknown selection method {self.selection_method!r}")
        if self.digital_method not in DIGITAL_METHODS:
            raise ConfigurationError(f"unknown digital method {self.digital_method!r}")
        if self.inner_solver not in DIGITAL_METHODS:
            raise ConfigurationError(f"unknown inner solver {self.inner_solver!r}")
        if self.realizations < 1:
            raise ConfigurationError("realizations must be >= 1")
        if not self.pt_sweep_dbm or not self.ncpe_sweep:
            raise ConfigurationError("power and NCPE sweeps must be non-empty")
        if any(v < 0 for v in self.ncpe_sweep):
            raise ConfigurationError("NCPE targets must be non-negative")
        object.__setattr__(self, "pt_sweep_dbm", tuple(float(v) for v in self.pt_sweep_dbm))
        object.__setattr__(self, "ncpe_sweep", tuple(float(v) for v in self.ncpe_sweep))

    @property
    def label(self) -> str:
        return f"{self.selection_method}/{self.analog_method}/{self.digital_method}"

    @property
    def architecture(self) -> str:
        return FULLY_CONNECTED if self.selection_method == FULLY_CONNECTED else DYNAMIC_SUBARRAY

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def solver(self, name: Optional[str] = None):
        name = name or self.digital_method
        if name == "zf":
            return digital.make_solver("zf")
        return digital.make_solver(name, max_iters=self.wmmse_max_iters, tol=self.wmmse_tol) \
            if name == "wmmse" else digital.make_solver(name)


@dataclass
class ResultRow:
    scheme: str
    k: int
    n_t: int
    n_c: int
    pt_dbm: float
    ncpe_target: float
    seed: int
    realization: int
    se: float
    ee: float
    wall_time_ms: Optional[float] = None
    error: str = ""


CSV_COLUMNS = [f.name for f in dataclasses.fields(ResultRow)]


def parse_scheme(text: str) -> Dict[str, str]:
    """``selection[/analog[/digital]]`` -> ExperimentSpec keyword arguments."""
    parts = [p.strip() for p in text.split("/")]
    if not 1 <= len(parts) <= 3 or not parts[0]:
        raise ConfigurationError(f"bad scheme {text!r}; expected selection[/analog[/digital]]")
    out = {"selection_method": parts[0]}
    if len(parts) > 1 and parts[1]:
        out["analog_method"] = parts[1]
    if len(parts) > 2 and parts[2]:
        out["digital_method"] = parts[2]
    return out


def design(spec: ExperimentSpec, config: SystemConfig, h_est, paths, seed: int):
    """Analog matrix, selection (None for fully connected) and digital beamformer."""
    if spec.analog_method == "beam_align_los":
        f_tilde = analog.beam_align_los(paths, config)
    else:
        f_tilde = analog.conj_phase_match(h_est)

    method = spec.selection_method
    inner = spec.solver(spec.inner_solver)
    if method == FULLY_CONNECTED:
        x = None
    elif method in selection.PATTERNS:
        x = selection.fixed_pattern(method, config)
    elif method == "random":
        x = selection.random_selection(config, substream(seed, _SELECT_STREAM))
    elif method == "gain_greedy":
        x = selection.gain_greedy_select(h_est, config)
    elif method == "coordinate_ascent":
        init = coordinate_ascent_init(h_est, f_tilde, inner, config)
        x, _ = selection.coordinate_ascent_select(h_est, f_tilde, init, inner, spec.max_sweeps,
                                                  config, swap_moves=spec.swap_moves)
    else:
        x, _ = selection.exhaustive_select(h_est, f_tilde, inner, config)

    f_rf = f_tilde.f_tilde if x is None else selection.compose(f_tilde, x)
    h_equ = digital.equivalent_channel(h_est, f_rf)
    f_bb = spec.solver()(h_equ, config.p_t, config.sigma_m_sq)
    return f_tilde, x, f_rf, f_bb


def coordinate_ascent_init(h, f_tilde, solver, config) -> selection.SelectionMatrix:
    """Best of the greedy assignment and every applicable fixed pattern."""
    starts = [selection.gain_greedy_select(h, config)]
    for kind in selection.PATTERNS:
        try:
            starts.append(selection.fixed_pattern(kind, config))
        except ConfigurationError:
            pass
    scores = [selection.selection_se(h, f_tilde, x, solver, config) for x in starts]
    return starts[int(np.argmax(scores))]


def audit(f_tilde, x, f_bb, p_t: float) -> None:
    """Re-check every hardware and power constraint; raise on violation."""
    if f_tilde.modulus_error() > MODULUS_TOL:
        raise ConfigurationError(f"analog modulus violated by {f_tilde.modulus_error():.3g}")
    if x is not None and not np.all(np.count_nonzero(np.asarray(x), axis=1) == 1):
        raise ConfigurationError("selection row-L0 constraint violated")
    rel = np.max(np.abs(digital.DigitalBeamformer(f_bb).power() - p_t)) / p_t
    if rel > POWER_TOL:
        raise ConfigurationError(f"digital power constraint violated by {rel:.3g}")


def _realization(spec: ExperimentSpec, index: int, timing: bool) -> List[ResultRow]:
    cfg = spec.config
    seed = spec.base_seed + index
    paths = sample_paths(cfg, seed)
    h_true = synthesize_channel(paths, cfg)
    pm = spec.power_model.with_architecture(spec.architecture)
    rows = []
    for pt_dbm in spec.pt_sweep_dbm:
        cfg_pt = cfg.replace(p_t=dbm_to_watts(pt_dbm))
        for ncpe in spec.ncpe_sweep:
            row = ResultRow(spec.label, cfg.k_users, cfg.n_t, cfg.n_c, pt_dbm, ncpe, seed, index,
                            math.nan, math.nan)
            start = time.perf_counter()
            try:
                h_est = perturb_channel(h_true, ncpe, substream(seed, _PERTURB_STREAM))
                f_tilde, x, f_rf, f_bb = design(spec, cfg_pt, h_est, paths, seed)
                audit(f_tilde, x, f_bb, cfg_pt.p_t)
                ev = evaluate(h_true, f_rf, f_bb, cfg_pt, pm)
                row.se, row.ee = ev.se, ev.ee
            except HBFError as exc:
                row.error = f"{type(exc).__name__}: {exc}"
                log.warning("row failed (%s, seed %d, pt %s, ncpe %s): %s",
                            spec.label, seed, pt_dbm, ncpe, row.error)
            if timing:
                row.wall_time_ms = (time.perf_counter() - start) * 1e3
            rows.append(row)
    return rows


def run(spec: ExperimentSpec, workers: int = 1, timing: bool = False) -> List[ResultRow]:
    """All rows of one spec in (pt, ncpe, realization) order."""
    indices = range(spec.realizations)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_real = list(pool.map(lambda i: _realization(spec, i, timing), indices))
    else:
        per_real = [_realization(spec, i, timing) for i in indices]
    n_nc = len(spec.ncpe_sweep)
    rows = []
    for p in range(len(spec.pt_sweep_dbm)):
        for q in range(n_nc):
            rows.extend(r[p * n_nc + q] for r in per_real)
    failed = [r for r in rows if r.error]
    if failed:
        log.warning("%d of %d rows failed for %s", len(failed), len(rows), spec.label)
    return rows


def compare(specs: Sequence[ExperimentSpec], workers: int = 1, timing: bool = False):
    """Run several schemes on paired channels.

    Returns ``(rows, summary)`` where ``summary`` maps
    ``(scheme, pt_dbm, ncpe)`` to mean/std/count of SE and EE.
    """
    if not specs:
        raise ConfigurationError("compare needs at least one spec")
    ref = specs[0]
    for s in specs[1:]:
        if s.config.dims() != ref.config.dims():
            raise ConfigurationError(
                f"scheme {s.label} has dims {s.config.dims()}, expected {ref.config.dims()}")
        if (s.base_seed, s.realizations) != (ref.base_seed, ref.realizations):
            raise ConfigurationError("paired comparison needs a common seed and realization count")
    rows = []
    for s in specs:
        rows.extend(run(s, workers=workers, timing=timing))
    return rows, summarize(rows)


def summarize(rows: Iterable[ResultRow]) -> Dict[Tuple[str, float, float], Dict[str, float]]:
    groups: Dict[Tuple[str, float, float], List[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.scheme, r.pt_dbm, r.ncpe_target), []).append(r)
    out = {}
    for key, rs in groups.items():
        ok = [r for r in rs if not r.error]
        se = np.array([r.se for r in ok])
        ee = np.array([r.ee for r in ok])
        out[key] = {
            "count": len(ok),
            "failed": len(rs) - len(ok),
            "se_mean": float(se.mean()) if ok else math.nan,
            "se_std": float(se.std(ddof=1)) if len(ok) > 1 else 0.0,
            "ee_mean": float(ee.mean()) if ok else math.nan,
            "ee_std": float(ee.std(ddof=1)) if len(ok) > 1 else 0.0,
        }
    return out


def paired_difference(rows: Sequence[ResultRow], scheme_a: str, scheme_b: str,
                      metric: str = "se", pt_dbm=None, ncpe=None) -> Tuple[float, float, int]:
    """Mean and standard error of ``metric(a) - metric(b)`` over shared realizations."""
    def pick(scheme):
        return {(r.pt_dbm, r.ncpe_target, r.realization): getattr(r, metric) for r in rows
                if r.scheme == scheme and not r.error
                and (pt_dbm is None or r.pt_dbm == pt_dbm)
                and (ncpe is None or r.ncpe_target == ncpe)}
    a, b = pick(scheme_a), pick(scheme_b)
    keys = sorted(set(a) & set(b))
    if not keys:
        raise ConfigurationError(f"no paired rows for {scheme_a} vs {scheme_b}")
    d = np.array([a[k] - b[k] for k in keys])
    se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    return float(d.mean()), se, d.size


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".17g")
    return str(value)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def rows_from_csv(text: str) -> List[ResultRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(ResultRow(
            scheme=rec["scheme"], k=int(rec["k"]), n_t=int(rec["n_t"]), n_c=int(rec["n_c"]),
            pt_dbm=float(rec["pt_dbm"]), ncpe_target=float(rec["ncpe_target"]),
            seed=int(rec["seed"]), realization=int(rec["realization"]),
            se=float(rec["se"]), ee=float(rec["ee"]),
            wall_time_ms=float(rec["wall_time_ms"]) if rec["wall_time_ms"] else None,
            error=rec["error"]))
    return rows


def summary_to_text(summary) -> str:
    lines = ["scheme,pt_dbm,ncpe,count,failed,se_mean,se_std,ee_mean,ee_std"]
    for (scheme, pt, nc), s in sorted(summary.items()):
        lines.append(",".join([scheme, _fmt(pt), _fmt(nc), str(s["count"]), str(s["failed"])]
                              + [_fmt(s[k]) for k in ("se_mean", "se_std", "ee_mean", "ee_std")]))
    return "\n".join(lines) + "\n"
