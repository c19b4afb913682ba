"""Plot data for the queue experiments, written as CSV plus a JSON manifest.

Every CSV starts with ``#`` comment lines recording the parameters and the
toolkit version.  Output depends only on the configuration (no timestamps,
fixed float formatting), so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, _read_spec, load_input, worker_count
from .errors import ValidationError
from .oracle import build_joint, exact_marginal, exact_psd
from .queue import QueueModel, build_queue_model, mean_queue, queue_marginal
from .secondorder import NegativeMassWarning, SecondOrderContext, steady_state_mean_approx
from .simulate import coupling_rate
from .spectral import cross_psd_gamma, observable_cross_psd
from .timing import approx_channel_series, exact_channel_series, mi_lower_bound

FIGURES = ("mean-queue", "pi-q", "cross-psd", "mi-bound", "coupling")
EPS2_GRID = (0.01, 0.05, 0.1, 0.2, 0.5, 1.0)
POOR_FIT = 0.01


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest string that round-trips
    return str(v)


def write_table(path: Path, header: dict, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {_fmt(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _queue(cfg: RunConfig) -> QueueModel:
    spec = _read_spec(cfg.model)
    if spec.get("builtin") != "queue":
        raise ValidationError("figures are defined for the builtin queue model only")
    return build_queue_model(float(spec.get("rho", 0.9)), int(spec.get("q_bar", 18)))


def _eps_list(cfg: RunConfig, default) -> list:
    if cfg.epsilon_grid:
        return list(cfg.epsilon_grid)
    if cfg.epsilon is not None:
        return [cfg.epsilon]
    return list(default)


def _gammas(cfg: RunConfig, default) -> list:
    return [cfg.gamma] if cfg.gamma is not None else list(default)


def _pmap(fn, items):
    with ThreadPoolExecutor(max_workers=worker_count()) as ex:
        return list(ex.map(fn, items))


def _header(cfg: RunConfig, figure: str, **extra) -> dict:
    h = {"figure": figure, "version": __version__}
    h.update(cfg.describe())
    h.update(extra)
    return h


def _context(q: QueueModel, cfg: RunConfig, gamma: float, eps: float) -> SecondOrderContext:
    return SecondOrderContext.build(q.family, load_input(cfg.input, eps, gamma))


def _approx_pi(ctx: SecondOrderContext) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeMassWarning)
        return steady_state_mean_approx(ctx)


def fig_mean_queue(cfg: RunConfig, out: Path) -> list:
    q = _queue(cfg)
    g = _gammas(cfg, [0.4])[0]
    eps = _eps_list(cfg, [math.sqrt(e) for e in EPS2_GRID])

    def work(e):
        ctx = _context(q, cfg, g, e)
        exact = mean_queue(exact_marginal(build_joint(q.family, ctx.input)), q.q_bar)
        approx = mean_queue(_approx_pi(ctx), q.q_bar)
        return (e * e, e, exact, approx, abs(approx - exact) / exact)

    rows = _pmap(work, eps)
    path = out / f"mean-queue_gamma{g:g}.csv"
    write_table(path, _header(cfg, "mean-queue", gamma=g),
                ["eps2", "eps", "exact", "approx", "rel_error"], rows)
    return [path]


def fig_pi_q(cfg: RunConfig, out: Path) -> list:
    q = _queue(cfg)
    items = [(g, e) for g in _gammas(cfg, [0.2, 0.4, 0.8]) for e in _eps_list(cfg, [0.5, 1.0])]

    def work(item):
        g, e = item
        ctx = _context(q, cfg, g, e)
        exact = queue_marginal(exact_marginal(build_joint(q.family, ctx.input)), q.q_bar)
        approx = queue_marginal(_approx_pi(ctx), q.q_bar)
        err = np.abs(approx - exact)
        path = out / f"pi-q_gamma{g:g}_eps{e:g}.csv"
        write_table(path, _header(cfg, "pi-q", gamma=g, epsilon=e,
                                  max_abs_error=float(err.max()),
                                  poor_fit=bool(err.max() > POOR_FIT)),
                    ["n", "exact", "approx", "abs_error"],
                    zip(range(q.q_bar + 1), exact, approx, err))
        return path

    return _pmap(work, items)


def fig_cross_psd(cfg: RunConfig, out: Path) -> list:
    q = _queue(cfg)
    g = _gammas(cfg, [0.4])[0]
    f = q.departure

    def work(e):
        ctx = _context(q, cfg, g, e)
        jc = build_joint(q.family, ctx.input)
        ex = exact_psd(jc, jc.lift(f), jc.zeta, cfg.grid)
        ap = observable_cross_psd(cross_psd_gamma(ctx, None, M=cfg.grid)["S_Gz"], f)
        peak = np.max(np.abs(ex.values))
        rel = float(np.max(np.abs(ap.values - ex.values)) / peak) if peak > 0 else 0.0
        path = out / f"cross-psd_gamma{g:g}_eps{e:g}.csv"
        write_table(path, _header(cfg, "cross-psd", gamma=g, epsilon=e, max_rel_error=rel,
                                  convention="S(theta) = sum_t Cov(S_t, zeta_0) exp(-j theta t)"),
                    ["theta", "exact_re", "exact_im", "approx_re", "approx_im"],
                    zip(ex.thetas, ex.values.real, ex.values.imag,
                        ap.values.real, ap.values.imag))
        return path

    return _pmap(work, _eps_list(cfg, [0.3, 0.7, 1.0]))


def fig_mi_bound(cfg: RunConfig, out: Path) -> list:
    q = _queue(cfg)
    f = q.departure
    eps = _eps_list(cfg, [math.sqrt(e) for e in EPS2_GRID])
    lo, hi = cfg.lags
    paths = []
    for g in _gammas(cfg, [0.2, 0.4, 0.8]):
        def work(e, g=g):
            ctx = _context(q, cfg, g, e)
            a = approx_channel_series(ctx, f, max(abs(lo), abs(hi)))
            ba = mi_lower_bound(a.Sigma_S_zeta, a.Sigma_S, a.Sigma_zeta, (lo, hi))
            ec = exact_channel_series(build_joint(q.family, ctx.input), f, a.Sigma_S.lag_max)
            be = mi_lower_bound(ec.Sigma_S_zeta, ec.Sigma_S, ec.Sigma_zeta, (lo, hi))
            rel = abs(ba.value - be.value) / be.value if be.value > 0 else 0.0
            return (e * e, e, ba.value, ba.argmax_n, be.value, be.argmax_n, rel)

        rows = _pmap(work, eps)
        path = out / f"mi-bound_gamma{g:g}.csv"
        write_table(path, _header(cfg, "mi-bound", gamma=g),
                    ["eps2", "eps", "approx_bound", "approx_argmax", "exact_bound",
                     "exact_argmax", "rel_diff"], rows)
        paths.append(path)
    return paths


def fig_coupling(cfg: RunConfig, out: Path) -> list:
    q = _queue(cfg)
    g = _gammas(cfg, [0.4])[0]
    eps = _eps_list(cfg, [0.05, 0.1, 0.2])
    inp = load_input(cfg.input, 0.0, g)
    table = coupling_rate(q.family, inp, eps, cfg.steps, cfg.seed)
    path = out / f"coupling_gamma{g:g}.csv"
    write_table(path, _header(cfg, "coupling", gamma=g, steps=cfg.steps,
                              loglog_slope=table.slope),
                ["eps", "mismatch_rate", "binomial_se"],
                [(r.epsilon, r.rate, r.se) for r in table.rows])
    return [path]


_DISPATCH = {
    "mean-queue": fig_mean_queue,
    "pi-q": fig_pi_q,
    "cross-psd": fig_cross_psd,
    "mi-bound": fig_mi_bound,
    "coupling": fig_coupling,
}


def run_figure(cfg: RunConfig, figure: str) -> list:
    """Write the CSVs for `figure` into ``cfg.out`` plus a manifest; return the paths."""
    if figure not in _DISPATCH:
        raise ValidationError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _DISPATCH[figure](cfg, out)
    manifest = {
        "figure": figure,
        "version": __version__,
        "params": cfg.describe(),
        "files": [{"name": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
                  for p in paths],
    }
    mpath = out / f"manifest-{figure}.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths + [mpath]
