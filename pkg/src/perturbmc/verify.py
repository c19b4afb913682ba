"""Verification suites and the metrics behind them.

The metric functions return raw numbers; the suites compare them with fixed
thresholds and produce one :class:`Check` per property.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .controlled import ControlledFamily, InputSpec, geometric_representation, three_state_input
from .markov import check_ergodic, fundamental_matrix, stationary_distribution, validate_stochastic
from .oracle import (
    build_joint,
    exact_cross_corr_gamma_zeta,
    exact_delta_covariance,
    exact_marginal,
    exact_psd,
    exact_r_d,
    exact_r_d_zeta,
)
from .queue import build_queue_model, mean_queue, queue_marginal
from .secondorder import (
    NegativeMassWarning,
    SecondOrderContext,
    cross_corr_gamma_zeta,
    cross_corr_gamma_zeta_series,
    delta_covariance,
    r_d_series,
    r_d_zeta_series,
    r_delta2_zeta_series,
    steady_state_mean_approx,
    xi_vector,
)
from .simulate import (
    coupling_rate,
    empirical_corr,
    empirical_mean,
    extract_delta,
    simulate_coupled,
)
from .spectral import cross_psd_gamma, observable_cross_psd, psd_D_approx, psd_gamma

SUITES = ("unit", "oracle", "mc")
RESIDUAL_KEYS = ("pi", "R_Gz(0)", "Sigma_Delta") + tuple(f"R_D({t})" for t in range(4)) \
    + tuple(f"R_Dz({t})" for t in range(4))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def random_irreducible_chain(rng: np.random.Generator, d: int) -> np.ndarray:
    """Dense random chain (all entries positive, hence irreducible and aperiodic)."""
    M = rng.random((d, d)) + 0.01
    return M / M.sum(axis=1, keepdims=True)


def fundamental_identity_error(P) -> float:
    P = validate_stochastic(P).entries
    pi = stationary_distribution(P)
    U = fundamental_matrix(P, pi)
    Z = np.eye(P.shape[0]) - P + np.outer(np.ones(P.shape[0]), pi)
    return float(np.max(np.abs(U @ Z - np.eye(P.shape[0]))))


def _approx_pi(ctx):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeMassWarning)
        return steady_state_mean_approx(ctx)


def epsilon_zero_errors(family: ControlledFamily, input: InputSpec, lags: int = 5) -> dict:
    """Deviations from the exact ``epsilon = 0`` values."""
    ctx = SecondOrderContext.build(family, input.with_epsilon(0.0))
    P0, Pi0 = ctx.P0, ctx.Pi0
    sdb = Pi0 - P0.T @ Pi0 @ P0
    cross = [
        cross_corr_gamma_zeta_series(ctx, -lags, lags).values,
        r_d_zeta_series(ctx, -lags, lags).values,
        r_delta2_zeta_series(ctx, lags).values,
    ]
    rd = r_d_series(ctx, lags)
    rd_off = np.concatenate([rd.values[:lags], rd.values[lags + 1:]])
    return {
        "pi_hat - pi0": float(np.max(np.abs(_approx_pi(ctx) - ctx.pi0))),
        "Sigma_Delta - Sigma_bullet": float(np.max(np.abs(delta_covariance(ctx) - sdb))),
        "R_D(0) - Sigma_bullet": float(np.max(np.abs(rd[0] - sdb))),
        "R_D(t != 0)": float(np.max(np.abs(rd_off))),
        "zeta cross series": float(max(np.max(np.abs(c)) for c in cross)),
    }


def residuals(ctx: SecondOrderContext, jc) -> dict:
    """Max-abs residual of each approximation against the exact chain."""
    out = {
        "pi": np.abs(_approx_pi(ctx) - exact_marginal(jc)).max(),
        "R_Gz(0)": np.abs(cross_corr_gamma_zeta(ctx, 0)
                          - exact_cross_corr_gamma_zeta(jc, 0, 0)[0]).max(),
        "Sigma_Delta": np.abs(delta_covariance(ctx) - exact_delta_covariance(jc)).max(),
    }
    rd, rde = r_d_series(ctx, 3), exact_r_d(jc, 3)
    rz, rze = r_d_zeta_series(ctx, 0, 3), exact_r_d_zeta(jc, 0, 3)
    for t in range(4):
        out[f"R_D({t})"] = np.abs(rd[t] - rde[t]).max()
        out[f"R_Dz({t})"] = np.abs(rz[t] - rze[t]).max()
    return {k: float(v) for k, v in out.items()}


def residual_ratios(family: ControlledFamily, input: InputSpec, eps=(0.2, 0.1)) -> dict:
    """``residual(eps[1]) / residual(eps[0])`` for every approximated quantity."""
    base = SecondOrderContext.build(family, input)
    res = []
    for e in eps:
        ctx = base.with_epsilon(e)
        res.append(residuals(ctx, build_joint(family, ctx.input)))
    return {k: res[1][k] / res[0][k] for k in res[0]}


def spectral_residual(family, input, M: int = 256) -> float:
    """``max_theta |S_Gamma approx - exact|``."""
    ctx = SecondOrderContext.build(family, input)
    jc = build_joint(family, input)
    approx = psd_gamma(ctx, psd_D_approx(ctx, M)).values
    exact = exact_psd(jc, jc.M, jc.M, M).values
    return float(np.max(np.abs(approx - exact)))


def mean_queue_error(gamma: float, eps: float, rho: float = 0.9, q_bar: int = 18) -> dict:
    q = build_queue_model(rho, q_bar)
    ctx = SecondOrderContext.build(q.family, three_state_input(gamma, eps))
    exact = mean_queue(exact_marginal(build_joint(q.family, ctx.input)), q_bar)
    approx = mean_queue(_approx_pi(ctx), q_bar)
    return {"exact": exact, "approx": approx, "rel_error": abs(approx - exact) / exact}


def pi_q_error(gamma: float, eps: float, rho: float = 0.9, q_bar: int = 18) -> float:
    q = build_queue_model(rho, q_bar)
    ctx = SecondOrderContext.build(q.family, three_state_input(gamma, eps))
    exact = queue_marginal(exact_marginal(build_joint(q.family, ctx.input)), q_bar)
    return float(np.max(np.abs(queue_marginal(_approx_pi(ctx), q_bar) - exact)))


def cross_psd_rel_error(gamma: float, eps: float, M: int = 1024, rho: float = 0.9,
                        q_bar: int = 18) -> float:
    q = build_queue_model(rho, q_bar)
    ctx = SecondOrderContext.build(q.family, three_state_input(gamma, eps))
    jc = build_joint(q.family, ctx.input)
    f = q.departure
    ex = exact_psd(jc, jc.lift(f), jc.zeta, M).values
    ap = observable_cross_psd(cross_psd_gamma(ctx, None, M=M)["S_Gz"], f).values
    return float(np.max(np.abs(ap - ex)) / np.max(np.abs(ex)))


@dataclass(frozen=True)
class ZTest:
    """Entrywise ``|estimate - target| <= k se`` summary."""

    name: str
    max_z: float
    exceed: int
    count: int

    def passed(self) -> bool:
        return self.exceed == 0


def ztest(name: str, est, se, target=0.0, k: float = 3.0) -> ZTest:
    est = np.asarray(est, dtype=float)
    se = np.asarray(se, dtype=float)
    diff = np.abs(est - target)
    # entries that are identically zero in every batch have se = 0 and diff = 0
    bad = diff > k * se
    live = se > 0
    z = np.where(live, diff / np.where(live, se, 1.0), np.where(diff > 0, np.inf, 0.0))
    return ZTest(name, float(z.max()), int(bad.sum()), int(live.sum()))


def martingale_tests(family: ControlledFamily, input: InputSpec, T: int, seed: int) -> list:
    """Martingale-difference properties of ``Delta`` on one coupled path."""
    path = simulate_coupled(family, input, T, seed)
    D = extract_delta(path, family, input)
    z = path.zeta[1:]
    out = []
    m, s = empirical_mean(D)
    out.append(ztest("mean Delta", m, s))
    rz = empirical_corr(D, z, range(-3, 4))
    for k in range(-3, 4):
        out.append(ztest(f"R_Delta,zeta({k})", *rz[k]))
    rd = empirical_corr(D, D, range(0, 4))
    for t in (1, 2, 3):
        out.append(ztest(f"R_Delta({t})", *rd[t]))
    exact = exact_delta_covariance(build_joint(family, input))
    out.append(ztest("Sigma_Delta vs oracle", rd[0][0], rd[0][1], exact))
    return out


def suite_unit() -> list:
    checks = []
    q = build_queue_model()
    rng = np.random.default_rng(20240501)
    errs = [fundamental_identity_error(q.family.P0.entries)]
    errs += [fundamental_identity_error(random_irreducible_chain(rng, d)) for d in (3, 5, 8, 13, 21)]
    checks.append(Check("fundamental matrix identity", max(errs) < 1e-9, f"max err {max(errs):.2e}"))
    rep = check_ergodic(q.family.P0.entries)
    checks.append(Check("queue chain unichain and aperiodic", rep.ergodic,
                        f"irreducible={rep.irreducible} unichain={rep.unichain} "
                        f"aperiodic={rep.aperiodic}"))
    E1 = float(np.max(np.abs(q.family.E.sum(axis=1))))
    checks.append(Check("E 1 = 0", E1 < 1e-10, f"{E1:.1e}"))
    inp = three_state_input(0.4, 0.3)
    geo = geometric_representation(inp)
    err = float(np.max(np.abs(geo.autocov(np.arange(51)) - inp.autocov_series(50))))
    checks.append(Check("geometric covariance reconstruction", err < 1e-9, f"{err:.1e}"))
    ctx = SecondOrderContext.build(q.family, inp)
    xi = xi_vector(ctx)
    checks.append(Check("xi 1 = 0", abs(xi.sum()) < 1e-9, f"{xi.sum():.1e}"))
    S = psd_D_approx(ctx, 256)
    checks.append(Check("S_D Hermitian", S.is_hermitian(), ""))
    return checks


def suite_oracle() -> list:
    checks = []
    q = build_queue_model()
    inp = three_state_input(0.4, 0.2)
    z = epsilon_zero_errors(q.family, inp)
    checks.append(Check("epsilon = 0 degeneracies", max(z.values()) < 1e-12,
                        ", ".join(f"{k} {v:.1e}" for k, v in z.items())))
    ratios = residual_ratios(q.family, inp)
    for k, r in ratios.items():
        checks.append(Check(f"residual ratio {k}", r <= 1 / 6, f"{r:.4f}"))
    r = spectral_residual(q.family, inp.with_epsilon(0.1)) / spectral_residual(q.family, inp)
    checks.append(Check("residual ratio S_Gamma", r <= 1 / 6, f"{r:.4f}"))
    mq = mean_queue_error(0.4, 1.0)
    checks.append(Check("mean queue error at eps = 1", 0.15 <= mq["rel_error"] <= 0.35,
                        f"{mq['rel_error']:.3f}"))
    return checks


def suite_mc(seed: int = 1, T: int = 1_000_000) -> list:
    q = build_queue_model()
    inp = three_state_input(0.4, 0.3)
    checks = []
    for t in martingale_tests(q.family, inp, T, seed):
        checks.append(Check(t.name, t.passed(),
                            f"max |z| {t.max_z:.2f}, {t.exceed} of {t.count} entries beyond 3 se"))
    table = coupling_rate(q.family, inp, (0.05, 0.1, 0.2), T, seed)
    r = {row.epsilon: row for row in table.rows}
    ok = r[0.2].rate <= 2 * r[0.1].rate + 3 * r[0.2].se
    checks.append(Check("coupling rate sublinear growth", ok and table.monotone(),
                        ", ".join(f"eps {e:g}: {row.rate:.4f}" for e, row in r.items())
                        + f", slope {table.slope:.2f}"))
    return checks


def run_suite(name: str, seed: int = 1, steps: int = 1_000_000) -> list:
    if name == "unit":
        return suite_unit()
    if name == "oracle":
        return suite_oracle()
    if name == "mc":
        return suite_mc(seed, steps)
    raise ValueError(f"unknown suite {name!r}")
