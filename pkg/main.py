#!/usr/bin/env python
"""
Covreg CLI - sparse covariance regression with similarity matrices

Usage:
    python -m covreg fit --config configs/toy.yaml [--lambda 0.05] [--inference]
    python -m covreg tune --config configs/toy.yaml [--n-lambda 50]
    python -m covreg simulate --p 200 --k 10 --replications 2 [--dist mixture_normal]
    python -m covreg backtest --config configs/toy.yaml
    python -m covreg portfolio --config configs/toy.yaml
    python -m covreg version

Exit codes: 0 success, 1 data/config error, 2 numerical failure.
"""

import logging
import sys
from typing import Any

import fire
import numpy as np
import pandas as pd

from covreg import __version__
from covreg.covreg.core.base.errors import ConfigError, CovregError, DataError
from covreg.covreg.core.base.models import GramSystem
from covreg.covreg.core.engine.config_model import RunConfig, apply_overrides, load_config
from covreg.covreg.core.engine.estimators import EstimatorContext, build_estimators
from covreg.covreg.core.engine.inference import GAUSSIAN_MU4, StandardizedPanel, plugin_standard_errors, standardize
from covreg.covreg.core.engine.loader import BasisDesign, Panel, build_design, load_market_caps, load_panel
from covreg.covreg.core.engine.portfolio import (
    TrainingWindow,
    as_covariance_fit,
    gmv_weights,
    pd_repair,
    rolling_backtest,
)
from covreg.covreg.core.engine.simulate import run_replications
from covreg.covreg.core.engine.solver import assemble_gram, fit_penalized, rss
from covreg.covreg.core.engine.tuning import bic_score, default_lambda_grid, select_lambda, select_lambda_pair
from covreg.covreg.core.export.report_writer import coefficient_frame, write_csv, write_yaml

logger = logging.getLogger("covreg")

# CLIフラグ → 設定キー
FLAG_KEYS = {
    "lambda": "penalty.lambda",
    "lambda_grid": "tuning.grid",
    "n_lambda": "tuning.n_lambda",
    "lambda_min_ratio": "tuning.min_ratio",
    "separate_lambda0": "tuning.separate_lambda0",
    "returns": "data.returns",
    "covariates": "data.covariates",
    "factors": "data.factors",
    "p": "simulate.dgp.p",
    "k": "simulate.dgp.k",
    "n": "simulate.dgp.n",
    "dist": "simulate.dgp.z_dist",
    "w_model": "simulate.dgp.w_model",
    "theta": "simulate.dgp.theta",
    "replications": "simulate.replications",
    "window": "backtest.window",
    "step": "backtest.step",
    "risk_free": "backtest.risk_free",
}


def _as_list(value: Any) -> Any:  # noqa: ANN401
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, str) and "," in value:
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def _resolve(config: str | None, shared: dict[str, Any], extra: dict[str, Any]) -> RunConfig:
    """設定ファイルを読み、共通フラグとコマンド固有フラグで上書き"""
    unknown = sorted(set(extra) - set(FLAG_KEYS) - {"verbose", "inference", "mu4", "methods"})
    if unknown:
        raise ConfigError(f"unknown flag(s): {', '.join('--' + u.replace('_', '-') for u in unknown)}")
    overrides: dict[str, Any] = {key: shared.get(key) for key in ("seed", "out", "threads")}
    overrides["penalty.family"] = shared.get("penalty")
    overrides["penalty.gamma"] = shared.get("gamma")
    overrides.update({FLAG_KEYS[key]: _as_list(value) for key, value in extra.items() if key in FLAG_KEYS})
    return apply_overrides(load_config(config), overrides)


def _setup_logging(verbose: bool) -> None:
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)


def _load_returns(config: RunConfig) -> Panel:
    if config.data.returns is None:
        raise DataError("no returns file given (data.returns or --returns)")
    print(f"📖 Loading returns: {config.data.returns}")
    panel = load_panel(config.data.returns)
    print(f"   {panel.shape[0]} rows x {panel.shape[1]} assets")
    return panel


def _prepare(config: RunConfig) -> tuple[Panel, StandardizedPanel | None, BasisDesign, GramSystem]:
    """収益率の読み込み・標準化・基底構築・Gram系の組み立て"""
    panel = _load_returns(config)
    scaled = standardize(panel.values) if config.basis.standardize else None
    data = scaled.data if scaled is not None else panel.values
    design = build_design(config, panel.shape[1], panel.names)
    print(f"🔨 Basis: K = {design.basis.n_terms - 1} similarity matrices")
    return panel, scaled, design, assemble_gram(design.basis, data)


def _fit_summary(system: GramSystem, beta: np.ndarray, df: int) -> dict[str, Any]:
    value = rss(system, beta)
    summary: dict[str, Any] = {"rss": value}
    if value > 0.0 and system.n_terms > 1:
        summary["bic"] = bic_score(value, system.p, system.n_terms - 1, df, system.n)
    return summary


class CovregCLI:
    """Covreg - sparse covariance regression CLI"""

    def fit(
        self,
        config: str | None = None,
        seed: int | None = None,
        out: str | None = None,
        penalty: str | None = None,
        gamma: float | None = None,
        threads: int | None = None,
        **kwargs: Any,  # noqa: ANN401
    ) -> None:
        """Fit the two-stage (Lasso initial -> LLA) estimator at a fixed lambda.

        Args:
            config: Path to run config YAML
            seed: Random seed
            out: Output directory
            penalty: Penalty family (lasso, scad, mcp)
            gamma: Concavity parameter
            threads: Worker threads
            **kwargs: --lambda, --returns, --covariates, --inference, --mu4, --verbose
        """
        _setup_logging(bool(kwargs.get("verbose")))
        shared = {"seed": seed, "out": out, "penalty": penalty, "gamma": gamma, "threads": threads}
        cfg = _resolve(config, shared, kwargs)
        panel, scaled, design, system = _prepare(cfg)

        print(f"🔨 Fitting {cfg.penalty.family.value} at lambda = {cfg.penalty.lam:.6g}")
        _, result = fit_penalized(system, cfg.penalty, cfg.solver)
        errors: dict[int, float] = {}
        if kwargs.get("inference"):
            data = scaled.data if scaled is not None else panel.values
            mu4 = kwargs.get("mu4", GAUSSIAN_MU4)
            avar = plugin_standard_errors(design.basis, result.coefficients, data, None if mu4 == "estimate" else mu4)
            errors = dict(zip(avar.support, avar.standard_errors.tolist(), strict=True))

        table = coefficient_frame(result.beta, design.terms, errors)
        payload = {
            "lambda": cfg.penalty.lam,
            "terms": design.terms,
            **result.as_record(),
            **_fit_summary(system, result.beta, result.coefficients.df),
        }
        if errors:
            payload["standard_errors"] = {int(k): v for k, v in errors.items()}
        write_yaml(cfg.out / "fit.yaml", payload, cfg)
        write_csv(cfg.out / "coefficients.csv", table, cfg)
        print(table.to_string(index=False))
        print(f"\n✅ Fit complete (converged: {result.converged}) -> {cfg.out}")

    def tune(
        self,
        config: str | None = None,
        seed: int | None = None,
        out: str | None = None,
        penalty: str | None = None,
        gamma: float | None = None,
        threads: int | None = None,
        **kwargs: Any,  # noqa: ANN401
    ) -> None:
        """Select lambda by BIC over a grid and report the chosen fit.

        Args:
            config: Path to run config YAML
            seed: Random seed
            out: Output directory
            penalty: Penalty family (lasso, scad, mcp)
            gamma: Concavity parameter
            threads: Worker threads (used only without warm starts, or for the lambda0 search)
            **kwargs: --lambda-grid, --n-lambda, --lambda-min-ratio, --separate-lambda0, --returns,
                --covariates, --verbose
        """
        _setup_logging(bool(kwargs.get("verbose")))
        shared = {"seed": seed, "out": out, "penalty": penalty, "gamma": gamma, "threads": threads}
        cfg = _resolve(config, shared, kwargs)
        _, _, design, system = _prepare(cfg)

        grid = cfg.tuning.grid or default_lambda_grid(system, cfg.tuning.n_lambda, cfg.tuning.min_ratio, cfg.solver)
        if cfg.tuning.separate_lambda0:
            print(f"🔨 Tuning {cfg.penalty.family.value} over {len(grid)} x {len(grid)} (lambda0, lambda) pairs")
            paired = select_lambda_pair(
                system, cfg.penalty, grid, options=cfg.solver, warm_start=cfg.tuning.warm_start, threads=cfg.threads
            )
            fit, table = paired.best_fit, paired.score_table()
            chosen = {"lambda0": paired.best_lambda0, "lambda": paired.best_lambda, "bic": paired.best_score}
        else:
            print(f"🔨 Tuning {cfg.penalty.family.value} over {len(grid)} lambda values")
            tuned = select_lambda(system, cfg.penalty, grid, cfg.solver, cfg.tuning.warm_start, cfg.threads)
            fit, table = tuned.best_fit, tuned.score_table()
            chosen = {"lambda": tuned.best_lambda, "bic": tuned.best_score}
        write_csv(cfg.out / "tuning.csv", table, cfg)
        write_csv(cfg.out / "coefficients.csv", coefficient_frame(fit.beta, design.terms), cfg)
        write_yaml(cfg.out / "fit.yaml", {**chosen, "terms": design.terms, **fit.as_record()}, cfg)
        print(f"\n✅ Selected lambda = {chosen['lambda']:.6g} (df = {fit.coefficients.df}) -> {cfg.out}")

    def simulate(
        self,
        config: str | None = None,
        seed: int | None = None,
        out: str | None = None,
        penalty: str | None = None,
        gamma: float | None = None,
        threads: int | None = None,
        **kwargs: Any,  # noqa: ANN401
    ) -> None:
        """Run Monte Carlo replications and write a per-method report.

        Args:
            config: Path to run config YAML
            seed: Base seed (replication r uses seed + r)
            out: Output directory
            penalty: Restrict penalized methods to one family
            gamma: Unused for simulate (default gamma per family)
            threads: Worker threads for replications
            **kwargs: --p, --k, --n, --theta, --dist, --w-model, --replications, --n-lambda,
                --lambda-min-ratio, --methods, --verbose
        """
        _setup_logging(bool(kwargs.get("verbose")))
        methods = _as_list(kwargs.pop("methods", None))
        if penalty is not None:
            methods = [penalty, "ols", "oracle"]
        shared = {"seed": seed, "out": out, "threads": threads}
        cfg = _resolve(config, shared, kwargs)
        if gamma is not None:
            logger.warning("--gamma is ignored by simulate (family defaults are used)")
        cfg = apply_overrides(
            cfg,
            {
                "simulate.methods": methods,
                "simulate.n_lambda": kwargs.get("n_lambda"),
                "simulate.min_ratio": kwargs.get("lambda_min_ratio"),
            },
        )

        dgp = cfg.simulate.dgp
        print(f"🔨 Simulating p = {dgp.p}, K = {dgp.k}, {cfg.simulate.replications} replications")
        report = run_replications(dgp, cfg.simulate, cfg.solver)
        table = report.table()
        outcomes = [
            {
                "replication": o.replication,
                "method": o.method.value,
                "lambda": o.lam,
                "lambda0": o.lam0,
                "spectral_err": o.spectral_err,
                "frobenius_err": o.frobenius_err,
                "support": "" if o.beta is None else " ".join(str(k) for k in np.flatnonzero(o.beta)),
            }
            for o in report.outcomes
        ]
        write_csv(cfg.out / "report.csv", table, cfg)
        write_csv(cfg.out / "replications.csv", pd.DataFrame(outcomes), cfg)
        print(table.to_string(index=False))
        print(f"\n✅ Simulation complete -> {cfg.out / 'report.csv'}")

    def backtest(
        self,
        config: str | None = None,
        seed: int | None = None,
        out: str | None = None,
        penalty: str | None = None,
        gamma: float | None = None,
        threads: int | None = None,
        **kwargs: Any,  # noqa: ANN401
    ) -> None:
        """Rolling-window GMV backtest of the configured covariance methods.

        SCR-type methods also get selection.csv: how often each similarity matrix was selected.

        Args:
            config: Path to run config YAML
            seed: Random seed
            out: Output directory
            penalty: Penalty family for SCR methods
            gamma: Concavity parameter
            threads: Worker threads for windows
            **kwargs: --window, --step, --risk-free, --methods, --returns, --factors, --verbose
        """
        _setup_logging(bool(kwargs.get("verbose")))
        methods = _as_list(kwargs.pop("methods", None))
        shared = {"seed": seed, "out": out, "penalty": penalty, "gamma": gamma, "threads": threads}
        cfg = _resolve(config, shared, kwargs)
        if methods is not None:
            cfg = apply_overrides(cfg, {"backtest.methods": methods})
        panel, design, context, factors, caps = _backtest_inputs(cfg)

        estimators = build_estimators(cfg.backtest.methods, context)
        print(f"🔨 Backtesting {', '.join(estimators)} (window {cfg.backtest.window}, step {cfg.backtest.step})")
        report = rolling_backtest(panel.values, estimators, cfg.backtest, factors, caps)
        table = report.table()
        write_csv(cfg.out / "backtest.csv", table, cfg)
        if report.supports:
            write_csv(cfg.out / "selection.csv", report.selection_counts(design.terms), cfg)
        print(table.to_string(index=False))
        print(f"\n✅ Backtest complete ({len(report.rebalance_rows)} rebalances) -> {cfg.out / 'backtest.csv'}")

    def portfolio(
        self,
        config: str | None = None,
        seed: int | None = None,
        out: str | None = None,
        penalty: str | None = None,
        gamma: float | None = None,
        threads: int | None = None,
        **kwargs: Any,  # noqa: ANN401
    ) -> None:
        """GMV weights from the most recent window for each configured method.

        Args:
            config: Path to run config YAML
            seed: Random seed
            out: Output directory
            penalty: Penalty family for SCR methods
            gamma: Concavity parameter
            threads: Unused
            **kwargs: --window, --methods, --returns, --factors, --verbose
        """
        _setup_logging(bool(kwargs.get("verbose")))
        methods = _as_list(kwargs.pop("methods", None))
        shared = {"seed": seed, "out": out, "penalty": penalty, "gamma": gamma, "threads": threads}
        cfg = _resolve(config, shared, kwargs)
        if methods is not None:
            cfg = apply_overrides(cfg, {"backtest.methods": methods})
        panel, _, context, factors, _ = _backtest_inputs(cfg)

        window = min(cfg.backtest.window, panel.shape[0])
        latest = TrainingWindow(
            index=0,
            returns=panel.values[-window:],
            factors=None if factors is None else factors[-window:],
        )
        columns: dict[str, Any] = {"asset": panel.names}
        for name, estimator in build_estimators(cfg.backtest.methods, context).items():
            print(f"🔨 {name}")
            columns[name] = gmv_weights(pd_repair(as_covariance_fit(estimator(latest)).sigma, cfg.backtest.eps)).weights
        write_csv(cfg.out / "weights.csv", pd.DataFrame(columns), cfg)
        print(pd.DataFrame(columns).to_string(index=False))
        print(f"\n✅ Weights written -> {cfg.out / 'weights.csv'}")

    def version(self) -> None:
        """Show version information."""
        print(f"covreg {__version__}")


def _backtest_inputs(
    cfg: RunConfig,
) -> tuple[Panel, BasisDesign, EstimatorContext, np.ndarray | None, np.ndarray | None]:
    panel = _load_returns(cfg)
    design = build_design(cfg, panel.shape[1], panel.names)
    factors = load_panel(cfg.data.factors).values if cfg.data.factors is not None else None
    characteristics = load_panel(cfg.data.characteristics).values if cfg.data.characteristics is not None else None
    caps = load_market_caps(cfg.data.marketcap, panel.names) if cfg.data.marketcap is not None else None
    context = EstimatorContext(
        basis=design.basis if design.basis.n_terms > 1 else None,
        spec=cfg.penalty,
        options=cfg.solver,
        n_lambda=cfg.tuning.n_lambda,
        min_ratio=cfg.tuning.min_ratio,
        characteristics=characteristics,
    )
    return panel, design, context, factors, caps


def covreg_main() -> None:
    """Covreg CLI entry point (called from python -m covreg)."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        fire.Fire(CovregCLI)
    except fire.core.FireExit as exc:
        sys.exit(1 if exc.code else 0)
    except CovregError as exc:
        print(f"❌ Error: {exc}")
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    covreg_main()
