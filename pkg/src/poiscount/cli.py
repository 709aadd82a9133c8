"""Command-line front end.

Subcommands: simulate, fit, diagnose, bounds, link, simstudy.  Flags cover
IO and the common knobs; model parameters live in a JSON config passed via
--config, whose entries override flags.  Every artifact is written next to
a run record (resolved config + seed + version) that reproduces the output
byte for byte when replayed.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .copula_link import correlation_bounds, hermite_coefficients, link
from .diagnose import latent_residuals, pit_summary, residual_acf
from .fit import (
    OptimizerConfig,
    fit_ghk,
    fit_linear_prediction,
    simulation_study,
)
from .generate import (
    MeanModel,
    RenewalLifetime,
    gen_cinar,
    gen_copula,
    gen_dar1,
    gen_inar1,
    gen_super_clipped,
    gen_super_renewal,
    read_series_csv,
    write_series_csv,
)
from .latent_ar import make_latent_ar

FAMILIES = ("dar1", "inar1", "cinar", "super-renewal", "super-clipped", "copula")


def _float_fmt(value):
    return "" if value is None else repr(float(value))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_run_record(path, command, config, warnings=()):
    record = {
        "command": command,
        "config": config,
        "version": __version__,
        "warnings": list(warnings),
    }
    Path(path).write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")


def _load_config(path):
    data = json.loads(Path(path).read_text())
    # replaying a run record: the resolved config sits under "config"
    if "config" in data and isinstance(data["config"], dict):
        return data["config"]
    return data


def _resolve(args, extra_defaults):
    """Flags -> dict, then config-file entries override them."""
    config = dict(extra_defaults)
    for key, value in vars(args).items():
        if key in ("func", "config"):
            continue
        config[key.replace("_", "-")] = value
    if getattr(args, "config", None):
        for key, value in _load_config(args.config).items():
            config[key] = value
    return config


def _mean_model_from_config(config, n, input_series=None):
    """Build the mean specification for copula/superposition families."""
    if "mu" not in config and "lambda" in config:
        return MeanModel(mu=math.log(float(config["lambda"])))
    mu = float(config.get("mu", 0.0))
    beta = [float(b) for b in config.get("beta", [])]
    columns = []
    if config.get("trend"):
        columns.append(np.arange(1.0, n + 1.0))
    if config.get("bernoulli-covariate"):
        binary = config["bernoulli-covariate"]
        rng = np.random.default_rng(int(binary.get("seed", 1234)))
        columns.append((rng.random(n) < float(binary.get("p", 0.3))).astype(float))
    if input_series is not None and input_series.covariates is not None:
        columns.extend(input_series.covariates.T)
    covariates = np.column_stack(columns) if columns else None
    if covariates is None and not beta:
        return MeanModel(mu=mu)
    return MeanModel(mu=mu, beta=beta, covariates=covariates)


def cmd_simulate(args):
    config = _resolve(args, {"lambda": 2.0, "p": 0.5, "alpha": 0.5, "phi": [0.5]})
    family = config["model"]
    if family not in FAMILIES:
        raise SystemExit(f"unknown model family {family!r}; choose from {FAMILIES}")
    n = int(config["n"])
    seed = int(config["seed"])
    lam = float(config["lambda"])
    warnings = []
    input_series = None
    if config.get("input"):
        input_series = read_series_csv(
            config["input"], count_col=config.get("count-col", "x"),
            covariate_cols=_split(config.get("covariates")),
        )
    if family == "dar1":
        series = gen_dar1(lam, float(config["p"]), n, seed)
    elif family == "inar1":
        alpha = float(config["alpha"])
        if alpha >= 0.95:
            warnings.append(
                f"alpha={alpha}: near-unit thinning mixes slowly "
                f"(relaxation time about {1.0 / (1.0 - alpha):.0f} steps)"
            )
        series = gen_inar1(lam, alpha, n, seed)
    elif family == "cinar":
        series = gen_cinar(lam, float(config["alpha"]), config["phi"], n, seed,
                           burn_in=int(config.get("burn-in", 0)))
    elif family == "super-renewal":
        lifetime = RenewalLifetime(config.get("lifetime-pmf", [0.5, 0.5]))
        model = _mean_model_from_config(config, n, input_series)
        series = gen_super_renewal(model.lambdas(n), lifetime, n, seed)
    elif family == "super-clipped":
        latent = make_latent_ar(config["phi"])
        model = _mean_model_from_config(config, n, input_series)
        series = gen_super_clipped(model.lambdas(n), latent, n, seed)
    else:
        latent = make_latent_ar(config["phi"])
        model = _mean_model_from_config(config, n, input_series)
        series = gen_copula(model, latent, n=n, seed=seed)
    out_dir = Path(config["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{family}_series.csv"
    write_series_csv(series, out_path)
    _write_run_record(str(out_path) + ".run.json", "simulate", config, warnings)
    for note in warnings:
        print(f"warning: {note}", file=sys.stderr)
    print(out_path)
    return 0


def _split(text):
    if not text:
        return None
    return [c.strip() for c in str(text).split(",") if c.strip()]


def _fit_table(results, n):
    """Human-readable comparison table; lowest AIC and BIC are starred."""
    aics = [r.aic for r in results if r.aic is not None]
    bics = [r.bic for r in results if r.bic is not None]
    lines = []
    all_names = max((r.param_names for r in results), key=len)
    header = ["model"] + all_names + ["AIC", "BIC"]
    lines.append("  ".join(f"{h:>12}" for h in header))
    for r in results:
        label = "wn" if r.eta_hat.size == 0 else f"ar{r.eta_hat.size}"
        cells = [f"{label:>12}"]
        values = list(r.params) + [math.nan] * (len(all_names) - len(r.params))
        cells += [f"{v:>12.5f}" if np.isfinite(v) else f"{'NA':>12}" for v in values]
        for value, best in ((r.aic, aics), (r.bic, bics)):
            tag = ""
            if value is not None and best and value == min(best):
                tag = "*"
            cells.append(f"{value:>11.4f}{tag}" if value is not None else f"{'NA':>12}")
        lines.append("  ".join(cells))
        if r.se is not None:
            se_cells = [f"{'(se)':>12}"]
            se_values = list(r.se) + [math.nan] * (len(all_names) - len(r.se))
            se_cells += [
                f"{v:>12.5f}" if np.isfinite(v) else f"{'NA':>12}" for v in se_values
            ]
            lines.append("  ".join(se_cells))
    lines.append(f"n = {n}")
    return "\n".join(lines) + "\n"


def cmd_fit(args):
    config = _resolve(args, {})
    if not config.get("input"):
        raise SystemExit("fit requires --input")
    covariate_cols = _split(config.get("covariates"))
    series = read_series_csv(
        config["input"], count_col=config.get("count-col", "x"),
        covariate_cols=covariate_cols,
    )
    family = config.get("model", "copula")
    orders = [int(r) for r in str(config.get("latent-order", "1")).split(",")]
    seed = int(config.get("seed", 0))
    m = int(config.get("particles", 1000))
    optimizer = OptimizerConfig(method=config.get("optimizer", "nelder-mead"))
    results = []
    records = []
    for order in orders:
        if family == "copula":
            fit = fit_ghk(series, latent_order=order, m=m, seed=seed,
                          optimizer=optimizer,
                          se_particles=int(config.get("se-particles", 100_000)))
        elif family in ("super-clipped", "super-renewal"):
            if family == "super-clipped":
                latent = make_latent_ar(config.get("phi", [0.5]))
                p = 0.5
                gb = np.arcsin(latent.autocorrelations(series.n - 1)) / (2 * math.pi)
            else:
                lifetime = RenewalLifetime(config.get("lifetime-pmf", [0.5, 0.5]))
                p = lifetime.bernoulli_p
                gb = lifetime.gamma_b(series.n - 1)
            fit = fit_linear_prediction(series, p=p, gamma_b=gb, optimizer=optimizer)
        else:
            raise SystemExit(f"unknown fit family {family!r}")
        results.append(fit)
        records.append(
            {
                "family": family,
                "latent_order": order,
                "param_names": fit.param_names,
                "theta": [float(v) for v in fit.theta_hat],
                "eta": [float(v) for v in fit.eta_hat],
                "se": None if fit.se is None else [float(v) for v in fit.se],
                "loglik": fit.loglik,
                "sse": fit.sse,
                "aic": fit.aic,
                "bic": fit.bic,
                "converged": fit.converged,
                "evaluations": fit.evaluations,
                "n": series.n,
                "count_col": config.get("count-col", "x"),
                "covariate_cols": covariate_cols,
                "m": m,
                "seed": seed,
            }
        )
        if family in ("super-clipped", "super-renewal"):
            break  # latent order does not apply to linear prediction
    out_dir = Path(config["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    table = _fit_table(results, series.n)
    (out_dir / "fit_report.txt").write_text(table)
    (out_dir / "fit_record.json").write_text(
        json.dumps(records if len(records) > 1 else records[0], sort_keys=True, indent=2)
        + "\n"
    )
    _write_run_record(out_dir / "fit_record.json.run.json", "fit", config)
    print(table)
    return 0


def cmd_diagnose(args):
    config = _resolve(args, {})
    if not config.get("input") or not config.get("fit-record"):
        raise SystemExit("diagnose requires --input and --fit-record")
    record = json.loads(Path(config["fit-record"]).read_text())
    if isinstance(record, list):  # multi-order fit: take the lowest AIC
        record = min(record, key=lambda r: r.get("aic", math.inf))
    series = read_series_csv(
        config["input"], count_col=record.get("count_col", "x"),
        covariate_cols=record.get("covariate_cols"),
    )
    if series.n != record["n"]:
        raise SystemExit(
            f"fit record describes n={record['n']} but data has n={series.n}"
        )
    theta = np.asarray(record["theta"], dtype=float)
    eta = np.asarray(record["eta"], dtype=float)
    mean_model = MeanModel(mu=theta[0], beta=theta[1:], covariates=series.covariates)
    latent = make_latent_ar(eta)
    seed = int(config.get("seed", 0))
    b_sims = int(config.get("bootstrap-sims", 500))
    residuals = latent_residuals(series, mean_model, latent)
    acf = residual_acf(residuals, h_max=min(20, residuals.rhat.size - 1))
    pit = pit_summary(
        series, (theta, eta), b_sims=b_sims, seed=seed,
        m=int(config.get("particles", 300)),
    )
    out_dir = Path(config["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(
        out_dir / "residuals.csv",
        ["t", "zhat", "rhat"],
        [
            [t + 1, _float_fmt(residuals.zhat[t]),
             _float_fmt(residuals.rhat[t - latent.order]) if t >= latent.order else ""]
            for t in range(series.n)
        ],
    )
    _write_rows(
        out_dir / "acf_pacf.csv",
        ["lag", "acf", "pacf", "band"],
        [
            [int(h), _float_fmt(acf.acf[h]), _float_fmt(acf.pacf[h - 1]),
             _float_fmt(acf.band)]
            for h in range(1, acf.lags.size)
        ],
    )
    _write_rows(
        out_dir / "pit_bins.csv",
        ["bin", "lower", "upper", "proportion"],
        [
            [i + 1, _float_fmt(i / 10), _float_fmt((i + 1) / 10),
             _float_fmt(pit.bins[i])]
            for i in range(10)
        ],
    )
    summary = {
        "q": round(pit.q, 4),
        "p_value": pit.p_value,
        "b_sims": pit.b_sims,
        "warnings": pit.warnings,
    }
    (out_dir / "diagnosis.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    _write_run_record(out_dir / "diagnosis.json.run.json", "diagnose", config)
    print(f"Q = {pit.q:.4f}, p-value = {pit.p_value}")
    return 0


def _parse_grid(text):
    parts = [float(v) for v in str(text).split(":")]
    if len(parts) == 3:
        start, stop, step = parts
        count = int(round((stop - start) / step)) + 1
        return np.array([start + i * step for i in range(count)])
    return np.array(parts)


def cmd_bounds(args):
    config = _resolve(args, {})
    grid = _parse_grid(config.get("lambda-grid", "0.1:10:0.1"))
    rows = []
    for lam in grid:
        b = correlation_bounds(float(lam))
        rows.append([_float_fmt(lam), _float_fmt(b.nb), _float_fmt(b.super_nb),
                     _float_fmt(b.p_star)])
    out_dir = Path(config["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "bounds.csv"
    _write_rows(path, ["lambda", "nb", "super_nb", "p_star"], rows)
    _write_run_record(str(path) + ".run.json", "bounds", config)
    print(path)
    return 0


def cmd_link(args):
    config = _resolve(args, {})
    lambdas = [float(v) for v in str(config.get("lambdas", "0.1,1,10")).split(",")]
    u_points = int(config.get("u-points", 201))
    u = np.linspace(-1.0, 1.0, u_points)
    rows = []
    for lam in lambdas:
        expansion = hermite_coefficients(lam, order=int(config.get("order", 30)))
        values = link(expansion, u)
        rows.extend(
            [_float_fmt(lam), _float_fmt(uu), _float_fmt(vv)]
            for uu, vv in zip(u, values)
        )
    out_dir = Path(config["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "link.csv"
    _write_rows(path, ["lambda", "u", "L"], rows)
    _write_run_record(str(path) + ".run.json", "link", config)
    print(path)
    return 0


def cmd_simstudy(args):
    config = _resolve(args, {})
    family = config.get("model", "copula")
    n_list = [int(v) for v in str(config.get("n-list", "100")).split(",")]
    replicates = int(config.get("replicates", 100))
    rows = []
    for n in n_list:
        out = simulation_study(
            family,
            n,
            replicates,
            m=int(config.get("particles", 1000)),
            seed=int(config.get("seed", 0)),
            se_particles=int(config.get("se-particles", 100_000)),
            n_jobs=int(config.get("jobs", 1)),
        )
        for j, name in enumerate(out["param_names"]):
            row = [family, n, name, _float_fmt(out["truth"][j]),
                   _float_fmt(out["mean"][j]), _float_fmt(out["sd"][j])]
            row.append(
                _float_fmt(out["hessian_se"][j]) if "hessian_se" in out else ""
            )
            rows.append(row)
    out_dir = Path(config["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "study_summary.csv"
    _write_rows(
        path, ["family", "n", "param", "truth", "mean", "sd", "mean_hessian_se"], rows
    )
    _write_run_record(str(path) + ".run.json", "simstudy", config)
    print(path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poiscount",
        description="Count time series with exact Poisson marginals: "
        "simulate, fit, diagnose.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config; entries override flags")
        p.add_argument("--out-dir", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")

    p = sub.add_parser("simulate", help="generate a series and its run record")
    common(p)
    p.add_argument("--model", default="copula", choices=FAMILIES)
    p.add_argument("--n", type=int, default=100, help="series length (default: 100)")
    p.add_argument("--input", help="CSV supplying covariate columns")
    p.add_argument("--count-col", default="x")
    p.add_argument("--covariates", help="comma-separated covariate column names")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to CSV data")
    common(p)
    p.add_argument("--model", default="copula",
                   choices=("copula", "super-clipped", "super-renewal"))
    p.add_argument("--input", required=False)
    p.add_argument("--count-col", default="x")
    p.add_argument("--covariates", help="comma-separated covariate column names")
    p.add_argument("--latent-order", default="1",
                   help="AR order(s), e.g. 1 or 0,1,2 (default: 1)")
    p.add_argument("--particles", type=int, default=1000)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="residual and PIT diagnostics for a fit")
    common(p)
    p.add_argument("--input", required=False)
    p.add_argument("--fit-record", help="fit_record.json from the fit command")
    p.add_argument("--bootstrap-sims", type=int, default=500)
    p.add_argument("--particles", type=int, default=300)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bounds", help="most-negative-correlation curves")
    common(p)
    p.add_argument("--lambda-grid", default="0.1:10:0.1",
                   help="start:stop:step or comma list (default: 0.1:10:0.1)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("link", help="link-function curves L(u)")
    common(p)
    p.add_argument("--lambdas", default="0.1,1,10")
    p.add_argument("--u-points", type=int, default=201)
    p.add_argument("--order", type=int, default=30)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("simstudy", help="replicate simulation-estimation study")
    common(p)
    p.add_argument("--model", default="copula", choices=("copula", "super-clipped"))
    p.add_argument("--n-list", default="100")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--particles", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simstudy)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
