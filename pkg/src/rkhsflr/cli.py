"""Command line surface: fit, predict, simulate, rates, eigen, diag, figures.

Every command resolves its configuration from defaults, an optional
`key = value` file, and flags (flags win), writes its outputs atomically,
and drops a manifest JSON next to each primary output recording the
resolved config, value provenance, library versions, and output hashes.

Exit status: 0 on success, 1 on domain errors (bad data, solver failure),
2 on configuration errors (unknown keys, out-of-range values, missing
input paths).
"""

from __future__ import annotations

import argparse
import glob
import json
import math
import os
import platform
import sys

import numpy as np
import scipy
from scipy.linalg import LinAlgError

from . import __version__
from .config import COMMAND_FIELDS, parse_config_file, resolve
from .errors import ConfigError
from .estimator import FLRConfig, LambdaSearch, predict, solve
from .fsio import atomic_write_json, atomic_write_text, sha256_of_file
from .grid import load_dataset_csv, make_uniform_grid
from .kernels import (
    SobolevKernel,
    brownian_covariance_matrix,
    kernel_matrix,
    ou_covariance_matrix,
    space_kernel_matrix,
)
from .modelio import load_model, saved_beta_values, saved_predict, write_model
from .operators import mercer, simultaneous_diagonalize
from .simulation import METHODS, SimScenario, fit_rate, run_replicates

RESULTS_HEADER = "replicate,method,lambda,est_error,pred_error"
MIN_REPLICATES_FOR_RATE = 30

# method/metric pairs reported by `rates`: GCV is judged on both errors,
# each oracle only on the error it tunes for
RATE_PAIRS = (
    ("gcv", "est"),
    ("gcv", "pred"),
    ("oracle_pred", "pred"),
    ("oracle_est", "est"),
)

# figure name, spacing, sigma, metrics; series are emitted per method and nu
FIGURE_LAYOUTS = (
    ("fig1", "well", 0.5, ("pred",)),
    ("fig2", "well", 0.5, ("est",)),
    ("fig3", "well", 1.0, ("pred", "est")),
    ("fig4", "close", 0.5, ("pred", "est")),
)
METRIC_METHODS = {"pred": ("gcv", "oracle_pred"), "est": ("gcv", "oracle_est")}

_COMMAND_HELP = {
    "fit": "fit the regularized functional linear model to a dataset CSV",
    "predict": "score new curves with a saved model",
    "simulate": "run a Monte Carlo scenario and write per-replicate errors",
    "rates": "fit log-log error-vs-n slopes from simulate outputs",
    "eigen": "write the leading eigenvalues of a kernel on the uniform grid",
    "diag": "write the simultaneous-diagonalization summary of a kernel pair",
    "figures": "emit plot-data CSVs for the standard figure layouts",
}

_FLAG_HELP = {
    ("fit", "input"): "training dataset CSV (header t,<grid>; rows y,<curve values>)",
    ("fit", "model"): "output path for the fitted model JSON",
    ("predict", "model"): "fitted model JSON produced by fit",
    ("predict", "input"): "curves CSV in dataset format; the response column is ignored",
    ("predict", "output"): "output CSV of predictions",
    ("simulate", "out"): "output results CSV (a .manifest.json sidecar is written too)",
    ("rates", "in"): "glob of results CSVs from simulate (manifest sidecars required)",
    ("rates", "out"): "output rates CSV",
    ("eigen", "kernel"): "kernel name: sobolev:<m>, brownian, or ou",
    ("eigen", "output"): "output CSV with columns k,eigenvalue",
    ("diag", "k"): (
        "RKHS kernel name: sobolev:<m> (coupled with its polynomial block), "
        "brownian, or ou"
    ),
    ("diag", "c"): "covariance kernel name: sobolev:<m>, brownian, or ou",
    ("diag", "output"): "output CSV with columns k,gamma,rho,mu,ratio",
    ("figures", "in"): "glob of results CSVs from simulate (manifest sidecars required)",
    ("figures", "out"): "output directory for per-figure CSVs",
    "order": "Sobolev kernel order m, between 1 and 4",
    "lambda": "penalty weight: auto for GCV search, or a positive number",
    "lambda_min": "lower end of the log-spaced lambda search grid",
    "lambda_max": "upper end of the log-spaced lambda search grid",
    "lambda_points": "number of lambda grid points",
    "refine": "golden-section refinement around the GCV grid minimum",
    "spacing": "covariance eigenvalue design",
    "nu": "covariance eigenvalue decay exponent, must exceed 1",
    "sigma": "response noise standard deviation",
    "n": "sample size per replicate",
    "reps": "number of Monte Carlo replicates",
    "seed": "master RNG seed; replicate streams are derived from it",
    "grid_points": "number of uniform grid points",
    "series_terms": "number of cosine series terms in the generator",
    "truth_decay": "decay exponent of the true coefficient sequence",
    "grid": "number of uniform grid points",
    "terms": "number of eigenvalues to emit",
}

_STR_METAVAR = {"kernel": "NAME", "k": "NAME", "c": "NAME", "in": "GLOB"}


def _fmt(value: float) -> str:
    return repr(float(value))


def _metavar(spec) -> str:
    if spec.kind == "int":
        return "N"
    if spec.kind == "float":
        return "X"
    if spec.kind == "bool":
        return "true|false"
    if spec.kind == "lambda":
        return "auto|X"
    if spec.kind == "choice":
        return "|".join(spec.choices)
    return _STR_METAVAR.get(spec.name, "PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rkhsflr",
        description="RKHS-regularized functional linear regression toolkit",
    )
    parser.add_argument("--version", action="version", version=f"rkhsflr {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for command, fields in COMMAND_FIELDS.items():
        cp = sub.add_parser(
            command,
            help=_COMMAND_HELP[command],
            description=_COMMAND_HELP[command],
        )
        cp.add_argument(
            "--config",
            dest="config_path",
            metavar="FILE",
            help="key = value config file; flags override its values",
        )
        for spec in fields:
            help_text = _FLAG_HELP.get((command, spec.name)) or _FLAG_HELP.get(spec.name)
            extra = " (required)" if spec.required else f" (default {spec.default})"
            cp.add_argument(
                "--" + spec.name.replace("_", "-"),
                dest="key_" + spec.name,
                metavar=_metavar(spec),
                help=help_text + extra,
            )
    return parser


def _require_file(path: str, key: str) -> None:
    if not os.path.isfile(path):
        raise ConfigError(f"key {key!r}: input path {path!r} does not exist", key=key)


def _write_output(path: str, text: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    atomic_write_text(path, text)


def _manifest_payload(command, config, sources, outputs, extra=None) -> dict:
    payload = {
        "command": command,
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "config": {key: config[key] for key in sorted(config)},
        "sources": {key: sources[key] for key in sorted(sources)},
        "outputs": {os.path.basename(p): sha256_of_file(p) for p in outputs},
    }
    if extra:
        payload.update(extra)
    return payload


def _write_manifest(output_path, command, config, sources, outputs, extra=None) -> None:
    payload = _manifest_payload(command, config, sources, outputs, extra)
    atomic_write_json(output_path + ".manifest.json", payload)


def _search_from_config(config, refine: bool) -> LambdaSearch:
    return LambdaSearch(
        lambda_min=config["lambda_min"],
        lambda_max=config["lambda_max"],
        num_points=config["lambda_points"],
        refine=refine,
    )


def _run_fit(config, sources) -> int:
    _require_file(config["input"], "input")
    dataset = load_dataset_csv(config["input"])
    if config["lambda"] == "auto":
        flr_config = FLRConfig(
            order=config["order"],
            search=_search_from_config(config, config["refine"]),
        )
    else:
        flr_config = FLRConfig(order=config["order"], lam=config["lambda"])
    fit = solve(dataset, flr_config)
    provenance = {
        "input": config["input"],
        "dataset_sha256": sha256_of_file(config["input"]),
        "config": {key: config[key] for key in sorted(config)},
        "package_version": __version__,
    }
    parent = os.path.dirname(os.path.abspath(config["model"]))
    os.makedirs(parent, exist_ok=True)
    write_model(fit, config["model"], provenance)
    _model_self_check(fit, dataset, config["model"])
    extra = {
        "lambda_hat": fit.lam,
        "hat_trace": fit.hat_trace,
        "gcv": fit.gcv_value,
        "inputs": {config["input"]: provenance["dataset_sha256"]},
    }
    _write_manifest(config["model"], "fit", config, sources, [config["model"]], extra)
    print(
        f"fit: n={dataset.num_curves} grid={dataset.grid.num_points} "
        f"lambda={fit.lam:.6g} -> {config['model']}"
    )
    return 0


def _model_self_check(fit, dataset, model_path: str) -> None:
    """Reload the written model and confirm it reproduces the fit."""
    model = load_model(model_path)
    beta_reloaded = saved_beta_values(model)
    beta_tol = 1e-10 * (1.0 + float(np.max(np.abs(fit.beta_values))))
    if float(np.max(np.abs(beta_reloaded - fit.beta_values))) > beta_tol:
        raise RuntimeError(
            "model self-check failed: reloaded coefficient function differs"
        )
    in_memory = predict(fit, dataset)
    reloaded = saved_predict(model, dataset)
    pred_tol = 1e-10 * (1.0 + float(np.max(np.abs(in_memory))))
    if float(np.max(np.abs(in_memory - reloaded))) > pred_tol:
        raise RuntimeError("model self-check failed: reloaded predictions differ")


def _run_predict(config, sources) -> int:
    _require_file(config["model"], "model")
    _require_file(config["input"], "input")
    model = load_model(config["model"])
    dataset = load_dataset_csv(config["input"])
    values = saved_predict(model, dataset)
    lines = ["prediction"] + [_fmt(v) for v in values]
    _write_output(config["output"], "\n".join(lines) + "\n")
    extra = {
        "inputs": {
            config["model"]: sha256_of_file(config["model"]),
            config["input"]: sha256_of_file(config["input"]),
        }
    }
    _write_manifest(config["output"], "predict", config, sources, [config["output"]], extra)
    print(f"predict: {values.size} predictions -> {config['output']}")
    return 0


def _run_simulate(config, sources) -> int:
    scenario = SimScenario(
        spacing=config["spacing"],
        nu=config["nu"],
        sigma=config["sigma"],
        n=config["n"],
        num_replicates=config["reps"],
        seed=config["seed"],
        grid_points=config["grid_points"],
        series_terms=config["series_terms"],
        truth_decay=config["truth_decay"],
        order=config["order"],
        search=_search_from_config(config, refine=False),
    )
    batch = run_replicates(scenario)
    if not batch.results:
        first = batch.failures[0][1] if batch.failures else "no replicates ran"
        raise RuntimeError(f"all replicates failed; first failure: {first}")
    lines = [RESULTS_HEADER]
    for res in batch.results:
        lines.append(
            ",".join(
                [
                    str(res.replicate_index),
                    res.method,
                    _fmt(res.lam),
                    _fmt(res.est_error),
                    _fmt(res.pred_error),
                ]
            )
        )
    _write_output(config["out"], "\n".join(lines) + "\n")
    extra = {
        "num_failures": batch.num_failures,
        "failures": [
            {"replicate": index, "error": message} for index, message in batch.failures
        ],
    }
    _write_manifest(config["out"], "simulate", config, sources, [config["out"]], extra)
    if batch.failures:
        print(
            f"simulate: {batch.num_failures} of {config['reps']} replicates failed",
            file=sys.stderr,
        )
    print(
        f"simulate: spacing={config['spacing']} nu={config['nu']:g} "
        f"sigma={config['sigma']:g} n={config['n']} reps={config['reps']} "
        f"-> {config['out']}"
    )
    return 0


def _read_results_csv(path: str) -> dict:
    """Per-method (est_error, pred_error) rows of a simulate results CSV."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0] != RESULTS_HEADER:
        raise RuntimeError(f"{path!r} is not a simulate results CSV")
    rows = {method: [] for method in METHODS}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise RuntimeError(f"{path!r} line {line_no}: expected 5 columns")
        method = parts[1]
        if method not in rows:
            raise RuntimeError(f"{path!r} line {line_no}: unknown method {method!r}")
        try:
            est = float(parts[3])
            pred = float(parts[4])
        except ValueError:
            raise RuntimeError(f"{path!r} line {line_no}: non-numeric error value")
        rows[method].append((est, pred))
    return rows


def _load_cells(pattern: str, key: str):
    """Results rows grouped by (spacing, nu, sigma, n) via manifest sidecars."""
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise ConfigError(f"key {key!r}: no files match {pattern!r}", key=key)
    cells = {}
    inputs = {}
    for path in paths:
        manifest_path = path + ".manifest.json"
        if not os.path.isfile(manifest_path):
            raise RuntimeError(f"missing manifest sidecar {manifest_path!r} for {path!r}")
        with open(manifest_path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
        if manifest.get("command") != "simulate":
            raise RuntimeError(
                f"{path!r} is not a simulate output "
                f"(manifest command {manifest.get('command')!r})"
            )
        cfg = manifest.get("config", {})
        try:
            cell_key = (
                str(cfg["spacing"]),
                float(cfg["nu"]),
                float(cfg["sigma"]),
                int(cfg["n"]),
            )
            shape = (
                float(cfg["truth_decay"]),
                int(cfg["order"]),
                int(cfg["series_terms"]),
                int(cfg["grid_points"]),
            )
        except KeyError as exc:
            raise RuntimeError(f"manifest {manifest_path!r} lacks scenario key {exc}")
        rows = _read_results_csv(path)
        cell = cells.setdefault(
            cell_key, {"shape": shape, "files": [], "rows": {m: [] for m in METHODS}}
        )
        if cell["shape"] != shape:
            raise RuntimeError(
                f"{path!r} mixes scenario settings with other files in its cell"
            )
        cell["files"].append(path)
        for method in METHODS:
            cell["rows"][method].extend(rows[method])
        inputs[path] = sha256_of_file(path)
    return cells, inputs


def _mean_error(rows, metric: str) -> float:
    column = 0 if metric == "est" else 1
    return math.fsum(row[column] for row in rows) / len(rows)


def _run_rates(config, sources) -> int:
    cells, inputs = _load_cells(config["in"], "in")
    groups = {}
    for cell_key, cell in sorted(cells.items()):
        spacing, nu, sigma, n = cell_key
        groups.setdefault((spacing, nu, sigma), []).append((n, cell))
    out_rows = []
    group_records = []
    for (spacing, nu, sigma), members in sorted(groups.items()):
        if len({cell["shape"] for _, cell in members}) > 1:
            raise RuntimeError(
                f"group spacing={spacing} nu={nu:g} sigma={sigma:g} mixes "
                "scenario settings across sample sizes"
            )
        record = {"spacing": spacing, "nu": nu, "sigma": sigma, "fits": []}
        for method, metric in RATE_PAIRS:
            sizes = []
            means = []
            dropped = []
            for n, cell in sorted(members):
                rows = cell["rows"][method]
                if len(rows) < MIN_REPLICATES_FOR_RATE:
                    dropped.append(n)
                    continue
                sizes.append(n)
                means.append(_mean_error(rows, metric))
            if dropped:
                print(
                    f"rates: spacing={spacing} nu={nu:g} sigma={sigma:g} "
                    f"{method}: dropping n={dropped} with fewer than "
                    f"{MIN_REPLICATES_FOR_RATE} replicates",
                    file=sys.stderr,
                )
            if len(set(sizes)) < 3:
                print(
                    f"rates: spacing={spacing} nu={nu:g} sigma={sigma:g} "
                    f"{method}/{metric}: skipped, needs 3 distinct sample sizes",
                    file=sys.stderr,
                )
                continue
            rate = fit_rate(sizes, means)
            out_rows.append((nu, sigma, method, metric, rate.slope, rate.stderr))
            record["fits"].append(
                {
                    "method": method,
                    "metric": metric,
                    "sample_sizes": sizes,
                    "slope": rate.slope,
                    "stderr": rate.stderr,
                }
            )
        group_records.append(record)
    if not out_rows:
        raise RuntimeError("no rate could be fitted from the matched results")
    lines = ["nu,sigma,method,metric,slope,stderr"]
    for nu, sigma, method, metric, slope, stderr in out_rows:
        lines.append(
            ",".join([_fmt(nu), _fmt(sigma), method, metric, _fmt(slope), _fmt(stderr)])
        )
    _write_output(config["out"], "\n".join(lines) + "\n")
    extra = {"inputs": inputs, "groups": group_records}
    _write_manifest(config["out"], "rates", config, sources, [config["out"]], extra)
    print(f"rates: {len(out_rows)} slopes from {len(inputs)} result files -> {config['out']}")
    return 0


def _figure_series(cells, spacing: str, sigma: float, metrics) -> list:
    """Rows (label, log10 n, log10 mean error) for one figure layout."""
    rows = []
    matching = {
        key: cell
        for key, cell in cells.items()
        if key[0] == spacing and math.isclose(key[2], sigma, rel_tol=0.0, abs_tol=1e-12)
    }
    nus = sorted({key[1] for key in matching})
    for metric in metrics:
        for method in METRIC_METHODS[metric]:
            for nu in nus:
                points = []
                for (_, cell_nu, _, n), cell in sorted(matching.items()):
                    if cell_nu != nu or not cell["rows"][method]:
                        continue
                    mean = _mean_error(cell["rows"][method], metric)
                    if mean <= 0.0:
                        print(
                            f"figures: dropping nonpositive mean error at n={n} "
                            f"({method}, nu={nu:g})",
                            file=sys.stderr,
                        )
                        continue
                    points.append((n, mean))
                if len(points) < 2:
                    continue
                label = f"{metric}:{method}:nu={nu:g}"
                for n, mean in points:
                    rows.append((label, math.log10(n), math.log10(mean)))
    return rows


def _run_figures(config, sources) -> int:
    cells, inputs = _load_cells(config["in"], "in")
    out_dir = config["out"]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    figure_records = []
    for name, spacing, sigma, metrics in FIGURE_LAYOUTS:
        series_rows = _figure_series(cells, spacing, sigma, metrics)
        if not series_rows:
            continue
        lines = ["series,log10_n,log10_mean_error"]
        for label, log_n, log_err in series_rows:
            lines.append(f"{label},{_fmt(log_n)},{_fmt(log_err)}")
        path = os.path.join(out_dir, name + ".csv")
        atomic_write_text(path, "\n".join(lines) + "\n")
        written.append(path)
        figure_records.append(
            {
                "figure": name,
                "spacing": spacing,
                "sigma": sigma,
                "metrics": list(metrics),
                "series": len({row[0] for row in series_rows}),
            }
        )
    if not written:
        raise RuntimeError("no figure data could be assembled from the matched results")
    extra = {"inputs": inputs, "figures": figure_records}
    payload = _manifest_payload("figures", config, sources, written, extra)
    atomic_write_json(os.path.join(out_dir, "manifest.json"), payload)
    names = " ".join(os.path.basename(p) for p in written)
    print(f"figures: {names} -> {out_dir}")
    return 0


def _kernel_matrix_by_name(name: str, grid, key: str, whole_space: bool = False) -> np.ndarray:
    # whole_space widens sobolev:<m> to include the polynomial block; the
    # plain spectrum (eigen) reports the penalty kernel itself, while the
    # coupled system (diag) must let unpenalized directions participate.
    if name == "brownian":
        return brownian_covariance_matrix(grid)
    if name == "ou":
        return ou_covariance_matrix(grid)
    if name.startswith("sobolev:"):
        text = name.split(":", 1)[1]
        try:
            order = int(text)
        except ValueError:
            raise ConfigError(
                f"key {key!r}: {text!r} is not an integer kernel order", key=key
            )
        try:
            kern = SobolevKernel.of_order(order)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: {exc}", key=key)
        if whole_space:
            return space_kernel_matrix(kern, grid)
        return kernel_matrix(kern, grid.points, grid.points)
    raise ConfigError(
        f"key {key!r}: unknown kernel {name!r}; use sobolev:<m>, brownian, or ou",
        key=key,
    )


def _run_eigen(config, sources) -> int:
    grid = make_uniform_grid(config["grid"])
    kmat = _kernel_matrix_by_name(config["kernel"], grid, "kernel")
    system = mercer(kmat, grid, config["terms"])
    lines = ["k,eigenvalue"]
    for k, value in enumerate(system.eigenvalues, start=1):
        lines.append(f"{k},{_fmt(value)}")
    _write_output(config["output"], "\n".join(lines) + "\n")
    _write_manifest(config["output"], "eigen", config, sources, [config["output"]])
    print(f"eigen: kernel={config['kernel']} terms={system.num_terms} -> {config['output']}")
    return 0


def _run_diag(config, sources) -> int:
    grid = make_uniform_grid(config["grid"])
    kmat = _kernel_matrix_by_name(config["k"], grid, "k", whole_space=True)
    cmat = _kernel_matrix_by_name(config["c"], grid, "c")
    terms = config["terms"]
    ksys = mercer(kmat, grid, terms)
    csys = mercer(cmat, grid, terms)
    pair = simultaneous_diagonalize(ksys, cmat, terms)
    lines = ["k,gamma,rho,mu,ratio"]
    for k in range(pair.gamma.size):
        rho = pair.rho[k]
        mu = csys.eigenvalues[k]
        ratio = pair.gamma[k] / (rho * mu)
        lines.append(
            ",".join(
                [str(k + 1), _fmt(pair.gamma[k]), _fmt(rho), _fmt(mu), _fmt(ratio)]
            )
        )
    _write_output(config["output"], "\n".join(lines) + "\n")
    _write_manifest(config["output"], "diag", config, sources, [config["output"]])
    print(
        f"diag: k={config['k']} c={config['c']} terms={pair.gamma.size} "
        f"-> {config['output']}"
    )
    return 0


_HANDLERS = {
    "fit": _run_fit,
    "predict": _run_predict,
    "simulate": _run_simulate,
    "rates": _run_rates,
    "eigen": _run_eigen,
    "diag": _run_diag,
    "figures": _run_figures,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return 0 if code == 0 else 2
    try:
        file_values = parse_config_file(args.config_path) if args.config_path else {}
        flag_values = {
            spec.name: getattr(args, "key_" + spec.name)
            for spec in COMMAND_FIELDS[args.command]
        }
        config, sources = resolve(args.command, file_values, flag_values)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _HANDLERS[args.command](config, sources)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
