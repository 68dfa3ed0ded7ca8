"""Reproduction harness: train / sample / gof / converge / bench subcommands.

Each run takes a JSON config file plus a handful of flag overrides, writes its
outputs as CSV (comma-separated, header row, 17 significant digits) into an
output directory, and drops a provenance.json there with everything needed to
reproduce the run bitwise.

Exit codes: 0 success, 2 validation error, 3 unsupported method (the
"not available" semantics for conditional-distribution sampling), 4 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

import qrnet
from qrnet import copula as cp
from qrnet import estimate as est
from qrnet import gmmn, gof, qmc
from qrnet.copula import UnsupportedCopulaError
from qrnet.dist import RngStream

FMT = "%.17g"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_UNSUPPORTED = 3
EXIT_RUNTIME = 4


class ConfigError(ValueError):
    pass


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([FMT % v if isinstance(v, float) else v for v in row])


def read_csv_rows(path) -> tuple[list[str], list[list[str]]]:
    """Read any of our CSVs back: (header, raw string rows)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def read_csv_matrix(path) -> tuple[list[str], np.ndarray]:
    """Read an all-numeric CSV back: (header, float matrix)."""
    header, rows = read_csv_rows(path)
    data = np.array([[float(x) for x in row] for row in rows], dtype=float)
    return header, data


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")


def _write_provenance(out: Path, subcommand: str, config: dict, seed: int) -> None:
    doc = {
        "artifact_version": qrnet.__version__,
        "subcommand": subcommand,
        "seed": seed,
        "config": config,
    }
    with open(out / "provenance.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _resolve_training(config: dict, preset: str | None):
    """(TrainConfig, arch dict) from config plus optional preset."""
    train_cfg = dict(config.get("train", {}))
    arch = dict(config.get("arch", {}))
    if preset:
        base, hidden = gmmn.preset_config(preset)
        merged = {
            "n_trn": base.n_trn,
            "n_bat": base.n_bat,
            "n_epo": base.n_epo,
        }
        merged.update(train_cfg)
        train_cfg = merged
        arch.setdefault("hidden", hidden)
    for key in ("n_trn", "n_bat", "n_epo"):
        if key not in train_cfg:
            raise ConfigError(f"train config needs {key} (or use --preset)")
    try:
        tc = gmmn.TrainConfig(**train_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train config: {exc}")
    return tc, arch


def _training_data(config: dict, tc: gmmn.TrainConfig, seed: int):
    """Training pseudo-observations: sampled from a copula or read from CSV."""
    if "data_csv" in config:
        _, X = read_csv_matrix(config["data_csv"])
        bad = np.argwhere((X <= 0.0) | (X >= 1.0))
        if bad.size:
            r, c = bad[0]
            raise ConfigError(
                f"training data must lie strictly inside (0,1): "
                f"offending value {X[r, c]!r} at row {r + 2} (1-based, incl. header), column {c + 1} "
                f"of {config['data_csv']}"
            )
        if X.shape[0] < tc.n_trn:
            raise ConfigError(f"data has {X.shape[0]} rows, config needs n_trn={tc.n_trn}")
        return X[: tc.n_trn]
    if "copula" not in config:
        raise ConfigError("train config needs either 'copula' or 'data_csv'")
    spec = cp.spec_from_dict(config["copula"])
    return cp.sample(spec, tc.n_trn, RngStream(seed, stream_id=0))


def cmd_train(config: dict, out: Path, seed: int, preset: str | None) -> int:
    tc, arch = _resolve_training(config, preset)
    tc.init_seed = int(config.get("init_seed", seed + 1))
    tc.shuffle_seed = int(config.get("shuffle_seed", seed + 2))
    X = _training_data(config, tc, seed)
    d = X.shape[1]
    layer_dims = arch.get("layer_dims") or [d, int(arch.get("hidden", 300)), d]
    kernel = gmmn.KernelSpec(tuple(config.get("kernel", gmmn.KernelSpec().bandwidths)))
    model = gmmn.train(X, tc, layer_dims=layer_dims, kernel=kernel)
    gmmn.save_model(model, out / "model.json")
    write_csv(
        out / "loss_trace.csv",
        ["epoch", "mean_batch_mmd"],
        [(e + 1, float(v)) for e, v in enumerate(model.loss_trace)],
    )
    return EXIT_OK


_SAMPLE_MODES = ("copula-prs", "copula-qrs", "gmmn-prs", "gmmn-qrs")


def _build_source(mode: str, config: dict):
    randomization = config.get("randomization", "scrambled")
    pobs = bool(config.get("pseudo_obs", False))
    if mode.startswith("copula"):
        if "copula" not in config:
            raise ConfigError(f"mode {mode} needs a 'copula' subtree")
        spec = cp.spec_from_dict(config["copula"])
        if mode == "copula-prs":
            return est.CopulaPrs(spec)
        return est.CopulaQrs(spec, randomization=randomization,
                             numeric_gumbel=bool(config.get("numeric_gumbel", False)))
    if "model" not in config:
        raise ConfigError(f"mode {mode} needs a 'model' path")
    model = gmmn.load_model(config["model"])
    if mode == "gmmn-prs":
        return est.GmmnPrs(model, pseudo_obs=pobs)
    return est.GmmnQrs(model, randomization=randomization, pseudo_obs=pobs)


def cmd_sample(config: dict, out: Path, seed: int, preset: str | None) -> int:
    mode = config.get("mode")
    if mode not in _SAMPLE_MODES:
        raise ConfigError(f"mode must be one of {_SAMPLE_MODES}")
    n = int(config.get("n", 0))
    if n < 1:
        raise ConfigError("n must be at least 1")
    if mode == "gmmn-qrs" and config.get("randomization") == "raw":
        raise ConfigError("raw point sets are refused for gmmn-qrs (randomize first)")
    source = _build_source(mode, config)
    U = source.generate(n, seed, int(config.get("replication", 0)))
    write_csv(
        out / "sample.csv",
        [f"u{j + 1}" for j in range(U.shape[1])],
        [tuple(float(x) for x in row) for row in U],
    )
    return EXIT_OK


def cmd_gof(config: dict, out: Path, seed: int, preset: str | None) -> int:
    B = int(config.get("B", 0))
    if B < 1:
        raise ConfigError("B must be at least 1")
    n = int(config.get("n", 1000))
    statistic = config.get("statistic", "one_sample")
    rows = []
    if statistic == "one_sample":
        if "copula" not in config:
            raise ConfigError("one_sample gof needs the target 'copula'")
        spec = cp.spec_from_dict(config["copula"])
        for mode in config.get("methods", ["copula-prs"]):
            source = _build_source(mode, {**config, "pseudo_obs": True})
            for b in range(B):
                U = source.generate(n, seed, b)
                U = cp.pseudo_observations(U)
                rows.append((mode, b, gof.cvm_one_sample(U, spec)))
    elif statistic == "two_sample":
        if "data_csv" in config:
            _, ref = read_csv_matrix(config["data_csv"])
        elif "copula" in config:
            spec = cp.spec_from_dict(config["copula"])
            ref = cp.sample(spec, int(config.get("n_trn", n)), RngStream(seed, stream_id=10**6))
        else:
            raise ConfigError("two_sample gof needs 'data_csv' or 'copula'")
        ref = cp.pseudo_observations(ref)
        for mode in config.get("methods", ["copula-prs"]):
            source = _build_source(mode, {**config, "pseudo_obs": True})
            for b in range(B):
                U = cp.pseudo_observations(source.generate(n, seed, b))
                rows.append((mode, b, gof.cvm_two_sample(U, ref)))
    else:
        raise ConfigError("statistic must be 'one_sample' or 'two_sample'")
    write_csv(out / "gof.csv", ["method", "replication", "statistic"], rows)
    return EXIT_OK


def _functional_from_config(config: dict):
    fcfg = dict(config.get("functional", {}))
    kind = fcfg.get("kind")
    if kind == "sobol_g":
        if "copula" not in config:
            raise ConfigError("sobol_g needs the 'copula' used for its Rosenblatt map")
        return est.SobolG(cp.spec_from_dict(config["copula"]))
    if kind == "expected_shortfall":
        return est.ExpectedShortfall(margins=est.NormalMargin(), level=float(fcfg.get("level", 0.99)))
    if kind == "allocation":
        return est.Allocation(margins=est.NormalMargin(), level=float(fcfg.get("level", 0.99)),
                              component=int(fcfg.get("component", 0)))
    if kind == "basket_call":
        return est.BasketCall(
            spots=[float(x) for x in fcfg["spots"]],
            vols=[float(x) for x in fcfg["vols"]],
            r=float(fcfg.get("r", 0.01)),
            t=float(fcfg.get("t", 0.0)),
            T=float(fcfg.get("T", 1.0)),
            K=float(fcfg["K"]) if "K" in fcfg else None,
        )
    raise ConfigError(
        "functional.kind must be one of sobol_g, expected_shortfall, allocation, basket_call"
    )


def cmd_converge(config: dict, out: Path, seed: int, preset: str | None) -> int:
    functional = _functional_from_config(config)
    grid_cfg = config.get("grid", "desk" if preset == "desk" else "paper")
    if grid_cfg == "paper":
        grid = est.PAPER_GRID
    elif grid_cfg == "desk":
        grid = est.DESK_GRID
    else:
        grid = [int(x) for x in grid_cfg]
    B = int(config.get("B", 25))
    trim = config.get("trim_below")
    sources = {}
    for mode in config.get("methods", ["copula-prs"]):
        sources[mode] = _build_source(mode, config)
    report = est.convergence_study(
        functional,
        sources,
        n_grid=grid,
        B=B,
        seed=seed,
        trim_below=None if trim is None else int(trim),
    )
    report.write_estimates_csv(out / "estimates.csv")
    report.write_summary_csv(out / "summary.csv")
    report.write_fit_csv(out / "fit.csv")
    return EXIT_OK


def cmd_bench(config: dict, out: Path, seed: int, preset: str | None) -> int:
    n_list = [int(x) for x in config.get("n_list", [10**5])]
    reps = int(config.get("repetitions", 5))
    warmup = int(config.get("warmup", 1))
    if reps < 1:
        raise ConfigError("repetitions must be at least 1")
    rows = []
    for item in config.get("cases", []):
        mode = item.get("mode")
        if mode not in _SAMPLE_MODES:
            raise ConfigError(f"bench case mode must be one of {_SAMPLE_MODES}")
        label = item.get("label", mode)
        source = _build_source(mode, {**config, **item})
        for n in n_list:
            for _ in range(warmup):
                source.generate(n, seed, 0)
            t0 = time.perf_counter()
            for r in range(reps):
                source.generate(n, seed, r)
            elapsed = (time.perf_counter() - t0) / reps
            rows.append((label, mode, n, float(elapsed), float(elapsed / n)))
    write_csv(
        out / "bench.csv",
        ["label", "mode", "n_gen", "mean_elapsed_s", "per_sample_s"],
        rows,
    )
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "gof": cmd_gof,
    "converge": cmd_converge,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qrnet", description="quasi-random dependence sampling harness"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
        p.add_argument("--preset", choices=["paper", "desk"], default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        config = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_provenance(out, args.subcommand, config, args.seed)
        return _COMMANDS[args.subcommand](config, out, args.seed, args.preset)
    except UnsupportedCopulaError as exc:
        print(f"unsupported method: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ConfigError, gmmn.ModelSchemaError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failure: report, distinct exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
