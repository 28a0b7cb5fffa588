"""File ingestion and result persistence.

Draw matrices travel as CSV with header unit_1,...,unit_n and one draw per
row; datasets as CSV with a y column, an optional z column, and any
further columns treated as covariates. All floats are written with repr
so that persisted files round-trip exactly and identical runs produce
byte-identical output.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict

import numpy as np

from ._version import __version__
from .engines import ChainConfig, MethodSpec, PosteriorSample
from .errors import ConfigError, DimensionMismatchError, ParseError
from .evaluation import ParameterSummary, StudySummary
from .experiments import (ReplicationRecord, SimulationDesign, StudyResult,
                          builtin_designs, design_hash)
from .model import PartialPosteriorDraws, TwoStageDataset

SCHEMA_VERSION = 1


def _fmt(value) -> str:
    return repr(float(value))


def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            rows = list(reader)
    except OSError:
        raise
    except (csv.Error, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty file")
    return rows[0], rows[1:]


def _parse_float(cell: str, path: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"{path}: row {row}, column {col}: "
                         f"cannot parse {cell!r} as a number") from None
    if not np.isfinite(value):
        raise ParseError(f"{path}: row {row}, column {col}: non-finite value {cell!r}")
    return value


def _parse_matrix(path: str, header: list[str], rows: list[list[str]]) -> np.ndarray:
    width = len(header)
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {i + 2} has {len(row)} cells, "
                             f"expected {width}")
        for j, cell in enumerate(row):
            out[i, j] = _parse_float(cell, path, i + 2, header[j])
    return out


def ingest_draws(path: str) -> PartialPosteriorDraws:
    """Read a stage-one draws file (header unit_1..unit_n, one draw per row)."""
    header, rows = _read_rows(path)
    for j, name in enumerate(header):
        if name.strip() != f"unit_{j + 1}":
            raise ParseError(f"{path}: header column {j + 1} is {name!r}, "
                             f"expected 'unit_{j + 1}'")
    matrix = _parse_matrix(path, header, rows)
    try:
        return PartialPosteriorDraws(matrix)
    except (ValueError, DimensionMismatchError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


def ingest_dataset(data_path: str, covariates_path: str | None = None,
                   log_outcome: bool = False
                   ) -> tuple[TwoStageDataset, np.ndarray | None]:
    """Read outcomes (column y), optional raw z column, and covariates.

    Columns in the data file other than y and z are covariates; a separate
    covariates file contributes additional columns, aligned by row order.
    Returns (dataset, z_or_None).
    """
    header, rows = _read_rows(data_path)
    names = [h.strip() for h in header]
    if "y" not in names:
        raise ParseError(f"{data_path}: missing required column 'y'")
    matrix = _parse_matrix(data_path, names, rows)
    y = matrix[:, names.index("y")]
    z = matrix[:, names.index("z")] if "z" in names else None
    extra_cols = [j for j, name in enumerate(names) if name not in ("y", "z")]
    X = matrix[:, extra_cols] if extra_cols else None

    if covariates_path is not None:
        cov_header, cov_rows = _read_rows(covariates_path)
        cov = _parse_matrix(covariates_path, [h.strip() for h in cov_header], cov_rows)
        if cov.shape[0] != y.size:
            raise DimensionMismatchError(
                f"{covariates_path}: {cov.shape[0]} rows but data has {y.size}")
        X = cov if X is None else np.column_stack([X, cov])

    try:
        dataset = TwoStageDataset(y, X=X, log_outcome=log_outcome)
    except (ValueError, DimensionMismatchError):
        raise
    return dataset, z


def resolve_design(value: str) -> SimulationDesign:
    """Look up a built-in design by name or load one from a JSON file."""
    catalog = builtin_designs()
    if value in catalog:
        return catalog[value]
    if os.path.exists(value):
        try:
            with open(value, encoding="utf-8") as handle:
                data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{value}: invalid JSON: {exc}") from exc
        try:
            return SimulationDesign.from_dict(data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{value}: invalid design: {exc}") from exc
    raise ConfigError(f"unknown design {value!r}; built-ins: "
                      + ", ".join(sorted(catalog)))


def _write_json(payload: dict, path: str):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=1)
        handle.write("\n")


def _write_csv(path: str, header: list[str], rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def write_draws(draws: PartialPosteriorDraws, path: str):
    header = [f"unit_{j + 1}" for j in range(draws.n_units)]
    _write_csv(path, header, ([_fmt(v) for v in row] for row in draws.draws))


def write_dataset(dataset: TwoStageDataset, out_dir: str,
                  z: np.ndarray | None = None):
    """Write data.csv (y, optional z) and covariates.csv when p > 0."""
    header = ["y"] + (["z"] if z is not None else [])
    cols = [dataset.y] + ([z] if z is not None else [])
    rows = ([_fmt(v) for v in values] for values in zip(*cols))
    _write_csv(os.path.join(out_dir, "data.csv"), header, rows)
    if dataset.p:
        cov_header = [f"x_{j + 1}" for j in range(dataset.p)]
        _write_csv(os.path.join(out_dir, "covariates.csv"), cov_header,
                   ([_fmt(v) for v in row] for row in dataset.X))


def _summary_to_row(rep: int, method: str, param: str,
                    s: ParameterSummary) -> list[str]:
    contains = "" if s.contains_truth is None else str(int(s.contains_truth))
    return [str(rep), method, param, _fmt(s.mean), _fmt(s.sd),
            _fmt(s.lower), _fmt(s.upper), _fmt(s.width), contains]


_METHOD_COLUMNS = ("w2_theta", "w2_sigma", "rmse_in", "rmse_out",
                   "pred_coverage", "pred_width", "shrink_gamma")


def write_study(result: StudyResult, out_dir: str):
    """Persist a study: study.json plus per-replication CSV files."""
    os.makedirs(out_dir, exist_ok=True)
    _write_json({
        "kind": "study",
        "version": result.version,
        "design": result.design.to_dict(),
        "design_hash": result.design_hash,
        "failures": [[rep, msg] for rep, msg in result.failures],
        "aggregates": {m: asdict(s) for m, s in result.aggregates.items()},
    }, os.path.join(out_dir, "study.json"))

    rows = []
    for record in result.records:
        for param in sorted(record.summaries):
            rows.append(_summary_to_row(record.rep, record.method, param,
                                        record.summaries[param]))
    _write_csv(os.path.join(out_dir, "replications.csv"),
               ["rep", "method", "parameter", "mean", "sd", "lower", "upper",
                "width", "contains_truth"], rows)

    method_rows = []
    for r in result.records:
        row = [str(r.rep), r.method]
        for name in _METHOD_COLUMNS:
            value = getattr(r, name)
            row.append("" if value is None else _fmt(value))
        row.append(_fmt(r.jitter_delta))
        row.append(str(r.degenerate_post_burn))
        method_rows.append(row)
    _write_csv(os.path.join(out_dir, "methods.csv"),
               ["rep", "method", *_METHOD_COLUMNS, "jitter_delta",
                "degenerate_post_burn"], method_rows)

    trace_rows = []
    for r in result.records:
        if r.weight_trace is None:
            continue
        for sweep, (ess, max_w, entropy) in enumerate(r.weight_trace):
            trace_rows.append([str(r.rep), r.method, str(sweep),
                               _fmt(ess), _fmt(max_w), _fmt(entropy)])
    _write_csv(os.path.join(out_dir, "weights.csv"),
               ["rep", "method", "sweep", "ess", "max_weight", "entropy"],
               trace_rows)


def _optional_float(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def load_study(in_dir: str) -> StudyResult:
    """Rebuild a StudyResult from a directory written by write_study."""
    path = os.path.join(in_dir, "study.json")
    try:
        with open(path, encoding="utf-8") as handle:
            meta = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if meta.get("kind") != "study":
        raise ParseError(f"{path}: not a study result file")
    design = SimulationDesign.from_dict(meta["design"])
    aggregates = {m: StudySummary(**s) for m, s in meta["aggregates"].items()}

    header, rows = _read_rows(os.path.join(in_dir, "replications.csv"))
    summaries: dict[tuple[int, str], dict[str, ParameterSummary]] = {}
    for row in rows:
        rep, method, param = int(row[0]), row[1], row[2]
        contains = None if row[8] == "" else bool(int(row[8]))
        summaries.setdefault((rep, method), {})[param] = ParameterSummary(
            mean=float(row[3]), sd=float(row[4]), lower=float(row[5]),
            upper=float(row[6]), contains_truth=contains)

    header, rows = _read_rows(os.path.join(in_dir, "methods.csv"))
    records = []
    for row in rows:
        rep, method = int(row[0]), row[1]
        values = dict(zip(_METHOD_COLUMNS, (_optional_float(c) for c in row[2:9])))
        records.append(ReplicationRecord(
            rep=rep, method=method, summaries=summaries.get((rep, method), {}),
            jitter_delta=float(row[9]), degenerate_post_burn=int(row[10]),
            **values))

    weights_path = os.path.join(in_dir, "weights.csv")
    if os.path.exists(weights_path):
        header, rows = _read_rows(weights_path)
        traces: dict[tuple[int, str], list[list[float]]] = {}
        for row in rows:
            traces.setdefault((int(row[0]), row[1]), []).append(
                [float(row[3]), float(row[4]), float(row[5])])
        for record in records:
            key = (record.rep, record.method)
            if key in traces:
                record.weight_trace = np.asarray(traces[key])

    return StudyResult(design=design, design_hash=meta["design_hash"],
                       records=records, aggregates=aggregates,
                       failures=[(int(r), m) for r, m in meta["failures"]],
                       version=meta["version"])


def write_fit(sample: PosteriorSample, dataset: TwoStageDataset, out_dir: str,
              z: np.ndarray | None = None):
    """Persist one chain: parameter draws, optional zeta draws, data echo."""
    os.makedirs(out_dir, exist_ok=True)
    params = sample.parameters()
    names = list(params)
    _write_csv(os.path.join(out_dir, "params.csv"), names,
               ([_fmt(params[name][t]) for name in names]
                for t in range(sample.n_retained)))
    if sample.zeta is not None:
        header = [f"unit_{j + 1}" for j in range(sample.zeta.shape[1])]
        _write_csv(os.path.join(out_dir, "zeta.csv"), header,
                   ([_fmt(v) for v in row] for row in sample.zeta))
    if sample.weight_trace is not None:
        _write_csv(os.path.join(out_dir, "weights.csv"),
                   ["sweep", "ess", "max_weight", "entropy"],
                   ([str(i), _fmt(e), _fmt(m), _fmt(h)]
                    for i, (e, m, h) in enumerate(sample.weight_trace)))
    write_dataset(dataset, out_dir, z=z)
    _write_json({
        "kind": "fit",
        "version": __version__,
        "method": asdict(sample.method),
        "chain": asdict(sample.chain),
        "base_seed": sample.base_seed,
        "stream_id": sample.stream_id,
        "log_outcome": sample.log_outcome,
        "shrink_gamma": sample.shrink_gamma,
        "degenerate_sweeps": sample.degenerate_sweeps,
        "fitted_mean": [float(v) for v in sample.fitted_mean],
    }, os.path.join(out_dir, "meta.json"))


def load_fit(in_dir: str) -> tuple[PosteriorSample, TwoStageDataset, np.ndarray | None]:
    """Rebuild a persisted chain (enough for prediction and hybrid data)."""
    path = os.path.join(in_dir, "meta.json")
    try:
        with open(path, encoding="utf-8") as handle:
            meta = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if meta.get("kind") != "fit":
        raise ParseError(f"{path}: not a fit result file")

    header, rows = _read_rows(os.path.join(in_dir, "params.csv"))
    matrix = _parse_matrix(os.path.join(in_dir, "params.csv"), header, rows)
    cols = {name: matrix[:, j] for j, name in enumerate(header)}
    beta_names = sorted((n for n in cols if n.startswith("beta_")),
                        key=lambda n: int(n.split("_")[1]))
    beta = (np.column_stack([cols[n] for n in beta_names])
            if beta_names else np.empty((matrix.shape[0], 0)))

    zeta = None
    zeta_path = os.path.join(in_dir, "zeta.csv")
    if os.path.exists(zeta_path):
        zheader, zrows = _read_rows(zeta_path)
        zeta = _parse_matrix(zeta_path, zheader, zrows)

    trace = None
    weights_path = os.path.join(in_dir, "weights.csv")
    if os.path.exists(weights_path):
        wheader, wrows = _read_rows(weights_path)
        wmatrix = _parse_matrix(weights_path, wheader, wrows)
        trace = wmatrix[:, 1:4]

    log_outcome = bool(meta["log_outcome"])
    dataset, z = ingest_dataset(os.path.join(in_dir, "data.csv"),
                                covariates_path=(os.path.join(in_dir, "covariates.csv")
                                                 if os.path.exists(
                                                     os.path.join(in_dir, "covariates.csv"))
                                                 else None),
                                log_outcome=log_outcome)

    sample = PosteriorSample(
        beta0=cols["beta0"], theta_zeta=cols["theta_zeta"], beta=beta,
        sigma_eps_sq=cols["sigma_eps_sq"],
        sigma_theta=cols.get("sigma_theta"), zeta=zeta,
        fitted_mean=np.asarray(meta["fitted_mean"]),
        method=MethodSpec(**meta["method"]),
        chain=ChainConfig(**meta["chain"]),
        base_seed=meta["base_seed"], stream_id=meta["stream_id"],
        log_outcome=log_outcome, weight_trace=trace,
        degenerate_sweeps=list(meta["degenerate_sweeps"]),
        shrink_gamma=meta["shrink_gamma"])
    return sample, dataset, z


def write_simulation(dataset: TwoStageDataset, draws: PartialPosteriorDraws,
                     out_dir: str, z: np.ndarray | None = None,
                     meta: dict | None = None):
    """Persist one simulated dataset with its stage-one draws and truth."""
    os.makedirs(out_dir, exist_ok=True)
    write_dataset(dataset, out_dir, z=z)
    write_draws(draws, os.path.join(out_dir, "draws.csv"))
    truth = dataset.truth or {}
    truth_payload = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                     for k, v in truth.items()}
    _write_json({"kind": "simulation", "version": __version__,
                 "log_outcome": dataset.log_outcome,
                 "truth": truth_payload, **(meta or {})},
                os.path.join(out_dir, "meta.json"))


def write_report(result: StudyResult, out_dir: str, fmt: str = "csv"):
    """Emit aggregate tables and plot-ready per-figure data files."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}; expected csv or json")
    os.makedirs(out_dir, exist_ok=True)

    table_columns = ("method", "w2_theta_mean", "w2_theta_median",
                     "w2_sigma_mean", "w2_sigma_median", "coverage_theta",
                     "mean_width_theta", "mean_theta", "mean_sigma_eps_sq",
                     "rmse_in_mean", "rmse_out_mean", "pred_coverage_mean",
                     "pred_width_mean")
    methods = [m for m in result.design.methods if m in result.aggregates]
    if fmt == "json":
        _write_json({"kind": "report", "design_hash": result.design_hash,
                     "table": {m: asdict(result.aggregates[m]) for m in methods}},
                    os.path.join(out_dir, "table.json"))
    else:
        rows = []
        for m in methods:
            agg = asdict(result.aggregates[m])
            rows.append([m] + ["" if agg[c] is None else _fmt(agg[c])
                               for c in table_columns[1:]])
        _write_csv(os.path.join(out_dir, "table.csv"), list(table_columns), rows)

    _write_csv(os.path.join(out_dir, "posterior_means.csv"),
               ["rep", "method", "parameter", "mean"],
               ([str(r.rep), r.method, p, _fmt(s.mean)]
                for r in result.records for p, s in sorted(r.summaries.items())))
    _write_csv(os.path.join(out_dir, "interval_widths.csv"),
               ["rep", "method", "parameter", "lower", "upper", "width"],
               ([str(r.rep), r.method, p, _fmt(s.lower), _fmt(s.upper), _fmt(s.width)]
                for r in result.records for p, s in sorted(r.summaries.items())))
    _write_csv(os.path.join(out_dir, "coverages.csv"),
               ["method", "coverage_theta", "mean_width_theta",
                "pred_coverage_mean", "pred_width_mean"],
               ([m,
                 _fmt(result.aggregates[m].coverage_theta),
                 _fmt(result.aggregates[m].mean_width_theta),
                 "" if result.aggregates[m].pred_coverage_mean is None
                 else _fmt(result.aggregates[m].pred_coverage_mean),
                 "" if result.aggregates[m].pred_width_mean is None
                 else _fmt(result.aggregates[m].pred_width_mean)]
                for m in methods))
    _write_csv(os.path.join(out_dir, "weight_traces.csv"),
               ["rep", "method", "sweep", "ess", "max_weight", "entropy"],
               ([str(r.rep), r.method, str(sweep), _fmt(e), _fmt(mw), _fmt(h)]
                for r in result.records if r.weight_trace is not None
                for sweep, (e, mw, h) in enumerate(r.weight_trace)))
