"""File formats: dataset and grid CSVs, model files, config files, reports.

Every writer goes through :func:`atomic_write`, so a failed command never
leaves a partial file behind. Reals are written with ``repr`` and read back
bit-exactly.
"""

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .dataset import SpatialDataset
from .exceptions import DataError, InputError
from .geometry import KernelSpec
from .linear import GWRRegressor, MLRRegressor, gwr_fit
from .model import AGWNNRegressor, AgwnnModel
from .neural import ANNRegressor, MLP, DenseLayer

MODEL_FORMAT = "agwnn-model"
MODEL_VERSION = 1


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value):
    if value is None:
        return "-"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


# datasets ---------------------------------------------------------------

def dataset_header(p):
    return ["u", "v", *[f"x{j + 1}" for j in range(p)], "y"]


def write_dataset(path, d):
    rows = (np.concatenate([c, x, [t]]) for c, x, t in zip(d.coords, d.covariates, d.y))
    atomic_write(path, _csv_text(dataset_header(d.p), rows))


def read_dataset(path):
    """Read a ``u,v,x1,...,xp,y`` CSV into a :class:`SpatialDataset`."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open dataset: {exc.strerror}", path=path) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError("file is empty", path=path)
        header = [h.strip() for h in header]
        p = len(header) - 3
        if p < 0 or header != dataset_header(p):
            raise DataError(
                f"header must be u,v,x1,...,xp,y; got {','.join(header)}", row=0, path=path
            )
        values = []
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(row)}", row=i, path=path)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"non-numeric field in {row!r}", row=i, path=path) from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError("non-finite value", row=i, path=path)
            values.append(vals)
    if not values:
        raise DataError("no data rows", path=path)
    a = np.array(values)
    try:
        return SpatialDataset.from_arrays(a[:, :2], a[:, 2:-1], a[:, -1])
    except InputError as exc:
        raise DataError(str(exc), path=path) from exc


def write_grid(path, coords, values, name="value"):
    rows = ((c[0], c[1], v) for c, v in zip(coords, values))
    atomic_write(path, _csv_text(["u", "v", name], rows))


def read_grid(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        a = np.array([[float(c) for c in row] for row in reader if row])
    return header, a[:, :2], a[:, 2]


# model files ------------------------------------------------------------

def _arr(a):
    return np.asarray(a, dtype=np.float64).tolist()


def model_to_dict(est, seed=None):
    """Serialisable envelope for a fitted estimator."""
    if isinstance(est, AGWNNRegressor):
        m = est.model_
        kind = "agwnn"
        dims = {"p": m.n_features, "q": m.W1.shape[1], "r": m.W2.shape[1], "n_gn": m.n_gn}
        payload = {
            "kernel": {"family": m.kernel.family, "bandwidth": m.kernel.bandwidth},
            "W1": _arr(m.W1), "W2": _arr(m.W2), "W3": _arr(m.W3),
            "gwa_raw": _arr(m.gwa_raw), "gn_locations": _arr(m.gn_locations),
            "activations": {"f2": m.f2, "f3": m.f3, "f5": m.f5},
            "mode": m.mode, "y_offset": m.y_offset, "y_scale": m.y_scale, "oos_gwa": m.oos_gwa,
        }
        seed = m.seed if seed is None else seed
    elif isinstance(est, GWRRegressor):
        kind = "gwr"
        d = est.dataset_
        dims = {"p": d.p, "n": d.n}
        payload = {
            "kernel": {"family": est.kernel_.family, "bandwidth": est.kernel_.bandwidth},
            "coords": _arr(d.coords), "covariates": _arr(d.covariates), "y": _arr(d.y),
            "beta_local": _arr(est.fit_.beta_local), "aicc": est.fit_.aicc, "enp": est.fit_.enp,
        }
    elif isinstance(est, MLRRegressor):
        kind = "mlr"
        dims = {"p": est.n_features_in_}
        payload = {"beta": _arr(est.fit_.beta)}
    elif isinstance(est, ANNRegressor):
        kind = "ann"
        dims = {"p": est.n_features_in_, "layers": [l.out_dim for l in est.net_.layers]}
        payload = {
            "layers": [
                {"W": _arr(l.W), "b": None if l.b is None else _arr(l.b), "activation": l.activation}
                for l in est.net_.layers
            ],
            "x_mean": _arr(est.x_mean_), "x_scale": _arr(est.x_scale_),
            "y_mean": est.y_mean_, "y_scale": est.y_scale_,
        }
        seed = est.random_state if seed is None else seed
    else:
        raise InputError(f"cannot serialise {type(est).__name__}")
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": kind,
        "seed": None if seed is None else int(seed),
        "dimensions": dims,
        "payload": payload,
    }


def model_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DataError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model file version {doc.get('version')}")
    kind, pl = doc["kind"], doc["payload"]
    if kind == "agwnn":
        kernel = KernelSpec(**pl["kernel"])
        model = AgwnnModel(
            np.array(pl["W1"]), np.array(pl["W2"]), np.array(pl["W3"]),
            np.array(pl["gwa_raw"]), np.array(pl["gn_locations"]), kernel,
            pl["activations"]["f2"], pl["activations"]["f3"], pl["activations"]["f5"],
            mode=pl["mode"], y_offset=pl["y_offset"], y_scale=pl["y_scale"],
            seed=doc.get("seed") or 0, oos_gwa=pl["oos_gwa"],
        )
        est = AGWNNRegressor(
            bandwidth=kernel.bandwidth, kernel=kernel.family, mode=model.mode,
            hidden=(model.W1.shape[1], model.W2.shape[1]), activation=model.f2,
            output_activation=model.f5, oos_gwa=model.oos_gwa, random_state=model.seed,
        )
        est.model_ = model
        est.kernel_ = kernel
        est.n_features_in_ = model.n_features
        return est
    if kind == "gwr":
        kernel = KernelSpec(**pl["kernel"])
        d = SpatialDataset.from_arrays(np.array(pl["coords"]), np.array(pl["covariates"]),
                                       np.array(pl["y"]))
        est = GWRRegressor(bandwidth=kernel.bandwidth, kernel=kernel.family)
        est.dataset_ = d
        est.kernel_ = kernel
        est.fit_ = gwr_fit(d, kernel)
        est.coef_ = est.fit_.beta_local
        est.selection_ = None
        est.n_features_in_ = d.p
        return est
    if kind == "mlr":
        from .linear import GlobalFit

        beta = np.array(pl["beta"])
        est = MLRRegressor()
        est.fit_ = GlobalFit(beta=beta, residuals=np.array([]), rss=float("nan"))
        est.intercept_ = float(beta[0])
        est.coef_ = beta[1:].copy()
        est.n_features_in_ = beta.size - 1
        return est
    if kind == "ann":
        layers = [DenseLayer(np.array(l["W"]), None if l["b"] is None else np.array(l["b"]),
                             l["activation"]) for l in pl["layers"]]
        est = ANNRegressor(random_state=doc.get("seed") or 0)
        est.net_ = MLP(layers)
        est.x_mean_ = np.array(pl["x_mean"])
        est.x_scale_ = np.array(pl["x_scale"])
        est.y_mean_ = pl["y_mean"]
        est.y_scale_ = pl["y_scale"]
        est.n_features_in_ = layers[0].in_dim
        return est
    raise DataError(f"unknown model kind {kind!r}")


def save_model(path, est, seed=None):
    atomic_write(path, json.dumps(model_to_dict(est, seed), indent=1) + "\n")


def load_model(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open model file: {exc.strerror}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed model file: {exc}", path=path) from exc
    try:
        return model_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise DataError(f"incomplete model file ({exc})", path=path) from exc


# configuration ----------------------------------------------------------

DEFAULT_CONFIG = {
    "seed": 0,
    "kernel": "gaussian",
    "bandwidth": None,
    "lr": 1e-3,
    "lr_gwa": 1e-5,
    "batch_size": 32,
    "max_epochs": 600,
    "k_folds": 5,
    "patience": 30,
    "min_delta": 1e-5,
    "optimizer": "nadam",
    "refit": True,
    "q": 16,
    "r": 16,
    "mode": "nonlinear",
    "activation": "softsign",
    "agwnn_output_activation": "identity",
    "oos_gwa": "mean",
    "ann_hidden": 16,
    "ann_output_activation": "softsign",
}


def _coerce(key, text):
    default = DEFAULT_CONFIG[key]
    text = text.strip()
    if key == "bandwidth":
        return None if text.lower() in ("", "auto", "none") else float(text)
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config_lines(lines, source="config"):
    cfg = {}
    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"expected key=value, got {raw.strip()!r}", row=i, path=source)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULT_CONFIG:
            raise DataError(f"unknown key {key!r}", row=i, path=source)
        try:
            cfg[key] = _coerce(key, value)
        except ValueError as exc:
            raise DataError(f"bad value for {key}: {exc}", row=i, path=source) from None
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, then the key=value file, then ``key=value`` overrides."""
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg.update(parse_config_lines(fh, source=path))
        except OSError as exc:
            raise DataError(f"cannot open config: {exc.strerror}", path=path) from exc
    cfg.update(parse_config_lines(overrides, source="--set"))
    return cfg


def format_config(cfg):
    return "".join(f"{k} = {'auto' if v is None else fmt(v) if not isinstance(v, str) else v}\n"
                   for k, v in cfg.items())


# benchmark reports -------------------------------------------------------

TABLE_COLUMNS = ["model", "pattern", "time_s", "enp", "aicc", "loss", "rmse", "r2"]


def write_report(report, out_dir, timing=False):
    """Write the table, per-replicate metrics and per-cell RMSE grids.

    Wall times vary between runs, so ``time_s`` is only filled in when
    ``timing`` is set; everything else is a pure function of the seed.
    """
    out = Path(out_dir)
    rows = []
    for r in report.rows:
        rows.append([r["model"], r["pattern"], r["time_s"] if timing else None,
                     r["enp"], r["aicc"], r["loss"], r["rmse"], r["r2"]])
    written = [out / "table.csv"]
    atomic_write(written[0], _csv_text(TABLE_COLUMNS, rows))
    rep_rows = [[r["model"], r["replicate"], r["loss"], r["rmse"], r["r2"], r["pearson_r"]]
                for r in report.replicates]
    written.append(out / "replicates.csv")
    atomic_write(written[-1], _csv_text(["model", "replicate", "loss", "rmse", "r2", "pearson_r"], rep_rows))
    for name, grid in report.cell_rmse.items():
        written.append(out / f"cell_rmse_{name}.csv")
        write_grid(written[-1], report.coords, grid, "rmse")
    if report.failures:
        written.append(out / "failures.txt")
        atomic_write(written[-1], "".join(f"{k}: {v}\n" for k, v in sorted(report.failures.items())))
    return written
