"""Command-line interface: ``hcrlag analyze | causality | synth``.

Exit codes: 0 success, 1 analysis error, 2 I/O or configuration error.
Outputs are staged in a hidden directory and moved into place only when a
command succeeds, so a failed run leaves no partial files behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .basis import BasisSpec, eval_basis_matrix
from .causality import pairwise_causality_map
from .config import RunConfig
from .errors import ConfigError, InputError, StageError
from .features import analyze_tensor, contribution_grid
from .hcr import CoeffTensor, pearson_per_lag, sweep_basis
from .normalize import gauss_normalize, model_summary
from .signal_io import Recording, SynthSpec, generate_synthetic, iter_pairs, load_csv, write_csv
from .svg import render_feature_svg, render_heatmap_svg

log = logging.getLogger("hcrlag")

SCHEMA_VERSION = 1


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


class Outputs:
    """Collects output files in a staging directory."""

    def __init__(self, cfg: RunConfig) -> None:
        self.cfg = cfg
        self.final = Path(cfg.output)
        self.created_final = not self.final.exists()
        self.final.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.final))
        self.names: list[str] = []

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.formats

    def write_text(self, name: str, text: str) -> None:
        (self.stage / name).write_text(text)
        self.names.append(name)

    def write_with(self, name: str, writer: Callable[[Path], None]) -> None:
        writer(self.stage / name)
        self.names.append(name)

    def commit(self) -> None:
        for name in self.names:
            shutil.move(str(self.stage / name), str(self.final / name))
        shutil.rmtree(self.stage, ignore_errors=True)

    def abort(self) -> None:
        shutil.rmtree(self.stage, ignore_errors=True)
        if self.created_final and not any(self.final.iterdir()):
            self.final.rmdir()


def _load(cfg: RunConfig) -> Recording:
    if cfg.input is None:
        raise ConfigError("no input file given")
    return load_csv(cfg.input, id_column=cfg.id_column, channel_subset=cfg.channels, sample_rate_hz=cfg.rate)


def _recording_info(rec: Recording, cfg: RunConfig) -> dict[str, Any]:
    return {
        "path": cfg.input,
        "sha256": _digest(Path(cfg.input)),
        "channels": list(rec.channels),
        "length": rec.length,
        "sample_rate_hz": rec.sample_rate_hz,
    }


def _curves_csv(path: Path, lags: np.ndarray, rate: float, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    with path.open("w") as fh:
        fh.write(",".join(["lag_samples", "lag_seconds", *names]) + "\n")
        for i, lag in enumerate(lags):
            vals = [repr(float(columns[n][i])) for n in names]
            fh.write(",".join([str(int(lag)), repr(float(lag) / rate), *vals]) + "\n")


def _finish(out: Outputs, command: str, cfg: RunConfig, report: dict[str, Any]) -> None:
    if out.wants("json"):
        out.write_text("report.json", _dump(report))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "software": {"name": "hcrlag", "version": __version__},
        "command": command,
        "config": cfg.to_dict(),
        "input_sha256": report["recording"]["sha256"],
        "files": {name: _digest(out.stage / name) for name in sorted(out.names)},
    }
    out.write_text("manifest.json", _dump(manifest))


# ---------------------------------------------------------------------------
# analyze


def _pair_job(cfg: RunConfig, rec: Recording, basic, bases, a: str, b: str, auto: bool):
    spec = BasisSpec(cfg.m)
    max_lag = int(round(cfg.max_lag_seconds * rec.sample_rate_hz))
    lags = np.arange(1, max_lag + 1) if auto else np.arange(-max_lag, max_lag + 1)
    coeffs, counts = sweep_basis(bases[a], bases[b], lags)
    tensor = CoeffTensor(lags, coeffs, counts, channels=(a, b), kinds=("basic", "basic"),
                         sample_rate_hz=rec.sample_rate_hz)
    feats = analyze_tensor(tensor, r=cfg.r, mode=cfg.pooling, center=cfg.center,
                           marginal_removal=cfg.marginal_removal)
    pearson = pearson_per_lag(basic[a], basic[b], lags)
    grids = [contribution_grid(feats.eigenvectors[:, i], feats.index, spec, cfg.grid_resolution)
             for i in range(feats.r)]
    return tensor, feats, pearson, grids


def cmd_analyze(cfg: RunConfig) -> dict[str, Any]:
    cfg.validate()
    rec = _load(cfg)
    cross = iter_pairs(rec.channels)
    if len(cross) > cfg.max_pairs:
        raise ConfigError(
            f"{len(cross)} channel pairs exceed --max-pairs {cfg.max_pairs}; raise it explicitly to run them all"
        )
    jobs = [(a, b, False) for a, b in cross]
    if cfg.autocorrelation:
        jobs += [(c, c, True) for c in rec.channels]

    out = Outputs(cfg)
    try:
        spec = BasisSpec(cfg.m)
        basic = {}
        for name in rec.channels:
            try:
                basic[name] = gauss_normalize(rec.channel(name))
            except ValueError as exc:
                raise StageError(f"gauss_normalize[{name}]", str(exc)) from exc
        bases = {name: eval_basis_matrix(basic[name], spec) for name in rec.channels}

        def run(job):
            a, b, auto = job
            try:
                return _pair_job(cfg, rec, basic, bases, a, b, auto)
            except StageError:
                raise
            except (ValueError, RuntimeError) as exc:
                raise StageError(f"pair {a}/{b}", str(exc)) from exc

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(run, jobs))
        else:
            results = [run(j) for j in jobs]

        pairs_doc = []
        rate = rec.sample_rate_hz
        for (a, b, auto), (tensor, feats, pearson, grids) in zip(jobs, results):
            stem = f"{'auto' if auto else 'pair'}_{_slug(a)}" + ("" if auto else f"__{_slug(b)}")
            files: dict[str, Any] = {}
            labels = [f"feature {i + 1}" for i in range(feats.r)]
            if out.wants("csv"):
                cols = {"pearson": pearson, **{f"feature_{i + 1}": feats.curves[i] for i in range(feats.r)}}
                out.write_with(f"{stem}_features.csv", lambda p: _curves_csv(p, tensor.lags, rate, cols))
                files["features_csv"] = f"{stem}_features.csv"
                files["grids_csv"] = []
                for i, g in enumerate(grids):
                    name = f"{stem}_contribution{i + 1}.csv"
                    out.write_with(name, g.to_csv)
                    files["grids_csv"].append(name)
            if out.wants("svg"):
                name = f"{stem}_features.svg"
                out.write_text(name, render_feature_svg(
                    feats.curves, labels, tensor.lags_seconds, baseline=pearson,
                    normalized=cfg.normalized_display,
                    title=f"{a} / {b}" if not auto else f"{a} autocorrelation",
                    y_label="a_v(lag) / max|a_v|" if cfg.normalized_display else "a_v(lag)",
                ))
                files["features_svg"] = name
                files["grids_svg"] = []
                for i, g in enumerate(grids):
                    name = f"{stem}_contribution{i + 1}.svg"
                    out.write_text(name, render_heatmap_svg(
                        g.values, title=f"{a} / {b} contribution {i + 1} (lambda={feats.eigenvalues[i]:.3g})",
                        x_label=f"z ({b})", y_label=f"y ({a})"))
                    files["grids_svg"].append(name)
            pairs_doc.append({
                "a": a,
                "b": b,
                "kind": "autocorrelation" if auto else "cross",
                "lags_samples": tensor.lags.tolist(),
                "lags_seconds": tensor.lags_seconds.tolist(),
                "pair_counts": tensor.pair_counts.tolist(),
                "pearson": pearson.tolist(),
                "features": feats.to_dict(),
                "files": files,
            })

        report = {
            "schema_version": SCHEMA_VERSION,
            "command": "analyze",
            "lag_convention": "positive lag pairs a[t] with b[t+lag]",
            "config": cfg.to_dict(),
            "recording": _recording_info(rec, cfg),
            "pairs": pairs_doc,
        }
        _finish(out, "analyze", cfg, report)
    except BaseException:
        out.abort()
        raise
    out.commit()
    return report


# ---------------------------------------------------------------------------
# causality


def cmd_causality(cfg: RunConfig) -> dict[str, Any]:
    cfg.validate()
    rec = _load(cfg)
    n_pairs = len(rec.channels) * (len(rec.channels) - 1)
    if n_pairs > 2 * cfg.max_pairs:
        raise ConfigError(f"{n_pairs} directed pairs exceed 2 x --max-pairs {cfg.max_pairs}")
    rate = rec.sample_rate_hz
    delays = sorted(set(int(d) for d in cfg.delays))
    horizon = cfg.max_delay_seconds if cfg.max_delay_seconds is not None else cfg.max_lag_seconds
    max_delay = max(int(round(horizon * rate)), delays[-1], 1)

    out = Outputs(cfg)
    try:
        cmap = pairwise_causality_map(
            rec, delays, BasisSpec(cfg.m), cfg.r, max_delay=max_delay, pnorm=cfg.pnorm(),
            center=cfg.center, mode=cfg.pooling, marginal_removal=cfg.marginal_removal, workers=cfg.workers,
        )
        peak = cmap.max_per_delay
        panels = []
        for col, d in enumerate(delays):
            mat = cmap.matrix(d)
            entry: dict[str, Any] = {"delay_samples": d, "delay_seconds": d / rate, "max": float(peak[col])}
            if out.wants("csv"):
                name = f"causality_delay_{d}.csv"

                def write(p: Path, mat=mat) -> None:
                    with p.open("w") as fh:
                        fh.write(",".join(["reason\\result", *rec.channels]) + "\n")
                        for i, a in enumerate(rec.channels):
                            cells = ["" if np.isnan(v) else repr(float(v)) for v in mat[i]]
                            fh.write(",".join([a, *cells]) + "\n")

                out.write_with(name, write)
                entry["csv"] = name
            if out.wants("svg"):
                name = f"causality_delay_{d}.svg"
                out.write_text(name, render_heatmap_svg(
                    mat, scale=float(peak[col]) or 1.0, row_labels=rec.channels, col_labels=rec.channels,
                    title=f"delay {d / rate:.3g} s (max {peak[col]:.3g})",
                    x_label="result (p-normalized)", y_label="reason (earlier)"))
                entry["svg"] = name
            panels.append(entry)

        curves_doc = []
        for (a, b), curve in cmap.curves.items():
            stem = f"cause_{_slug(a)}__{_slug(b)}"
            files: dict[str, str] = {}
            seconds = curve.delays / rate
            if out.wants("csv"):
                cols = {"score": curve.scores,
                        **{f"feature_{i + 1}": curve.features.curves[i] for i in range(curve.features.r)}}
                out.write_with(f"{stem}.csv", lambda p, c=curve, cols=cols: _curves_csv(p, c.delays, rate, cols))
                files["csv"] = f"{stem}.csv"
            if out.wants("svg"):
                out.write_text(f"{stem}.svg", render_feature_svg(
                    [curve.scores, *curve.features.curves],
                    ["score", *[f"feature {i + 1}" for i in range(curve.features.r)]],
                    seconds, normalized=cfg.normalized_display, title=f"{a} -> {b}", x_label="delay [s]"))
                files["svg"] = f"{stem}.svg"
            curves_doc.append({
                "reason": a,
                "result": b,
                "delays_samples": curve.delays.tolist(),
                "scores": curve.scores.tolist(),
                "scores_at_panels": cmap.scores[(a, b)].tolist(),
                "features": curve.features.to_dict(),
                "files": files,
            })

        report = {
            "schema_version": SCHEMA_VERSION,
            "command": "causality",
            "lag_convention": "reason[t] paired with result[t+delay], delay >= 0",
            "config": cfg.to_dict(),
            "recording": _recording_info(rec, cfg),
            "normalization": {name: model_summary(fit) for name, fit in cmap.normalization.items()},
            "delays_samples": delays,
            "delays_seconds": [d / rate for d in delays],
            "max_per_delay": peak.tolist(),
            "panels": panels,
            "curves": curves_doc,
        }
        _finish(out, "causality", cfg, report)
    except BaseException:
        out.abort()
        raise
    out.commit()
    return report


# ---------------------------------------------------------------------------
# synth


def cmd_synth(spec_path: str | Path, out_path: str | Path) -> Recording:
    spec = SynthSpec.from_json(spec_path)
    rec = generate_synthetic(spec)
    out_path = Path(out_path)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(rec, out_path)
    return rec


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _strs(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", nargs="?", help="input CSV recording")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--channels", type=_strs, help="comma-separated channel subset")
    p.add_argument("--id-column", dest="id_column")
    p.add_argument("--sample-rate", dest="sample_rate", type=float, help="Hz (default 500)")
    p.add_argument("--m", type=int, help="maximal polynomial degree (default 10)")
    p.add_argument("--r", type=int, help="number of PCA features (default 3)")
    p.add_argument("--max-lag", dest="max_lag_seconds", type=float, help="seconds (default 1.0)")
    p.add_argument("--pooling", choices=["interior", "full"])
    p.add_argument("--no-center", dest="center", action="store_const", const=False)
    p.add_argument("--no-marginal-removal", dest="marginal_removal", action="store_const", const=False)
    p.add_argument("--no-autocorrelation", dest="autocorrelation", action="store_const", const=False)
    p.add_argument("--ar-order", dest="ar_order", type=int)
    p.add_argument("--nu-grid", dest="nu_grid", type=_floats)
    p.add_argument("--ema-grid", dest="ema_grid", type=_floats)
    p.add_argument("--delays", type=_ints, help="causality panel delays in samples, e.g. 0,50,100")
    p.add_argument("--max-delay", dest="max_delay_seconds", type=float, help="causality PCA horizon, seconds")
    p.add_argument("--grid-resolution", dest="grid_resolution", type=int)
    p.add_argument("--normalized-display", dest="normalized_display", action="store_const", const=True)
    p.add_argument("--max-pairs", dest="max_pairs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--formats", type=_strs, help="subset of json,csv,svg")
    p.add_argument("--dump-config", dest="dump_config", help="also write the effective config to this path")


_RUN_KEYS = {f for f in RunConfig().to_dict()}


def build_config(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(ns.config) if ns.config else RunConfig()
    doc = cfg.to_dict()
    for key, value in vars(ns).items():
        if key in _RUN_KEYS and value is not None:
            doc[key] = value
    return RunConfig.from_dict(doc).validate()


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcrlag", description="Lag-resolved multi-feature dependency analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("analyze", help="per-pair lag features, contributions and Pearson baseline"))
    _add_run_flags(sub.add_parser("causality", help="multi-feature Granger causality map"))
    ps = sub.add_parser("synth", help="generate a synthetic recording from a JSON spec")
    ps.add_argument("spec", help="synthetic spec (JSON)")
    ps.add_argument("out", help="output CSV path")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if ns.command == "synth":
            rec = cmd_synth(ns.spec, ns.out)
            log.info("wrote %d x %d samples to %s", len(rec.channels), rec.length, ns.out)
            return 0
        cfg = build_config(ns)
        if ns.dump_config:
            cfg.save(ns.dump_config)
        report = cmd_analyze(cfg) if ns.command == "analyze" else cmd_causality(cfg)
        log.info("%s: wrote report to %s", report["command"], cfg.output)
        return 0
    except (OSError, InputError, ConfigError, KeyError, json.JSONDecodeError) as exc:
        print(f"hcrlag: input/config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"hcrlag: analysis failed in stage {exc.stage}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"hcrlag: analysis failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
