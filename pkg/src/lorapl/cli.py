"""Command-line front end: ``lorapl <subcommand> [flags]``.

Settings come from an optional ``key = value`` config file (``--config``)
and are overridden by flags. Outputs are CSV/JSON files in ``--out``.

Exit codes: 0 success, 1 validation error, 2 I/O or snap-provider failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import _accel
from .analysis import (
    DEFAULT_CONVERGENCE_SEED,
    DEFAULT_SF_FLOORS,
    coefficient_progression,
    evaluate_table,
    gateway_reception_histogram,
    reception_summary,
    rmse_convergence,
    sf_feasibility,
)
from .errors import OutOfValidityRange, ProviderUnavailable, ValidationError
from .fitting import Binning, FitResult, fit_ldpl, normal_fit, residual_ecdf
from .models import CityClass, Environment, ModelKind, ModelSpec, load_catalog
from .pipeline import (
    FilterConfig,
    FixtureSnap,
    IdentitySnap,
    LinkBudget,
    OsrmSnap,
    apply_filters,
    link_table,
    read_gateways,
    read_samples,
    write_rejects,
    write_samples,
)
from .synth import DistanceLaw, SynthConfig, generate, write_campaign

log = logging.getLogger("lorapl")

DEFAULT_SUBSET_SIZES = (500, 1000, 2000, 5000, 10_000, 20_000, 30_000, 50_000, 75_000, 100_000)
DEFAULT_MAX_DISTANCES = tuple(float(x) for x in range(1000, 13_001, 1000))


@dataclass
class RunConfig:
    samples: str | None = None
    gateways: str | None = None
    catalog: str | None = None
    column_map: str | None = None
    out: str = "out"
    seed: int = DEFAULT_CONVERGENCE_SEED
    snap: str = "identity"
    max_offset_m: float = 20.0
    min_satellites: int = 5
    max_altitude_m: float | None = None
    bin_width_m: float = 10.0
    d0_m: float = 1000.0
    weighted_fit: bool = False
    subset_sizes: tuple[int, ...] | None = None
    repeats: int = 20
    rmse_on: str = "full"
    max_distances: tuple[float, ...] = DEFAULT_MAX_DISTANCES
    bias_bin_m: float = 500.0
    bias_max_m: float = 13_000.0
    tx_power_dbm: float = 14.0
    tx_gain_dbi: float = 0.0
    rx_gain_dbi: float = 3.0
    fixed_losses_db: float = 0.0
    freq_mhz: float = 868.1
    h_sensor_m: float = 2.0
    city_class: str = CityClass.MEDIUM_SMALL.value
    include_fit: bool = True
    # synth
    count: int = 50_000
    sigma_db: float = 8.0
    truth_n: float = 2.0
    truth_pl_d0: float = 130.0
    distance_law: str = DistanceLaw.LOG_UNIFORM.value
    min_distance_m: float = 50.0
    max_distance_m: float = 13_000.0

    @property
    def budget(self) -> LinkBudget:
        return LinkBudget(self.tx_power_dbm, self.tx_gain_dbi, self.rx_gain_dbi, self.fixed_losses_db)

    @property
    def env(self) -> Environment:
        return Environment(freq_mhz=self.freq_mhz, h_sensor=self.h_sensor_m, city_class=CityClass(self.city_class))

    def bias_edges(self) -> np.ndarray:
        return np.arange(0.0, self.bias_max_m + self.bias_bin_m / 2, self.bias_bin_m)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw):
    if raw is None:
        return None
    kind = _TYPES[key]
    text = str(raw).strip()
    try:
        if "tuple[int" in kind:
            return tuple(int(float(x)) for x in text.replace(";", ",").split(",") if x.strip())
        if "tuple[float" in kind:
            return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {text!r}") from None
    return text


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = Path(path).read_text()
    parser.read_string("[run]\n" + text)
    values = {}
    for key, raw in parser["run"].items():
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ValidationError(f"{path}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        if not Path(args.config).is_file():
            raise ValidationError(f"config file not found: {args.config}")
        values.update(read_config_file(args.config))
    for key in _TYPES:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            values[key] = _coerce(key, flag_val) if isinstance(flag_val, str) else flag_val
    cfg = RunConfig(**values)
    return cfg


def validate(cfg: RunConfig, need: tuple[str, ...]) -> None:
    """Fail before any data is read."""
    for key in need:
        if getattr(cfg, key) is None:
            raise ValidationError(f"--{key.replace('_', '-')} is required for this subcommand")
    for key in ("samples", "gateways", "catalog", "column_map"):
        p = getattr(cfg, key)
        if p is not None and not Path(p).is_file():
            raise ValidationError(f"{key} file not found: {p}")
    positive = ("max_offset_m", "bin_width_m", "d0_m", "repeats", "bias_bin_m", "freq_mhz", "h_sensor_m",
                "count", "max_distance_m", "min_distance_m")
    for key in positive:
        if not getattr(cfg, key) > 0:
            raise ValidationError(f"{key} must be positive, got {getattr(cfg, key)}")
    if cfg.min_satellites < 0:
        raise ValidationError("min_satellites must be >= 0")
    if cfg.max_altitude_m is not None and not math.isfinite(cfg.max_altitude_m):
        raise ValidationError("max_altitude_m must be finite")
    if cfg.sigma_db < 0:
        raise ValidationError("sigma_db must be >= 0")
    if cfg.rmse_on not in ("full", "subset"):
        raise ValidationError("rmse_on must be 'full' or 'subset'")
    CityClass(cfg.city_class)
    DistanceLaw(cfg.distance_law)
    snap_kind = cfg.snap.split(":", 1)[0]
    if snap_kind not in ("identity", "live", "fixture"):
        raise ValidationError(f"--snap must be identity, live:URL or fixture:PATH, got {cfg.snap!r}")
    if snap_kind == "fixture" and not Path(cfg.snap.split(":", 1)[1]).is_file():
        raise ValidationError(f"snap fixture not found: {cfg.snap.split(':', 1)[1]}")
    if snap_kind == "live" and ":" not in cfg.snap:
        raise ValidationError("--snap live:URL needs a URL")


def make_provider(spec: str):
    kind, _, arg = spec.partition(":")
    if kind == "identity":
        return IdentitySnap()
    if kind == "fixture":
        return FixtureSnap.load(arg)
    return OsrmSnap(arg)


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def _clean_json(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean_json(obj.item())
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean_json(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if (isinstance(v, float) and math.isnan(v)) else (repr(v) if isinstance(v, float) else v)
                        for v in r])


# --------------------------------------------------------------------------
# steps shared by subcommands
# --------------------------------------------------------------------------

def _load(cfg: RunConfig):
    mapping = json.loads(Path(cfg.column_map).read_text()) if cfg.column_map else None
    parsed = read_samples(cfg.samples, mapping)
    gateways = read_gateways(cfg.gateways) if cfg.gateways else None
    return parsed, gateways


def _catalog(cfg: RunConfig) -> list[ModelSpec]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return load_catalog(cfg.catalog)


def step_filter(cfg, samples, gateways, out: Path):
    fcfg = FilterConfig(cfg.max_altitude_m, cfg.min_satellites, cfg.max_offset_m, cfg.freq_mhz, cfg.budget)
    outcome = apply_filters(samples, gateways, fcfg, make_provider(cfg.snap))
    with open(out / "clean_samples.csv", "w", newline="") as fh:
        write_samples(outcome.clean, fh)
    with open(out / "rejected.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["packet_id", "gateway_id", "reason"])
        for s, reason in outcome.rejected:
            w.writerow([s.packet_id, s.gateway_id, reason])
    with open(out / "quarantined.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["packet_id", "gateway_id", "error"])
        for s, err in outcome.quarantined:
            w.writerow([s.packet_id, s.gateway_id, err])
    write_json(out / "filter_report.json", outcome.report.to_dict())
    return outcome


def step_fit(cfg, table, out: Path) -> FitResult:
    fit = fit_ldpl(Binning(table.distance_m, table.path_loss_db, cfg.bin_width_m), cfg.d0_m, cfg.weighted_fit)
    write_json(out / "fit.json", fit.to_dict())
    write_csv(out / "ecdf.csv", ["residual_db", "cumulative_probability"], residual_ecdf(fit.residuals))
    return fit


def _ecdf_sup_distance_to_normal(residuals, mu, sigma) -> float:
    if sigma <= 0:
        return math.nan
    pts = residual_ecdf(residuals)
    x = np.array([p[0] for p in pts])
    hi = np.array([p[1] for p in pts])
    lo = np.concatenate([[0.0], hi[:-1]])
    phi = 0.5 * (1.0 + np.vectorize(math.erf)((x - mu) / (sigma * math.sqrt(2.0))))
    return float(max(np.max(np.abs(hi - phi)), np.max(np.abs(lo - phi))))


def step_eval(cfg, table, catalog, out: Path):
    report = evaluate_table(table, catalog, cfg.env, cfg.bias_edges())
    write_csv(out / "model_rmse.csv", ["model", "rmse_db", "count", "mean_error_db"],
              [(s.name, s.rmse_db, s.count, s.mean_error_db) for s in report.scores.values()])
    write_csv(out / "distance_bias.csv", ["model", "lo_m", "hi_m", "count", "mean_db", "p25_db", "p75_db"],
              [(b.model, b.lo_m, b.hi_m, b.count, b.mean_db, b.p25_db, b.p75_db) for b in report.bias])
    warn_list = {s.name: s.validity_warnings for s in report.scores.values() if s.validity_warnings}
    summary = {
        "rmse_db": {s.name: s.rmse_db for s in report.scores.values()},
        "mean_error_db": {s.name: s.mean_error_db for s in report.scores.values()},
        "validity_warnings": warn_list,
    }
    write_json(out / "eval.json", summary)
    return report, summary


def step_progression(cfg, table, out: Path):
    pts = coefficient_progression(table.distance_m, table.path_loss_db, cfg.max_distances, cfg.d0_m, cfg.bin_width_m)
    write_csv(out / "progression.csv", ["max_distance_m", "n", "pl_d0", "sigma", "sample_count", "skipped"],
              [(p.max_distance_m, p.n, p.pl_d0, p.sigma, p.sample_count, p.skipped or "") for p in pts])
    return pts


def step_convergence(cfg, table, out: Path):
    if cfg.subset_sizes is None:
        sizes = [k for k in DEFAULT_SUBSET_SIZES if k <= len(table)] + [len(table)]
        sizes = sorted(set(sizes))
    else:
        sizes = list(cfg.subset_sizes)
    rows = rmse_convergence(table.distance_m, table.path_loss_db, sizes, cfg.repeats, cfg.seed, cfg.d0_m,
                            cfg.bin_width_m, cfg.rmse_on)
    write_csv(out / "convergence.csv",
              ["subset_size", "repeats", "rmse_mean", "rmse_std", "n_mean", "n_std", "pl_d0_mean", "pl_d0_std"],
              [(r.subset_size, r.repeats, r.rmse_mean, r.rmse_std, r.n_mean, r.n_std, r.pl_d0_mean, r.pl_d0_std)
               for r in rows])
    return rows


def step_gateway_stats(samples, out: Path):
    hist = gateway_reception_histogram(samples)
    write_csv(out / "gateway_histogram.csv", ["gateways", "packet_share"], sorted(hist.items()))
    mean, multi = reception_summary(hist)
    return {
        "histogram": hist,
        "mean_receptions": mean,
        "share_multi_gateway": multi,
        "sf7_feasible_share": sf_feasibility(samples, DEFAULT_SF_FLOORS) if samples else None,
    }


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _table(cfg, samples, gateways):
    if not samples:
        raise ValidationError("no valid samples in input")
    return link_table(samples, gateways, cfg.budget)


def cmd_ingest(cfg):
    validate(cfg, ("samples",))
    out = _out_dir(cfg)
    parsed, gateways = _load(cfg)
    with open(out / "rejects.csv", "w", newline="") as fh:
        write_rejects(parsed.rejects, fh)
    unknown = sorted({s.gateway_id for s in parsed.samples} - set(gateways)) if gateways is not None else []
    summary = {
        "valid_rows": len(parsed.samples),
        "rejected_rows": len(parsed.rejects),
        "packets": len({s.packet_id for s in parsed.samples}),
        "unknown_gateways": unknown,
        "gateway_stats": step_gateway_stats(parsed.samples, out),
    }
    write_json(out / "ingest.json", summary)
    if unknown:
        raise ValidationError(f"samples reference unregistered gateways: {', '.join(unknown)}")
    return summary


def cmd_filter(cfg):
    validate(cfg, ("samples", "gateways", "max_altitude_m"))
    out = _out_dir(cfg)
    parsed, gateways = _load(cfg)
    return step_filter(cfg, parsed.samples, gateways, out).report.to_dict()


def cmd_fit(cfg):
    validate(cfg, ("samples", "gateways"))
    out = _out_dir(cfg)
    parsed, gateways = _load(cfg)
    return step_fit(cfg, _table(cfg, parsed.samples, gateways), out).to_dict()


def cmd_eval(cfg):
    validate(cfg, ("samples", "gateways"))
    out = _out_dir(cfg)
    parsed, gateways = _load(cfg)
    table = _table(cfg, parsed.samples, gateways)
    catalog = _catalog(cfg)
    if cfg.include_fit:
        fit = fit_ldpl(Binning(table.distance_m, table.path_loss_db, cfg.bin_width_m), cfg.d0_m, cfg.weighted_fit)
        catalog = catalog + [ModelSpec("fitted-ldpl", ModelKind.LDPL, fit.params)]
    return step_eval(cfg, table, catalog, out)[1]


def cmd_progression(cfg):
    validate(cfg, ("samples", "gateways"))
    out = _out_dir(cfg)
    parsed, gateways = _load(cfg)
    return step_progression(cfg, _table(cfg, parsed.samples, gateways), out)


def cmd_convergence(cfg):
    validate(cfg, ("samples", "gateways"))
    out = _out_dir(cfg)
    parsed, gateways = _load(cfg)
    return step_convergence(cfg, _table(cfg, parsed.samples, gateways), out)


def cmd_synth(cfg):
    validate(cfg, ())
    out = _out_dir(cfg)
    truth = ModelSpec.ldpl("truth", cfg.truth_n, cfg.truth_pl_d0, cfg.d0_m, cfg.sigma_db)
    campaign = generate(SynthConfig(
        ground_truth=truth, sigma_db=cfg.sigma_db, count=cfg.count, distance_law=DistanceLaw(cfg.distance_law),
        min_distance_m=cfg.min_distance_m, max_distance_m=cfg.max_distance_m, seed=cfg.seed, budget=cfg.budget,
        freq_mhz=cfg.freq_mhz, h_sensor=cfg.h_sensor_m, city_class=CityClass(cfg.city_class),
    ))
    write_campaign(campaign, out)
    summary = {"samples": len(campaign.samples), "gateways": len(campaign.gateways), "seed": cfg.seed,
               "truth": {"n": cfg.truth_n, "pl_d0": cfg.truth_pl_d0, "d0": cfg.d0_m, "sigma": cfg.sigma_db}}
    write_json(out / "synth.json", summary)
    return summary


def cmd_report(cfg):
    validate(cfg, ("samples", "gateways"))
    out = _out_dir(cfg)
    parsed, gateways = _load(cfg)
    catalog = _catalog(cfg)
    report: dict = {
        "backend": _accel.BACKEND,
        "ingest": {"valid_rows": len(parsed.samples), "rejected_rows": len(parsed.rejects)},
        "gateway_stats": step_gateway_stats(parsed.samples, out),
    }
    samples = parsed.samples
    if cfg.max_altitude_m is not None:
        outcome = step_filter(cfg, samples, gateways, out)
        report["filter"] = outcome.report.to_dict()
        samples = outcome.clean
    else:
        report["filter"] = "skipped: max_altitude_m not configured"
    table = _table(cfg, samples, gateways)
    fit = step_fit(cfg, table, out)
    mu, sd = normal_fit(fit.residuals)
    report["fit"] = fit.to_dict()
    report["shadowing"] = {
        "mean_db": mu,
        "sigma_db": sd,
        "ecdf_sup_distance_to_normal": _ecdf_sup_distance_to_normal(fit.residuals, mu, sd),
    }
    if cfg.include_fit:
        catalog = catalog + [ModelSpec("fitted-ldpl", ModelKind.LDPL, fit.params)]
    report["eval"] = step_eval(cfg, table, catalog, out)[1]
    report["progression"] = [p.__dict__ for p in step_progression(cfg, table, out)]
    report["convergence"] = [r.__dict__ for r in step_convergence(cfg, table, out)]
    write_json(out / "report.json", report)
    return report


COMMANDS = {
    "ingest": (cmd_ingest, "parse and validate samples.csv"),
    "filter": (cmd_filter, "apply the four-stage filter chain"),
    "fit": (cmd_fit, "fit the log-distance model; fit.json + ecdf.csv"),
    "eval": (cmd_eval, "RMSE per catalog model and distance bias"),
    "progression": (cmd_progression, "coefficients versus maximum link distance"),
    "convergence": (cmd_convergence, "RMSE versus fitting subset size"),
    "synth": (cmd_synth, "generate a synthetic campaign"),
    "report": (cmd_report, "run everything and bundle a JSON report"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="key = value settings file; flags override it")
    a("--samples")
    a("--gateways")
    a("--catalog", help="model catalog JSON (default: shipped catalog)")
    a("--column-map", dest="column_map", help="JSON mapping canonical column -> source column")
    a("--out")
    a("--seed", type=int)
    a("--snap", help="identity | live:URL | fixture:PATH")
    a("--max-offset-m", dest="max_offset_m", type=float)
    a("--min-satellites", dest="min_satellites", type=int)
    a("--max-altitude-m", dest="max_altitude_m", type=float)
    a("--bin-width-m", dest="bin_width_m", type=float)
    a("--d0-m", dest="d0_m", type=float)
    a("--weighted-fit", dest="weighted_fit", action="store_const", const=True)
    a("--subset-sizes", dest="subset_sizes", help="comma-separated sizes")
    a("--repeats", type=int)
    a("--rmse-on", dest="rmse_on", choices=("full", "subset"))
    a("--max-distances", dest="max_distances", help="comma-separated meters")
    a("--freq-mhz", dest="freq_mhz", type=float)
    a("--h-sensor-m", dest="h_sensor_m", type=float)
    a("--tx-power-dbm", dest="tx_power_dbm", type=float)
    a("--rx-gain-dbi", dest="rx_gain_dbi", type=float)
    a("--fixed-losses-db", dest="fixed_losses_db", type=float)
    a("--count", type=int)
    a("--sigma-db", dest="sigma_db", type=float)
    a("--truth-n", dest="truth_n", type=float)
    a("--truth-pl-d0", dest="truth_pl_d0", type=float)
    a("--distance-law", dest="distance_law", choices=[x.value for x in DistanceLaw])
    a("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lorapl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    warnings.simplefilter("ignore", OutOfValidityRange)
    try:
        cfg = build_config(args)
        COMMANDS[args.command][0](cfg)
    except (ValidationError, ValueError) as exc:
        print(f"lorapl {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ProviderUnavailable) as exc:
        print(f"lorapl {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
