"""Command-line front end.

Subcommands:
  radmi            write per-section cross-layer uncertainty maps
  baseline NAME    write per-section baseline maps (entropy, msp,
                   ensemble, mcdropout, switches)
  eval             score method maps against a reference and emit
                   per-section CSVs plus an aligned summary table
  synth            materialize a synthetic dataset on disk

Conventions shared by all subcommands:
  - exit 0 on success, 2 on input or config errors, 3 on numerical
    failures; diagnostics go to stderr, tables to stdout
  - flags override values from an optional TOML file (--config)
  - RADMI_LOG sets the log level (DEBUG/INFO/WARNING/ERROR)
  - outputs are byte-identical regardless of --jobs; sections are
    computed by a worker pool and merged in sorted-id order
  - manifests echo the science config only (no paths, no worker
    counts), so reruns of the same data compare clean
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    ensemble_entropy,
    one_minus_msp,
    prediction_switches,
    softmax_entropy,
)
from .dataio import list_sections, load_section, read_tensor, write_tensor
from .exceptions import (
    DegenerateInputError,
    FormatError,
    InvalidPatchError,
    RadmiError,
    ShapeMismatchError,
    SingularCovarianceError,
)
from .metrics import MetricConfig, aggregate_sections, compute_all
from .mi import MIConfig
from .pipeline import AggregationConfig
from .pipeline import radmi as run_radmi
from .report import (
    forward_pass_counts,
    render_map_grid,
    render_metric_bars,
    write_per_section_csv,
    write_summary,
)
from .synthetic import SyntheticSpec, gen_boundary_scene, gen_correlated_field
from .synthetic import generate_miniature_dataset

METHODS = ("radmi", "entropy", "msp", "ensemble", "mcdropout", "switches")
BASELINE_NAMES = METHODS[1:]
SYNTH_KINDS = ("correlated-field", "boundary-scene", "miniature")

NUMERICAL_ERRORS = ("SingularCovarianceError", "LinAlgError")

log = logging.getLogger("radmi")


class UsageError(Exception):
    """Bad flags, bad config file, or missing inputs; maps to exit 2."""


_ERROR_CLASSES = {
    "FormatError": FormatError,
    "ShapeMismatchError": ShapeMismatchError,
    "DegenerateInputError": DegenerateInputError,
    "InvalidPatchError": InvalidPatchError,
    "SingularCovarianceError": SingularCovarianceError,
    "LinAlgError": np.linalg.LinAlgError,
}


def _setup_logging() -> None:
    name = os.environ.get("RADMI_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


# ---------------------------------------------------------------------------
# argument parsing and TOML merging


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="dataset root (contains sections/)")
    p.add_argument("--out", help="output root directory")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--config", help="TOML file with defaults; flags win")


def _add_mi_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--patch", type=int, help="window side, odd, >= 3 (default 7)")
    p.add_argument("--stride", type=int, help="window grid step (default 1)")
    p.add_argument("--epsilon", type=float,
                   help="covariance shrinkage strength (default 1e-3)")
    p.add_argument("--weighting", choices=("resolution", "uniform"),
                   help="layer-pair weighting (default resolution)")
    p.add_argument("--no-normalize-pairs", action="store_true", default=None,
                   help="skip per-pair min-max normalization before fusing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radmi",
        description="Cross-layer uncertainty maps for dense predictors.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("radmi", help="write per-section radmi.npy maps")
    _add_common(p)
    _add_mi_flags(p)
    p.add_argument("--figures", action="store_true", default=None,
                   help="also render map heatmaps as PNGs")

    p = sub.add_parser("baseline", help="write per-section baseline maps")
    p.add_argument("name", choices=BASELINE_NAMES)
    _add_common(p)
    p.add_argument("--figures", action="store_true", default=None,
                   help="also render map heatmaps as PNGs")

    p = sub.add_parser("eval", help="score methods against a reference")
    _add_common(p)
    _add_mi_flags(p)
    p.add_argument("--methods",
                   help="comma-separated subset of " + ",".join(METHODS)
                        + " (default radmi)")
    p.add_argument("--reference",
                   help="method name or directory of <section_id>.npy maps "
                        "(default ensemble)")
    p.add_argument("--bins", type=int, help="histogram bins (default 64)")
    p.add_argument("--thresholds",
                   help="comma-separated binarization thresholds "
                        "(default 0.1..0.9)")
    p.add_argument("--chamfer-pct", type=float, dest="chamfer_pct",
                   help="percentile for chamfer binarization (default 90)")
    p.add_argument("--no-figures", action="store_true", default=None,
                   help="skip PNG figure rendering")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("kind", choices=SYNTH_KINDS)
    p.add_argument("--out", help="output root directory")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--hw", help="grid size as HxW, e.g. 80x80")
    p.add_argument("--channels", type=int, help="field channels (default 4)")
    p.add_argument("--rho", type=float,
                   help="per-channel correlation for correlated-field")
    p.add_argument("--band-width", type=float, dest="band_width",
                   help="boundary band width in pixels (default 3)")
    p.add_argument("--config", help="TOML file with defaults; flags win")

    return parser


def _load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid TOML in {path}: {exc}") from exc


class Settings:
    """Flag values merged over TOML values merged over defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.toml = _load_toml(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default=None):
        val = getattr(self.args, key, None)
        if val is None:
            val = self.toml.get(key, default)
        return val

    def require_dir(self, key: str) -> Path:
        val = self.get(key)
        if not val:
            raise UsageError(f"--{key} is required (flag or config file)")
        return Path(val)

    def flag_off(self, key: str, default: bool) -> bool:
        """Resolve a --no-<thing> style switch into the positive sense."""
        val = getattr(self.args, key, None)
        if val:  # flag given
            return False
        toml_key = key.removeprefix("no_")
        return bool(self.toml.get(toml_key, default))

    def flag_on(self, key: str, default: bool) -> bool:
        val = getattr(self.args, key, None)
        if val:
            return True
        return bool(self.toml.get(key, default))


def _parse_methods(raw) -> tuple:
    if isinstance(raw, str):
        names = [s.strip() for s in raw.split(",") if s.strip()]
    else:
        names = [str(s) for s in raw]
    names = list(dict.fromkeys(names))
    if not names:
        raise UsageError("methods list is empty")
    for name in names:
        if name not in METHODS:
            raise UsageError(
                f"unknown method {name!r}; choose from {', '.join(METHODS)}"
            )
    return tuple(names)


def _parse_thresholds(raw) -> tuple | None:
    if raw is None:
        return None
    if isinstance(raw, str):
        parts = [s.strip() for s in raw.split(",") if s.strip()]
        if not parts:
            raise UsageError("thresholds list is empty")
        try:
            return tuple(float(s) for s in parts)
        except ValueError as exc:
            raise UsageError(f"bad threshold value: {exc}") from exc
    return tuple(float(v) for v in raw)


def _parse_hw(raw) -> tuple | None:
    if raw is None:
        return None
    if isinstance(raw, str):
        for sep in ("x", "X", ","):
            if sep in raw:
                parts = raw.split(sep)
                break
        else:
            raise UsageError(f"bad --hw value {raw!r}; expected HxW")
        try:
            h, w = (int(s) for s in parts)
        except ValueError as exc:
            raise UsageError(f"bad --hw value {raw!r}: {exc}") from exc
        return (h, w)
    h, w = raw
    return (int(h), int(w))


def _mi_config(s: Settings) -> MIConfig:
    return MIConfig(
        patch=int(s.get("patch", 7)),
        stride=int(s.get("stride", 1)),
        epsilon=float(s.get("epsilon", 1e-3)),
    )


def _agg_config(s: Settings) -> AggregationConfig:
    return AggregationConfig(
        weighting=s.get("weighting", "resolution"),
        normalize_per_pair=s.flag_off("no_normalize_pairs", True),
    )


def _metric_config(s: Settings) -> MetricConfig:
    kwargs = {}
    bins = s.get("bins")
    if bins is not None:
        kwargs["bins"] = int(bins)
    thresholds = _parse_thresholds(s.get("thresholds"))
    if thresholds is not None:
        kwargs["thresholds"] = thresholds
    pct = s.get("chamfer_pct")
    if pct is not None:
        kwargs["chamfer_percentile"] = float(pct)
    return MetricConfig(**kwargs)


def _jobs(s: Settings) -> int:
    jobs = int(s.get("jobs", 1))
    if jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {jobs}")
    return jobs


# ---------------------------------------------------------------------------
# map computation, shared by radmi / baseline / eval


def _compute_map(section, method: str, mi_cfg: MIConfig,
                 agg_cfg: AggregationConfig) -> np.ndarray:
    """One method map for one section, as float32 H x W."""
    if method == "radmi":
        out = run_radmi(section, mi_cfg, agg_cfg)
        return out.values.astype(np.float32)
    if method in ("entropy", "msp"):
        if section.probs is None:
            raise FormatError(
                f"section {section.section_id}: probs.npy required by {method}"
            )
        fn = softmax_entropy if method == "entropy" else one_minus_msp
        return fn(section.probs).values.astype(np.float32)
    if method == "ensemble":
        if section.ensemble_probs is None:
            raise FormatError(
                f"section {section.section_id}: ensemble_probs.npy required"
            )
        return ensemble_entropy(section.ensemble_probs).values.astype(np.float32)
    if method == "mcdropout":
        if section.dropout_probs is None:
            raise FormatError(
                f"section {section.section_id}: dropout_probs.npy required"
            )
        out = ensemble_entropy(section.dropout_probs, method_tag="mcdropout")
        return out.values.astype(np.float32)
    if method == "switches":
        if section.epoch_preds is None:
            raise FormatError(
                f"section {section.section_id}: epoch_preds.npy required"
            )
        return prediction_switches(section.epoch_preds).values.astype(np.float32)
    raise UsageError(f"unknown method {method!r}")


def _map_task(task):
    """Pool worker: returns (sid, method, status, payload, fp_count).

    status "ok" carries the map; any other status is the exception class
    name with its message, so the parent can rank it for the exit code.
    """
    root, sid, method, mi_cfg, agg_cfg = task
    try:
        section = load_section(Path(root) / "sections" / sid)
        values = _compute_map(section, method, mi_cfg, agg_cfg)
        count = forward_pass_counts(section).get(method)
        return sid, method, "ok", values, count
    except (RadmiError, np.linalg.LinAlgError, OSError) as exc:
        return sid, method, type(exc).__name__, str(exc), None


def _run_tasks(tasks: list, jobs: int) -> list:
    """Execute map tasks, deterministically ordered regardless of jobs."""
    if jobs == 1 or len(tasks) <= 1:
        return [_map_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_map_task, tasks))


def _reraise(status: str, message: str):
    cls = _ERROR_CLASSES.get(status, FormatError)
    raise cls(message)


def _write_manifest(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_map(values: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(values, path)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_maps(s: Settings, method: str) -> int:
    """Shared body of the radmi and baseline subcommands."""
    dataset = s.require_dir("dataset")
    out = s.require_dir("out")
    jobs = _jobs(s)
    mi_cfg = _mi_config(s)
    agg_cfg = _agg_config(s)
    figures = s.flag_on("figures", False)

    sids = list_sections(dataset)
    tasks = [(str(dataset), sid, method, mi_cfg, agg_cfg) for sid in sids]
    results = sorted(_run_tasks(tasks, jobs), key=lambda r: r[0])

    failures = {}
    section_notes = {}
    maps = {}
    for sid, _method, status, payload, count in results:
        if status != "ok":
            failures[sid] = f"{status}: {payload}"
            log.error("section %s failed: %s", sid, failures[sid])
            continue
        path = out / "sections" / sid / f"{method}.npy"
        _write_map(payload, path)
        maps[sid] = payload
        section_notes[sid] = {
            "forward_passes": count,
            "map": f"sections/{sid}/{method}.npy",
            "shape": list(payload.shape),
        }
        log.info("section %s: wrote %s", sid, path)

    manifest = {
        "command": "radmi" if method == "radmi" else f"baseline {method}",
        "version": __version__,
        "config": {
            "method": method,
            "patch": mi_cfg.patch,
            "stride": mi_cfg.stride,
            "epsilon": mi_cfg.epsilon,
            "weighting": agg_cfg.weighting,
            "normalize_per_pair": agg_cfg.normalize_per_pair,
        },
        "sections": section_notes,
        "failures": failures,
    }
    if method != "radmi":
        # window flags do not apply to baselines; keep the echo honest
        for key in ("patch", "stride", "epsilon", "weighting",
                    "normalize_per_pair"):
            del manifest["config"][key]
    _write_manifest(out / f"{method}_manifest.json", manifest)

    if figures and maps:
        for sid, values in maps.items():
            render_map_grid([(f"{method} {sid}", values)],
                            out / "figures" / f"{method}_{sid}.png")

    if failures:
        for sid, msg in sorted(failures.items()):
            print(f"section {sid} failed: {msg}", file=sys.stderr)
        kinds = {msg.split(":", 1)[0] for msg in failures.values()}
        return 3 if kinds & set(NUMERICAL_ERRORS) else 2
    return 0


def _resolve_reference(reference: str, sids: list, out: Path,
                       dataset: Path, jobs: int, mi_cfg, agg_cfg,
                       cached: dict) -> dict:
    """Reference maps keyed by section id, as float32 arrays.

    `reference` is either a method name (computed like any other map and
    cached alongside them) or a directory holding <section_id>.npy files.
    """
    if reference in METHODS:
        return _gather_maps(reference, sids, out, dataset, jobs,
                            mi_cfg, agg_cfg, cached)
    ref_dir = Path(reference)
    if not ref_dir.is_dir():
        raise UsageError(
            f"--reference {reference!r} is neither a method name nor a "
            "directory"
        )
    maps = {}
    for sid in sids:
        path = ref_dir / f"{sid}.npy"
        if not path.exists():
            raise UsageError(f"reference map missing: {path}")
        maps[sid] = read_tensor(path).astype(np.float32)
    return maps


def _gather_maps(method: str, sids: list, out: Path, dataset: Path,
                 jobs: int, mi_cfg, agg_cfg, cached: dict) -> dict:
    """Per-section maps for one method: reuse files under out/sections
    when present, compute (and persist) the rest."""
    key = method
    if key in cached:
        return cached[key]
    maps = {}
    missing = []
    for sid in sids:
        path = out / "sections" / sid / f"{method}.npy"
        if path.exists():
            maps[sid] = read_tensor(path).astype(np.float32)
        else:
            missing.append(sid)
    if missing:
        tasks = [(str(dataset), sid, method, mi_cfg, agg_cfg)
                 for sid in missing]
        for sid, _m, status, payload, _count in sorted(
                _run_tasks(tasks, jobs), key=lambda r: r[0]):
            if status != "ok":
                _reraise(status, f"section {sid} ({method}): {payload}")
            _write_map(payload, out / "sections" / sid / f"{method}.npy")
            maps[sid] = payload
    cached[key] = maps
    return maps


def _cmd_eval(s: Settings) -> int:
    dataset = s.require_dir("dataset")
    out = s.require_dir("out")
    jobs = _jobs(s)
    mi_cfg = _mi_config(s)
    agg_cfg = _agg_config(s)
    metric_cfg = _metric_config(s)
    methods = _parse_methods(s.get("methods", "radmi"))
    reference = str(s.get("reference", "ensemble"))
    figures = s.flag_off("no_figures", True)

    sids = list_sections(dataset)
    if not sids:
        raise UsageError(f"no sections found under {dataset}")

    cached: dict = {}
    ref_maps = _resolve_reference(reference, sids, out, dataset, jobs,
                                  mi_cfg, agg_cfg, cached)
    method_maps = {
        m: _gather_maps(m, sids, out, dataset, jobs, mi_cfg, agg_cfg, cached)
        for m in methods
    }

    eval_dir = out / "eval"
    reports = {}
    excluded = {}
    for method in methods:
        per_section = {}
        skipped = []
        for sid in sids:
            values = method_maps[method][sid]
            ref = ref_maps[sid]
            if values.shape != ref.shape:
                raise ShapeMismatchError(
                    f"section {sid}: {method} map {values.shape} vs "
                    f"reference {ref.shape}"
                )
            try:
                per_section[sid] = compute_all(values, ref, metric_cfg)
            except DegenerateInputError as exc:
                skipped.append(sid)
                print(f"warning: section {sid} excluded for {method}: {exc}",
                      file=sys.stderr)
        if not per_section:
            raise DegenerateInputError(
                f"no scorable sections left for method {method}"
            )
        reports[method] = aggregate_sections(per_section)
        if skipped:
            excluded[method] = skipped
        write_per_section_csv(reports[method],
                              eval_dir / f"per_section_{method}.csv")

    first = load_section(dataset / "sections" / sids[0])
    counts = forward_pass_counts(first)
    ref_label = reference if reference in METHODS else "external"
    text = write_summary(reports, ref_label, counts, eval_dir / "summary.txt")
    sys.stdout.write(text)

    manifest = {
        "command": "eval",
        "version": __version__,
        "config": {
            "methods": list(methods),
            "reference": ref_label,
            "patch": mi_cfg.patch,
            "stride": mi_cfg.stride,
            "epsilon": mi_cfg.epsilon,
            "weighting": agg_cfg.weighting,
            "normalize_per_pair": agg_cfg.normalize_per_pair,
            "bins": metric_cfg.bins,
            "thresholds": list(metric_cfg.thresholds),
            "chamfer_percentile": metric_cfg.chamfer_percentile,
        },
        "sections": sids,
        "excluded": excluded,
        "forward_passes": counts,
    }
    _write_manifest(eval_dir / "eval_manifest.json", manifest)

    if figures:
        fig_dir = eval_dir / "figures"
        for sid in sids:
            panels = [(f"{m} {sid}", method_maps[m][sid]) for m in methods]
            panels.append((f"reference ({ref_label}) {sid}", ref_maps[sid]))
            render_map_grid(panels, fig_dir / f"section_{sid}.png")
        for method in methods:
            render_metric_bars(
                reports[method], fig_dir / f"metrics_{method}.png",
                f"{method} vs {ref_label}",
            )
    return 0


def _cmd_synth(s: Settings) -> int:
    args = s.args
    out = s.require_dir("out")
    kind = args.kind
    seed = s.get("seed")
    hw = _parse_hw(s.get("hw"))

    if kind == "miniature":
        generate_miniature_dataset(out, seed=int(seed) if seed is not None else 7)
        manifest = {
            "command": "synth", "version": __version__,
            "config": {"kind": kind,
                       "seed": int(seed) if seed is not None else 7},
        }
        _write_manifest(out / "synth_manifest.json", manifest)
        return 0

    spec_kwargs = {"kind": kind.replace("-", "_")}
    if hw is not None:
        spec_kwargs["hw"] = hw
    if seed is not None:
        spec_kwargs["seed"] = int(seed)
    channels = s.get("channels")
    if channels is not None:
        spec_kwargs["channels"] = int(channels)
    rho = s.get("rho")
    if rho is not None:
        spec_kwargs["rho"] = float(rho)
    band_width = s.get("band_width")
    if band_width is not None:
        spec_kwargs["band_width"] = float(band_width)
    spec = SyntheticSpec(**spec_kwargs)

    section_dir = out / "sections" / "s001"
    section_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": "synth", "version": __version__,
        "config": {"kind": kind, "hw": list(spec.hw),
                   "channels": spec.channels, "rho": spec.rho,
                   "band_width": spec.band_width, "seed": spec.seed},
    }
    if kind == "correlated-field":
        feat_a, feat_b, true_mi = gen_correlated_field(spec)
        write_tensor(feat_a, section_dir / "decoder_L1.npy")
        write_tensor(feat_b, section_dir / "decoder_L2.npy")
        manifest["true_mi"] = true_mi
        print(f"true_mi={true_mi:.6f}")
    else:
        layers, band_mask, reference = gen_boundary_scene(spec)
        for i, layer in enumerate(layers, start=1):
            write_tensor(layer, section_dir / f"decoder_L{i}.npy")
        _write_map(reference.values.astype(np.float32),
                   out / "reference" / "s001.npy")
        _write_map(band_mask.astype(np.int32),
                   out / "band_mask" / "s001.npy")
    _write_manifest(out / "synth_manifest.json", manifest)
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings(args)
        if args.command == "radmi":
            return _cmd_maps(settings, "radmi")
        if args.command == "baseline":
            return _cmd_maps(settings, args.name)
        if args.command == "eval":
            return _cmd_eval(settings)
        return _cmd_synth(settings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SingularCovarianceError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (RadmiError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
