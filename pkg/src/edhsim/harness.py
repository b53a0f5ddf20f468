"""Monte-Carlo experiment orchestration.

Everything here is deterministic given the experiment's global seed: each
(pair, run, pixel) gets its own generator derived from stable integer keys,
so results do not depend on execution order, and every method within one run
consumes the identical photon stream (paired comparisons).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .binner import StepParams, run_fixed, run_optimized
from .errors import EdhsimError, InvalidParamsError, ParseError, SweepValueError
from .estimator import (
    RHO1_GRID_SIZE,
    bin_to_distance,
    ewh_peak,
    rho1,
    t0_hat,
    t1_hat,
)
from .histogrammer import ewh, hedh, oedh, pedh
from .metrics import boundary_rmse, distance_metrics
from .scene import PixelConfig, Scene, save_depth_map
from .transient import PhotonStream, SimConfig, build_transient, sample_stream, true_quantiles

SCHEMA_VERSION = 1

METHODS = ("oedh", "pedh", "hedh", "ewh32", "ewh1024")
ESTIMATORS = ("t0", "t1", "ewh_peak")
_EDH_METHODS = ("oedh", "pedh", "hedh")
SWEEPABLE_PARAMS = ("k_pct", "gamma", "beta1", "beta2")

# seed-derivation contexts keep independent tools off each other's streams
_CTX_EXPERIMENT = 0
_CTX_FEATURES = 1
_CTX_SIMULATE = 2
_CTX_MEDIAN = 3

FEATURE_MAGIC = b"EDHF"
_FEATURE_HEADER = struct.Struct("<4sIII")


def derive_seed(global_seed: int, *key: int) -> np.random.SeedSequence:
    """Stable per-worker seed from the global seed plus integer key parts."""
    return np.random.SeedSequence((int(global_seed),) + tuple(int(k) for k in key))


def pipeline_stream_seed(global_seed: int, pixel_index: int) -> np.random.SeedSequence:
    """Seed for single-pass pipeline tools (simulate / edh / estimate).

    Shared across those tools so that, e.g., boundary sets written by one
    invocation correspond to the streams another invocation re-derives.
    """
    return derive_seed(global_seed, _CTX_SIMULATE, pixel_index)


def compatible(method: str, estimator: str) -> bool:
    if method in _EDH_METHODS:
        return estimator in ("t0", "t1")
    return estimator == "ewh_peak"


@dataclass(frozen=True)
class ExperimentConfig:
    """One full experiment: scene, sensor, photon pairs, methods, seeds."""

    scene: Scene
    sim: SimConfig = field(default_factory=SimConfig)
    pairs: tuple[tuple[float, float], ...] = ((1.0, 1.0),)
    methods: tuple[str, ...] = ("oedh", "pedh")
    estimators: tuple[str, ...] = ("t0",)
    step: StepParams = field(default_factory=StepParams)
    q: int = 32
    fixed_step_size: float = 1.0
    n_monte_carlo: int = 50
    global_seed: int = 0
    out_dir: Optional[Path] = None
    inlier_thresholds: tuple[float, ...] = (2.0, 10.0)

    def __post_init__(self):
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise InvalidParamsError(f"methods must be a non-empty subset of {METHODS}")
        if not self.estimators or any(e not in ESTIMATORS for e in self.estimators):
            raise InvalidParamsError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        if self.n_monte_carlo < 1:
            raise InvalidParamsError("n_monte_carlo must be >= 1")
        if self.global_seed < 0:
            raise InvalidParamsError("global_seed must be >= 0")
        if self.q < 2:
            raise InvalidParamsError("q must be >= 2")
        if not self.pairs:
            raise InvalidParamsError("need at least one (phi_sig, phi_bkg) pair")
        if self.step.decay_freeze_cycle > self.sim.n_cycles:
            raise InvalidParamsError(
                f"decay_freeze_cycle={self.step.decay_freeze_cycle} exceeds "
                f"n_cycles={self.sim.n_cycles}"
            )
        if self.out_dir is not None:
            object.__setattr__(self, "out_dir", Path(self.out_dir))


@dataclass
class PixelResult:
    """All per-method outputs for one pixel and one seeded stream."""

    stream_checksum: str
    bounds: dict
    histograms: dict
    est_bins: dict
    est_m: dict


def run_pixel_pipeline(
    pixel: PixelConfig,
    sim: SimConfig,
    methods: Sequence[str],
    estimators: Sequence[str],
    step: StepParams,
    q: int,
    fixed_step_size: float,
    seed,
) -> PixelResult:
    """Sample one stream and push it through every requested method.

    All methods consume the identical stream so their errors are directly
    comparable run by run.
    """
    transient = build_transient(pixel, sim)
    stream = sample_stream(transient, sim.n_cycles, seed)
    bounds: dict = {}
    hists: dict = {}
    for m in methods:
        if m == "oedh":
            bounds[m] = oedh(stream, q)
        elif m == "pedh":
            bounds[m] = pedh(stream, q, step)
        elif m == "hedh":
            bounds[m] = hedh(stream, q, fixed_step_size)
        elif m == "ewh32":
            hists[m] = ewh(stream, 32)
        elif m == "ewh1024":
            hists[m] = ewh(stream, 1024)
        else:
            raise InvalidParamsError(f"unknown method {m!r}")
    est_bins: dict = {}
    est_m: dict = {}
    for m in methods:
        for e in estimators:
            if not compatible(m, e):
                continue
            if e == "t0":
                t = t0_hat(bounds[m])
            elif e == "t1":
                t = t1_hat(rho1(bounds[m]))
            else:
                t = ewh_peak(hists[m])
            est_bins[(m, e)] = t
            est_m[(m, e)] = bin_to_distance(t, sim)
    return PixelResult(stream.checksum(), bounds, hists, est_bins, est_m)


@dataclass
class ExperimentResult:
    summary_rows: list
    run_rows: list
    failures: list
    summary_path: Optional[Path] = None
    runs_path: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return not self.failures


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the full (pair x run x pixel x method x estimator) grid.

    A condition that raises is recorded as an error row and the remaining
    conditions keep going; callers should treat a non-empty ``failures`` list
    as a nonzero exit.
    """
    pixels = [(r, c) for r in range(cfg.scene.height) for c in range(cfg.scene.width)]
    truth = cfg.scene.depth_map.depths.astype(np.float64)

    summary_rows: list[dict] = []
    run_rows: list[dict] = []
    failures: list[str] = []

    for pair_idx, (phi_sig, phi_bkg) in enumerate(cfg.pairs):
        est_acc: dict = {
            (m, e): [] for m in cfg.methods for e in cfg.estimators if compatible(m, e)
        }
        truth_acc: dict = {k: [] for k in est_acc}
        bnd_acc: dict = {m: [] for m in cfg.methods if m in ("pedh", "hedh")}
        try:
            for mc in range(cfg.n_monte_carlo):
                for pix_idx, (r, c) in enumerate(pixels):
                    pixel = PixelConfig(float(truth[r, c]), phi_sig, phi_bkg)
                    seed = derive_seed(cfg.global_seed, _CTX_EXPERIMENT, pair_idx, mc, pix_idx)
                    res = run_pixel_pipeline(
                        pixel, cfg.sim, cfg.methods, cfg.estimators,
                        cfg.step, cfg.q, cfg.fixed_step_size, seed,
                    )
                    for (m, e), z_est in res.est_m.items():
                        est_acc[(m, e)].append(z_est)
                        truth_acc[(m, e)].append(pixel.z)
                        run_rows.append({
                            "schema_version": SCHEMA_VERSION,
                            "scene": cfg.scene.label,
                            "phi_sig": phi_sig,
                            "phi_bkg": phi_bkg,
                            "mc_index": mc,
                            "pixel_row": r,
                            "pixel_col": c,
                            "method": m,
                            "estimator": e,
                            "z_true_m": pixel.z,
                            "z_est_m": z_est,
                            "stream_checksum": res.stream_checksum,
                        })
                    if "oedh" in res.bounds:
                        for m in bnd_acc:
                            if m in res.bounds:
                                bnd_acc[m].append(
                                    boundary_rmse(res.bounds[m], res.bounds["oedh"])
                                )
        except EdhsimError as exc:
            failures.append(f"pair ({phi_sig}, {phi_bkg}): {exc}")
            for m in cfg.methods:
                for e in cfg.estimators:
                    if compatible(m, e):
                        summary_rows.append(_error_row(cfg, phi_sig, phi_bkg, m, e, exc))
            continue

        for m in cfg.methods:
            for e in cfg.estimators:
                if not compatible(m, e):
                    continue
                report = distance_metrics(
                    np.asarray(est_acc[(m, e)]).reshape(1, -1),
                    np.asarray(truth_acc[(m, e)]).reshape(1, -1),
                    thresholds=cfg.inlier_thresholds,
                    z_max=cfg.sim.z_max,
                )
                row = {
                    "schema_version": SCHEMA_VERSION,
                    "scene": cfg.scene.label,
                    "phi_sig": phi_sig,
                    "phi_bkg": phi_bkg,
                    "method": m,
                    "estimator": e,
                    "n_runs": cfg.n_monte_carlo,
                    "n_samples": report.n_pixels,
                    "rmse_cm": report.rmse_cm,
                    "mae_cm": report.mae_cm,
                    "status": "ok",
                    "message": "",
                }
                for p in cfg.inlier_thresholds:
                    row[f"inlier_{p:g}_pct"] = report.inlier_pct[float(p)]
                row["boundary_rmse_bins"] = (
                    float(np.mean(bnd_acc[m])) if m in bnd_acc and bnd_acc[m] else ""
                )
                summary_rows.append(row)

    summary_path = runs_path = None
    if cfg.out_dir is not None:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        summary_path = cfg.out_dir / "summary.csv"
        runs_path = cfg.out_dir / "runs.csv"
        _write_csv(summary_path, summary_rows, _summary_fields(cfg))
        _write_csv(runs_path, run_rows, _RUN_FIELDS)
    return ExperimentResult(summary_rows, run_rows, failures, summary_path, runs_path)


def _error_row(cfg, phi_sig, phi_bkg, method, estimator, exc) -> dict:
    row = {
        "schema_version": SCHEMA_VERSION,
        "scene": cfg.scene.label,
        "phi_sig": phi_sig,
        "phi_bkg": phi_bkg,
        "method": method,
        "estimator": estimator,
        "n_runs": cfg.n_monte_carlo,
        "n_samples": "",
        "rmse_cm": "",
        "mae_cm": "",
        "status": "error",
        "message": str(exc),
        "boundary_rmse_bins": "",
    }
    for p in cfg.inlier_thresholds:
        row[f"inlier_{p:g}_pct"] = ""
    return row


def _summary_fields(cfg: ExperimentConfig) -> list[str]:
    fields = [
        "schema_version", "scene", "phi_sig", "phi_bkg", "method", "estimator",
        "n_runs", "n_samples", "rmse_cm", "mae_cm",
    ]
    fields += [f"inlier_{p:g}_pct" for p in cfg.inlier_thresholds]
    fields += ["boundary_rmse_bins", "status", "message"]
    return fields


_RUN_FIELDS = [
    "schema_version", "scene", "phi_sig", "phi_bkg", "mc_index", "pixel_row",
    "pixel_col", "method", "estimator", "z_true_m", "z_est_m", "stream_checksum",
]


def _write_csv(path: Path, rows: list, fieldnames: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# median-tracking comparison (fixed vs optimized stepping)


def median_tracking_experiment(
    bkg_levels: Sequence[float],
    distances: Sequence[float],
    phi_sig: float,
    n_seeds: int,
    sim: SimConfig,
    step: StepParams,
    fixed_step_size: float = 1.0,
    global_seed: int = 0,
    out_path: Optional[Path] = None,
) -> dict:
    """Boundary RMSE of a single median binner, fixed vs optimized stepping.

    For every (background level, distance, seed) one stream is sampled and
    fed to both stepping strategies; the error is the final CV minus the
    population median of the transient. Returns
    ``{(strategy, bkg): rmse_bins}`` and optionally writes a CSV table with
    one row per strategy and one column per background level.
    """
    sq_err = {("fixed", b): [] for b in bkg_levels}
    sq_err.update({("optimized", b): [] for b in bkg_levels})
    for bkg_idx, bkg in enumerate(bkg_levels):
        for d_idx, z in enumerate(distances):
            transient = build_transient(PixelConfig(z, phi_sig, bkg), sim)
            median = float(true_quantiles(transient, [0.5])[0])
            for s_idx in range(n_seeds):
                seed = derive_seed(global_seed, _CTX_MEDIAN, bkg_idx, d_idx, s_idx)
                stream = sample_stream(transient, sim.n_cycles, seed)
                cv_fix = run_fixed(stream, 0.5, fixed_step_size).cv
                cv_opt = run_optimized(stream, 0.5, step).cv
                sq_err[("fixed", bkg)].append((cv_fix - median) ** 2)
                sq_err[("optimized", bkg)].append((cv_opt - median) ** 2)
    table = {key: float(np.sqrt(np.mean(v))) for key, v in sq_err.items()}
    if out_path is not None:
        fields = ["schema_version", "strategy"] + [f"bkg_{b:g}" for b in bkg_levels]
        rows = []
        for strat in ("fixed", "optimized"):
            row = {"schema_version": SCHEMA_VERSION, "strategy": strat}
            row.update({f"bkg_{b:g}": table[(strat, b)] for b in bkg_levels})
            rows.append(row)
        _write_csv(Path(out_path), rows, fields)
    return table


# ---------------------------------------------------------------------------
# hyperparameter sweeps


@dataclass(frozen=True)
class SweepSpec:
    """Vary one stepping parameter over a value list, others held fixed."""

    param: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.param not in SWEEPABLE_PARAMS:
            raise SweepValueError(f"param must be one of {SWEEPABLE_PARAMS}, got {self.param!r}")
        if not self.values:
            raise SweepValueError("need at least one sweep value")


def sweep(spec: SweepSpec, cfg: ExperimentConfig, out_path: Optional[Path] = None) -> list:
    """Average boundary and distance error of the parallel histogrammer
    across the sweep values.

    Every sweep value sees the identical streams (seeds are derived exactly
    as in :func:`run_experiment`), so value-to-value differences are not
    sampling noise. Boundary RMSE is measured against the population
    quantiles of each transient; distance RMSE uses the narrowest-bin
    estimator against the scene truth.
    """
    step_variants = []
    for v in spec.values:
        try:
            step_variants.append(replace(cfg.step, **{spec.param: v}))
        except InvalidParamsError as exc:
            raise SweepValueError(f"{spec.param}={v}: {exc}") from None

    pixels = [(r, c) for r in range(cfg.scene.height) for c in range(cfg.scene.width)]
    truth = cfg.scene.depth_map.depths.astype(np.float64)
    targets = np.arange(1, cfg.q, dtype=np.float64) / cfg.q

    est_acc = {v: [] for v in spec.values}
    truth_acc = {v: [] for v in spec.values}
    bnd_sq = {v: [] for v in spec.values}
    for pair_idx, (phi_sig, phi_bkg) in enumerate(cfg.pairs):
        for mc in range(cfg.n_monte_carlo):
            for pix_idx, (r, c) in enumerate(pixels):
                pixel = PixelConfig(float(truth[r, c]), phi_sig, phi_bkg)
                transient = build_transient(pixel, cfg.sim)
                true_bounds = true_quantiles(transient, targets)
                seed = derive_seed(cfg.global_seed, _CTX_EXPERIMENT, pair_idx, mc, pix_idx)
                stream = sample_stream(transient, cfg.sim.n_cycles, seed)
                for value, step in zip(spec.values, step_variants):
                    bounds = pedh(stream, cfg.q, step)
                    est_acc[value].append(bin_to_distance(t0_hat(bounds), cfg.sim))
                    truth_acc[value].append(pixel.z)
                    bnd_sq[value].extend(((bounds.interior - true_bounds) ** 2).tolist())

    rows = []
    for value in spec.values:
        report = distance_metrics(
            np.asarray(est_acc[value]).reshape(1, -1),
            np.asarray(truth_acc[value]).reshape(1, -1),
            z_max=cfg.sim.z_max,
        )
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "param": spec.param,
            "value": value,
            "n_runs": len(est_acc[value]),
            "boundary_rmse_bins": float(np.sqrt(np.mean(bnd_sq[value]))),
            "distance_rmse_cm": report.rmse_cm,
        })
    if out_path is not None:
        _write_csv(
            Path(out_path), rows,
            ["schema_version", "param", "value", "n_runs", "boundary_rmse_bins", "distance_rmse_cm"],
        )
    return rows


# ---------------------------------------------------------------------------
# channelled binary container (density features, boundary grids)


def write_channel_grid(path, grid: np.ndarray) -> None:
    """Write an (h, w, channels) float32 grid: 16-byte header then payload.

    Header: magic ``EDHF``, u32 width, u32 height, u32 channels, all
    little-endian; payload is little-endian float32, pixel-major
    (row-major over pixels, channels contiguous per pixel).
    """
    arr = np.asarray(grid, dtype=np.float32)
    if arr.ndim != 3:
        raise InvalidParamsError("channel grid must be (height, width, channels)")
    h, w, c = arr.shape
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, w, h, c)
    Path(path).write_bytes(header + arr.astype("<f4").tobytes(order="C"))


def read_channel_grid(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _FEATURE_HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, w, h, c = _FEATURE_HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    expected = _FEATURE_HEADER.size + 4 * w * h * c
    if len(blob) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, got {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=_FEATURE_HEADER.size).reshape(h, w, c)


def export_density_features(
    scene: Scene,
    sim: SimConfig,
    step: StepParams,
    q: int,
    path,
    global_seed: int = 0,
    knot_mode: str = "midpoint",
) -> Path:
    """Write per-pixel interpolated photon densities as a 1024-channel grid.

    Runs the parallel histogrammer on each pixel (using the scene's own
    photon levels) and stores the interpolated density as float32 channels,
    plus a sidecar ``<path>.truth.csv`` with the ground-truth depths.
    """
    arr = np.empty((scene.height, scene.width, RHO1_GRID_SIZE), dtype=np.float32)
    for pix_idx, (r, c, pixel) in enumerate(scene.iter_pixels()):
        transient = build_transient(pixel, sim)
        stream = sample_stream(transient, sim.n_cycles, derive_seed(global_seed, _CTX_FEATURES, pix_idx))
        density = rho1(pedh(stream, q, step), knot_mode=knot_mode)
        arr[r, c, :] = density.values
    path = Path(path)
    write_channel_grid(path, arr)
    save_depth_map(scene.depth_map, Path(str(path) + ".truth.csv"), "csv")
    return path


# ---------------------------------------------------------------------------
# CSV serialization for streams and boundary grids


def dump_stream_csv(stream: PhotonStream, path) -> None:
    """Debug dump: one ``cycle_index,timestamp`` line per photon."""
    with open(path, "w") as fh:
        fh.write("cycle_index,timestamp\n")
        for i in range(stream.n_cycles):
            for t in stream.cycle(i):
                fh.write(f"{i},{float(t)!r}\n")


def write_boundaries_csv(path, grid: np.ndarray) -> None:
    """Write an (h, w, q+1) boundary grid, one pixel per row."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 3:
        raise InvalidParamsError("boundary grid must be (height, width, q+1)")
    q = arr.shape[2] - 1
    fields = ["schema_version", "pixel_row", "pixel_col"] + [f"t_{j}" for j in range(q + 1)]
    rows = []
    for r in range(arr.shape[0]):
        for c in range(arr.shape[1]):
            row = {"schema_version": SCHEMA_VERSION, "pixel_row": r, "pixel_col": c}
            row.update({f"t_{j}": repr(float(arr[r, c, j])) for j in range(q + 1)})
            rows.append(row)
    _write_csv(Path(path), rows, fields)


def read_boundaries_csv(path) -> np.ndarray:
    """Read a boundary grid written by :func:`write_boundaries_csv`."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        t_cols = sorted(
            (f for f in reader.fieldnames or [] if f.startswith("t_")),
            key=lambda s: int(s[2:]),
        )
        if not t_cols:
            raise ParseError(f"{path}: no boundary columns found")
        entries = []
        for row in reader:
            try:
                entries.append(
                    (int(row["pixel_row"]), int(row["pixel_col"]),
                     [float(row[c]) for c in t_cols])
                )
            except (KeyError, ValueError) as exc:
                raise ParseError(f"{path}: bad row: {exc}") from None
    if not entries:
        raise ParseError(f"{path}: empty boundary file")
    h = max(e[0] for e in entries) + 1
    w = max(e[1] for e in entries) + 1
    arr = np.full((h, w, len(t_cols)), np.nan)
    for r, c, vals in entries:
        arr[r, c, :] = vals
    if np.any(np.isnan(arr)):
        raise ParseError(f"{path}: boundary grid has missing pixels")
    return arr
