"""Command-line driver: ``wesbench <subcommand> --config run.json [inputs...]``.

Subcommands

``reference``   unbiased ground-truth trajectories plus a TICA model
``tica-fit``    refit the TICA model on an existing ground-truth file
``we-run``      weighted-ensemble run (resumes from its checkpoint)
``benchmark``   metrics, ``report.json`` and SVG figures
``report``      print a saved report as a table

Exit status is 0 on success, 2 for configuration errors, 3 for numeric
failures and 1 for I/O or malformed input files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io as _io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plots
from .config import BenchmarkConfig
from .core import Conformation, Ensemble, Trajectory, Walker, WeightedFrameSet, WeightSource
from .errors import ConfigError, FormatError, NumericError, WesbenchError
from .io import read_json, read_wetb, write_json, write_wetb
from .macrostates import fit_macrostates
from .metrics import ReportConfig, MetricReport, bad_features, build_report, histogram_pair, \
    kde_grid_masses, radius_of_gyration, weighted_kde
from .msm import RectilinearGrid, assign_bins, msm_from_points, msm_reweight
from .propagate import default_threads, run_reference
from .tica import TicaModel, fit_on_trajectories, project_frames
from .we import MabBinning, WeConfig, run_we

log = logging.getLogger("wesbench")

GT_FILE = "gt.wetrj"
GT_META = "gt.json"
TICA_FILE = "tica_model.json"
WE_DIR = "we"
WALKER_COLUMNS = ["iteration", "walker_id", "parent_id", "weight", "broken", "frame_start",
                  "frame_count"]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _config_hash(cfg: BenchmarkConfig, *sections) -> str:
    d = cfg.to_dict()
    # neither the thread count nor the output location changes any result
    d["propagator"].pop("n_threads", None)
    d.pop("output_dir", None)
    if sections:
        d = {k: d[k] for k in sections}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _threads(cfg):
    n = cfg.propagator["n_threads"]
    return default_threads() if n is None else max(1, min(n, default_threads()))


# -- reference / tica -------------------------------------------------------------------

def _fit_tica(cfg: BenchmarkConfig, trajs):
    return fit_on_trajectories(trajs, cfg.feature_spec(), cfg.tica["lag"], cfg.tica["n_components"])


def cmd_reference(cfg: BenchmarkConfig, out: Path):
    prop = cfg.propagator_config(cfg.seeds["reference"])
    trajs = run_reference(prop, cfg.reference_starts(), cfg.reference["segments_each"], _threads(cfg))
    frames = np.concatenate([t.frames for t in trajs])
    write_wetb(out / GT_FILE, frames)
    write_json(out / GT_META, {
        "lengths": [len(t) for t in trajs],
        "save_stride": prop.save_interval,
        "dt": prop.dt,
        "seed": cfg.seeds["reference"],
        "system": cfg.potential().to_dict(),
    })
    model = _fit_tica(cfg, trajs)
    model.save(out / TICA_FILE)
    log.info("reference: %d trajectories, %d frames; TICA rank %d, eigenvalues %s",
             len(trajs), len(frames), model.rank, np.round(model.eigenvalues[:4], 4))
    return 0


def load_gt(path: Path):
    """Ground-truth trajectories, split by the lengths in the sidecar file when present."""
    frames, _ = read_wetb(path)
    meta_path = path.with_name(GT_META) if path.suffix else path / GT_META
    lengths = [len(frames)]
    stride, dt = 1, 1.0
    if meta_path.exists():
        meta = read_json(meta_path)
        lengths, stride, dt = meta["lengths"], meta["save_stride"], meta["dt"]
        if sum(lengths) != len(frames):
            raise FormatError(f"{meta_path} lengths do not match {path}")
    bounds = np.cumsum([0] + list(lengths))
    return [Trajectory(frames[a:b], stride, dt) for a, b in zip(bounds[:-1], bounds[1:])]


def cmd_tica_fit(cfg: BenchmarkConfig, out: Path, gt_path: Path):
    model = _fit_tica(cfg, load_gt(gt_path))
    model.save(out / TICA_FILE)
    log.info("tica-fit: rank %d, eigenvalues %s", model.rank, np.round(model.eigenvalues[:4], 4))
    return 0


# -- weighted ensemble ------------------------------------------------------------------

def _ensemble_to_dict(ens: Ensemble, next_id: int):
    return {
        "iteration": ens.iteration,
        "next_id": next_id,
        "walkers": [{"id": w.id, "parent_id": w.parent_id, "weight": w.weight,
                     "iteration": w.iteration, "state": w.state.positions.tolist(),
                     "pcoord": w.pcoord.tolist()} for w in ens.walkers],
    }


def _ensemble_from_dict(d):
    walkers = [Walker(w["id"], Conformation(np.array(w["state"], dtype=np.float32)), w["weight"],
                      w["parent_id"], w["iteration"], np.array(w["pcoord"], dtype=float))
               for w in d["walkers"]]
    return Ensemble(walkers, d["iteration"]), d["next_id"]


def _iter_file(we_dir: Path, it: int) -> Path:
    return we_dir / f"iter_{it:06d}.wetb"


def _walker_rows(rec, base):
    off = rec.frame_offsets
    fin = rec.final_pcoords
    for k in range(len(rec.walker_ids)):
        yield [rec.iteration, int(rec.walker_ids[k]), int(rec.parent_ids[k]), repr(float(rec.weights[k])),
               int(rec.broken[k]), base + int(off[k]), int(rec.frame_counts[k]),
               *[repr(float(v)) for v in fin[k]]]


def cmd_we(cfg: BenchmarkConfig, out: Path, tica_path: Path, gt_path=None, fresh=False):
    model = TicaModel.load(tica_path)
    we_dir = out / WE_DIR
    we_dir.mkdir(parents=True, exist_ok=True)
    state_path = we_dir / "state.json"
    key = _config_hash(cfg, "system", "propagator", "we", "seeds") + _sha256(tica_path)[:16]

    resume, rows, bins_hist, events, base = None, [], [], [], 0
    if state_path.exists() and not fresh:
        state = read_json(state_path)
        if state.get("key") != key:
            raise ConfigError(f"{state_path} belongs to a different configuration; use --fresh")
        if state.get("finished"):
            log.info("we-run: already finished (%s)", state["stop_reason"])
            return 0
        resume = _ensemble_from_dict(state["ensemble"])
        done = resume[0].iteration - 1
        with open(we_dir / "walkers.csv", newline="") as fh:
            rows = [r for r in list(csv.reader(fh))[1:] if int(r[0]) <= done]
        bins_hist = read_json(we_dir / "bins.json")[:done]
        events = state.get("events", [])
        base = state["n_frames"]
        log.info("we-run: resuming at iteration %d", resume[0].iteration)
    else:
        for p in we_dir.glob("iter_*.wetb"):
            p.unlink()

    cov_ref = None
    if cfg.we["coverage_target"] is not None:
        frames, _ = read_wetb(gt_path or out / GT_FILE)
        cov_ref = project_frames(model, frames, cfg.we["pcoord_dims"])
    dims = cfg.we["pcoord_dims"]
    if resume is not None and cov_ref is not None:
        done_files = [_iter_file(we_dir, it) for it in range(1, resume[0].iteration)]
        prior = [project_frames(model, read_wetb(f)[0], dims) for f in done_files]
        resume = resume + (np.concatenate(prior) if prior else None,)
    wcfg = WeConfig(
        propagator=cfg.propagator_config(cfg.seeds["we"]),
        tica_model=model,
        initial_state=cfg.initial_state(),
        max_iterations=cfg.we["max_iterations"],
        walkers_per_bin=cfg.we["walkers_per_bin"],
        binning=MabBinning(cfg.we["bins_per_dim"], dims, bottleneck_bins=cfg.we["bottleneck_bins"]),
        pcoord_dims=dims,
        coverage_target=cfg.we["coverage_target"],
        coverage_reference=cov_ref,
        coverage_every=cfg.we["coverage_every"],
    )
    header = WALKER_COLUMNS + [f"pcoord{d}" for d in range(dims)]
    progress = {"base": base}

    def write_tables():
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        (we_dir / "walkers.csv").write_text(buf.getvalue())
        write_json(we_dir / "bins.json", bins_hist, indent=None)

    def checkpoint(record, rec, ens, next_id):
        write_wetb(_iter_file(we_dir, rec.iteration), rec.frames, rec.frame_weights)
        rows.extend(_walker_rows(rec, progress["base"]))
        progress["base"] += int(rec.frame_offsets[-1])
        bins_hist.append([e.tolist() for e in rec.bin_edges])
        write_tables()
        write_json(state_path, {"key": key, "finished": False, "n_frames": progress["base"],
                                "events": events + record.events,
                                "ensemble": _ensemble_to_dict(ens, next_id)}, indent=None)

    record = run_we(wcfg, n_threads=_threads(cfg), resume=resume, on_iteration=checkpoint)
    if record.stop_reason == "all_walkers_broken":
        rec = record.iterations[-1]
        checkpoint(record, rec, Ensemble([], rec.iteration + 1), record.next_id)
    events = events + record.events
    n_broken = sum(int(r[4]) for r in rows)
    last_it = int(rows[-1][0]) if rows else 0
    write_json(state_path, {"key": key, "finished": True, "n_frames": progress["base"],
                            "stop_reason": record.stop_reason, "events": events,
                            "ensemble": None}, indent=None)
    write_json(we_dir / "summary.json", {
        "iterations": last_it,
        "stop_reason": record.stop_reason,
        "broken_segments": n_broken,
        "flagged_broken": n_broken > 0,
        "events": events,
        "seed": cfg.seeds["we"],
    })
    if n_broken:
        log.warning("we-run: %d broken segment(s); run flagged", n_broken)
    log.info("we-run: %d iterations, stop reason %s", last_it, record.stop_reason)
    return 0


def load_we(we_dir: Path, burn_in=0):
    """Frames, normalized per-frame weights (equal mass per kept iteration),
    per-frame iteration numbers and the segment frame ranges."""
    files = sorted(we_dir.glob("iter_*.wetb"))
    if not files:
        raise FormatError(f"no iteration files in {we_dir}")
    with open(we_dir / "walkers.csv", newline="") as fh:
        table = list(csv.reader(fh))[1:]
    counts = {}
    for r in table:
        counts.setdefault(int(r[0]), []).append(int(r[6]))
    frames, weights, its, segments, base = [], [], [], [], 0
    kept = [f for f in files if int(f.stem.split("_")[1]) > burn_in] or files[-1:]
    for f in kept:
        it = int(f.stem.split("_")[1])
        fr, w = read_wetb(f)
        frames.append(fr)
        weights.append(w / w.sum())
        its.append(np.full(len(fr), it))
        for n in counts.get(it, []):
            if n > 0:
                segments.append((base, base + n))
                base += n
    w = np.concatenate(weights) / len(kept)
    return np.concatenate(frames), w / w.sum(), np.concatenate(its), segments


# -- benchmark ----------------------------------------------------------------------------

def _weighted_model(cfg, model, frames, weights, segments):
    mode = cfg.metrics["weighting_mode"]
    if mode == "RAW_UNWEIGHTED":
        return WeightedFrameSet.unweighted(frames)
    ws = WeightedFrameSet(frames, weights, WeightSource.WE_WEIGHTED)
    if mode == "WE_WEIGHTED":
        return ws
    return _msm_weighted(cfg, model, frames, segments)


def _msm_weighted(cfg, model, frames, segments):
    k = min(2, model.rank)
    pts = project_frames(model, frames, k)
    grid = RectilinearGrid.from_points(pts, cfg.msm["grid_n"], k)
    msm = msm_from_points(grid, pts, segments, cfg.msm["lag"])
    return msm_reweight(msm, assign_bins(grid, pts), frames)


def _subsample(n, limit=4000):
    return np.arange(n) if n <= limit else np.linspace(0, n - 1, limit).astype(int)


def _kde_grid(points_list, weights_list, n=60):
    allp = np.concatenate(points_list)
    lo, hi = allp.min(0), allp.max(0)
    span = np.where(hi > lo, hi - lo, 1.0)
    xs = np.linspace(lo[0] - 0.1 * span[0], hi[0] + 0.1 * span[0], n)
    ys = np.linspace(lo[1] - 0.1 * span[1], hi[1] + 0.1 * span[1], n)
    dens = []
    for p, w in zip(points_list, weights_list):
        idx = _subsample(len(p))
        ww = w[idx]
        if ww.sum() <= 0:
            dens.append(np.zeros((n, n)))
            continue
        dens.append(kde_grid_masses(weighted_kde(p[idx], ww / ww.sum()), (xs, ys)))
    return xs, ys, dens


def _plots(cfg, out_plots: Path, tica, gt: WeightedFrameSet, we_ws: WeightedFrameSet, model_ws,
           we_its, segments, report: MetricReport):
    out_plots.mkdir(parents=True, exist_ok=True)
    written = []
    k = min(2, tica.rank)
    gt_pts = project_frames(tica, gt.frames, k)
    we_pts = project_frames(tica, we_ws.frames, k)
    if k == 1:
        gt_pts = np.column_stack([gt_pts, np.zeros(len(gt_pts))])
        we_pts = np.column_stack([we_pts, np.zeros(len(we_pts))])
    try:
        xs, ys, dens = _kde_grid([gt_pts, we_pts], [gt.weights, model_ws.weights])
        written.append(plots.contour_overlay(out_plots / "tica_contours.svg", xs, ys, dens,
                                             ["ground truth", f"model ({model_ws.source.value})"]))
    except WesbenchError as exc:
        log.warning("skipping TICA contour plot: %s", exc)
    written.append(plots.scatter(out_plots / "we_iterations.svg", we_pts, we_its,
                                 title="WE frames by iteration", value_label="iteration"))
    written.append(plots.heatmap(out_plots / "contact_map_diff.svg", report.contact_map_diff))

    panels = []
    gt_obs = {"Gyration": radius_of_gyration(gt.frames)}
    md_obs = {"Gyration": radius_of_gyration(model_ws.frames)}
    if gt.n_particles >= 2:
        g_bad, m_bad = bad_features(gt.frames), bad_features(model_ws.frames)
        for name in ("bonds", "angles", "dihedrals"):
            if g_bad[name] is not None:
                gt_obs[name.capitalize()], md_obs[name.capitalize()] = g_bad[name], m_bad[name]
    for name in ("Gyration", "Bonds", "Angles", "Dihedrals"):
        if name not in gt_obs:
            continue
        g, m = gt_obs[name], md_obs[name]
        scale = 180.0 / np.pi if name in ("Angles", "Dihedrals") else 1.0
        mw = model_ws.weights[:, None] if m.ndim == 2 else model_ws.weights
        hp, hq = histogram_pair(g * scale, m * scale, None, mw, cfg.metrics["histogram_bins"])
        unit = " (deg)" if scale != 1.0 else ""
        panels.append((name + unit, hp.edges, [("ground truth", hp.masses), ("model", hq.masses)]))
    written.append(plots.distribution_panels(out_plots / "distributions.svg", panels))

    try:
        n_tics = min(cfg.macrostates["n_tics"], tica.rank)
        tics = project_frames(tica, gt.frames, n_tics)
        n_cl = min(cfg.macrostates["n_clusters"], len(tics))
        macro = fit_macrostates(tics, cfg.msm["lag"], n_cl,
                                min(cfg.macrostates["n_macrostates"], n_cl), cfg.seeds["kmeans"], n_tics)
        labels = macro.assign(project_frames(tica, we_ws.frames, n_tics))
        written.append(plots.scatter(out_plots / "macrostates.svg", we_pts, labels, categorical=True,
                                     title="WE frames by macrostate", value_label="macrostate"))
    except (NumericError, ValueError) as exc:
        log.warning("skipping macrostate plot: %s", exc)

    try:
        msm_ws = _msm_weighted(cfg, tica, we_ws.frames, segments)
        xs, ys, dens = _kde_grid([we_pts, we_pts], [np.full(len(we_pts), 1.0 / len(we_pts)),
                                                    msm_ws.weights])
        written.append(plots.contour_overlay(out_plots / "msm_vs_raw.svg", xs, ys, dens,
                                             ["raw counts", "MSM reweighted"],
                                             title="MSM reweighting"))
    except (NumericError, ValueError) as exc:
        log.warning("skipping MSM overlay plot: %s", exc)
    return [Path(p).name for p in written]


def cmd_benchmark(cfg: BenchmarkConfig, out: Path, gt_path: Path, we_dir: Path, tica_path: Path):
    tica = TicaModel.load(tica_path)
    gt_frames, _ = read_wetb(gt_path)
    gt = WeightedFrameSet.unweighted(gt_frames)
    frames, w, its, segments = load_we(we_dir, cfg.we["burn_in"])
    we_ws = WeightedFrameSet(frames, w, WeightSource.WE_WEIGHTED)
    model_ws = _weighted_model(cfg, tica, frames, w, segments)

    summary_path = we_dir / "summary.json"
    summary = read_json(summary_path) if summary_path.exists() else {}
    iter_hash = hashlib.sha256("".join(_sha256(p) for p in sorted(we_dir.glob("iter_*.wetb"))).encode())
    prov = {
        "gt_sha256": _sha256(gt_path),
        "we_sha256": iter_hash.hexdigest(),
        "tica_sha256": _sha256(tica_path),
        "config_sha256": _config_hash(cfg),
        "weighting_mode": cfg.metrics["weighting_mode"],
        "seeds": cfg.seeds,
        "we_stop_reason": summary.get("stop_reason"),
        "we_broken_segments": summary.get("broken_segments", 0),
        "we_flagged_broken": summary.get("flagged_broken", False),
    }
    rcfg = ReportConfig(cfg.metrics["histogram_bins"], cfg.metrics["kl_epsilon"],
                        cfg.metrics["coverage_grid"])
    report = build_report(gt, model_ws, tica, rcfg, prov)
    report.provenance["plots"] = _plots(cfg, out / "plots", tica, gt, we_ws, model_ws, its,
                                        segments, report)
    write_json(out / "report.json", report.to_dict())
    print(report.table())
    return 0


def cmd_report(cfg, out: Path, report_path: Path):
    report = MetricReport.from_dict(read_json(report_path))
    print(report.table())
    prov = report.provenance
    if prov.get("we_flagged_broken"):
        print(f"WARNING: model run flagged broken ({prov.get('we_broken_segments')} broken segments)")
    return 0


# -- entry point --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="wesbench", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_, *inputs):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="benchmark config (JSON)")
        s.add_argument("--seed", type=int, default=None, help="override all config seeds")
        for arg, h in inputs:
            s.add_argument(arg, nargs="?", default=None, help=h)
        return s

    add("reference", "run ground-truth trajectories and fit TICA")
    add("tica-fit", "fit TICA on a ground-truth file", ("gt", "ground-truth .wetrj file"))
    s = add("we-run", "run weighted ensemble", ("tica", "TICA model JSON"))
    s.add_argument("--fresh", action="store_true", help="ignore an existing checkpoint")
    add("benchmark", "compute metrics and plots", ("gt", "ground-truth .wetrj file"),
        ("we", "WE run directory"), ("tica", "TICA model JSON"))
    add("report", "print a saved report", ("report_json", "report.json"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = BenchmarkConfig.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg = cfg.with_seed(args.seed)
        out = cfg.out_path
        out.mkdir(parents=True, exist_ok=True)

        def path(value, default):
            return Path(value) if value else out / default

        if args.command == "reference":
            return cmd_reference(cfg, out)
        if args.command == "tica-fit":
            return cmd_tica_fit(cfg, out, path(args.gt, GT_FILE))
        if args.command == "we-run":
            return cmd_we(cfg, out, path(args.tica, TICA_FILE), fresh=args.fresh)
        if args.command == "benchmark":
            return cmd_benchmark(cfg, out, path(args.gt, GT_FILE), path(args.we, WE_DIR),
                                 path(args.tica, TICA_FILE))
        return cmd_report(cfg, out, path(args.report_json, "report.json"))
    except ConfigError as exc:
        where = f"{exc.path}: " if exc.path else ""
        print(f"config error: {where}{exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except WesbenchError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
