"""Command-line interface.

Subcommands: ba (single-cluster alignment), jac (joint alignment and
clustering), synth (synthetic data sets), eval (metrics), checkpoint
(save / warm-start load). Exit codes: 0 success, 1 configuration error,
2 data error, 3 runtime error. All randomness flows from --seed.

A config file (``--config``) holds ``key = value`` lines mirroring the
flags; explicit flags win. Unknown keys are rejected. Outputs are staged
in a temporary directory and atomically moved into place on success.
Reports are ``key<TAB>value`` lines; figures are rendered as PNG next to
the delimited outputs.
"""

import argparse
import contextlib
import os
import shutil
import sys
import tempfile

import numpy as np

from . import data as data_mod
from . import figures, metrics
from .ba import run_ba
from .data import DataFormatError, Dataset, load_dataset, load_labels
from .hyper import Hyperparams
from .jac import UNASSIGNED, gibbs_iteration, run_jac
from .transforms import FAMILY_NAMES, make_family

__all__ = ["main"]


class ConfigError(ValueError):
    """Bad flags, config keys or option combinations."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# config keys, their types, and which also exist as hyperparameters
_KEY_TYPES = {
    "family": str,
    "sampler": int,
    "L": int,
    "iters": int,
    "seed": int,
    "gamma_init": float,
    "workers": int,
    "parallel": bool,
    "seeds": str,
    "seed_replication": int,
    "in": str,
    "out": str,
    "format": str,
    "truth": str,
    "opt_budget": int,
    "data_dist": str,
    "bern_a": float,
    "bern_b": float,
    "gauss_mu0": float,
    "gauss_kappa0": float,
    "gauss_a0": float,
    "gauss_b0": float,
    "t_aT": float,
    "gamma_prior_a": float,
    "gamma_prior_b": float,
}
_HP_KEYS = (
    "bern_a",
    "bern_b",
    "gauss_mu0",
    "gauss_kappa0",
    "gauss_a0",
    "gauss_b0",
    "t_aT",
    "gamma_prior_a",
    "gamma_prior_b",
    "data_dist",
)

_DEFAULTS = {
    "family": None,
    "sampler": 1,
    "L": 50,
    "iters": 30,
    "seed": 0,
    "gamma_init": 1.0,
    "workers": 1,
    "parallel": False,
    "seeds": None,
    "seed_replication": 1,
    "in": None,
    "out": None,
    "format": None,
    "truth": None,
    "opt_budget": None,
}


def _parse_config_file(path):
    values = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        typ = _KEY_TYPES[key]
        try:
            if typ is bool:
                values[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                values[key] = typ(raw)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from e
    return values


def _merge_config(args):
    """defaults < config file < explicit flags."""
    cfg = dict(_DEFAULTS)
    hp_over = {}
    if getattr(args, "config", None):
        for key, value in _parse_config_file(args.config).items():
            (hp_over if key in _HP_KEYS else cfg)[key] = value
    for key in _DEFAULTS:
        attr = "input" if key == "in" else key
        val = getattr(args, attr, None)
        if val is not None:
            cfg[key] = val
    return cfg, hp_over


def _resolve_input(path):
    if path is None:
        raise ConfigError("--in is required")
    if os.path.exists(path):
        return path
    root = os.environ.get("TDPMIX_DATA_DIR")
    if root and not os.path.isabs(path):
        candidate = os.path.join(root, path)
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"input not found: {path}")


def _family_for(cfg, ds):
    name = cfg["family"]
    if name is None:
        raise ConfigError("--family is required")
    if name not in FAMILY_NAMES:
        raise ConfigError(f"unknown family {name!r}; choose from {FAMILY_NAMES}")
    compatible = {
        "rotation2d": ("points2d",),
        "affine7": ("images",),
        "curve14": ("curves",),
        "curve13-noamp": ("curves",),
        "identity": ("points2d", "curves", "images"),
    }
    if ds.kind not in compatible[name]:
        raise ConfigError(f"family {name!r} does not apply to {ds.kind} data")
    return make_family(
        name, image_shape=ds.image_shape, curve_length=ds.dim
    )


def _hyper_for(cfg, hp_over, ds, family):
    hp = Hyperparams.for_data(ds.items, ds.kind, family, **hp_over)
    hp.iters = cfg["iters"]
    hp.L = cfg["L"]
    hp.seed = cfg["seed"]
    hp.gamma_init = cfg["gamma_init"]
    hp.opt_budget = cfg["opt_budget"]
    return hp


@contextlib.contextmanager
def _staged_outdir(out):
    if out is None:
        raise ConfigError("--out is required")
    parent = os.path.dirname(os.path.abspath(out)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".tdpmix-", dir=parent)
    try:
        yield tmp
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if os.path.isdir(out):
        shutil.rmtree(out)
    elif os.path.exists(out):
        os.remove(out)
    os.rename(tmp, out)


def _write_report(path, pairs):
    with open(path, "w") as f:
        for key, value in pairs:
            if isinstance(value, float):
                value = f"{value:.10g}"
            f.write(f"{key}\t{value}\n")
    for key, value in pairs:
        if isinstance(value, float):
            value = f"{value:.10g}"
        print(f"{key}\t{value}")


def _write_csv(path, array, header=None):
    array = np.atleast_2d(np.asarray(array))
    with open(path, "w") as f:
        if header:
            f.write(header + "\n")
        for row in array:
            f.write(",".join(f"{v:.12g}" for v in np.atleast_1d(row)) + "\n")


def _write_assignments(path, z):
    with open(path, "w") as f:
        f.write("index,cluster\n")
        for i, zi in enumerate(z):
            f.write(f"{i},{int(zi)}\n")


def _write_aligned(tmp, ds, aligned):
    if ds.kind == "images":
        adir = os.path.join(tmp, "aligned")
        os.makedirs(adir)
        h, w = ds.image_shape
        for i in range(aligned.shape[0]):
            data_mod.write_pgm(
                os.path.join(adir, f"item_{i:05d}.pgm"), aligned[i].reshape(h, w)
            )
    else:
        _write_csv(os.path.join(tmp, "aligned.csv"), aligned)


def _write_mean(tmp, ds, name, vec):
    if ds.kind == "images":
        data_mod.write_pgm(
            os.path.join(tmp, f"{name}.pgm"), vec.reshape(ds.image_shape)
        )
    else:
        _write_csv(os.path.join(tmp, f"{name}.csv"), vec.reshape(1, -1))


def _kind_metrics(ds, before, after, z):
    pairs = []
    if ds.kind == "images":
        pairs.append(("entropy_before", metrics.mean_pixel_entropy(before)))
        pairs.append(("entropy_after", metrics.mean_pixel_entropy(np.clip(after, 0, 1))))
    elif ds.kind == "curves":
        pairs.append(("stddev_before", metrics.stddev_score(before)))
        pairs.append(("stddev_after", metrics.stddev_score(after)))
    try:
        sc_before = metrics.alignment_score(before, z)
        sc_after = metrics.alignment_score(after, z)
        pairs.append(("alignment_before_mean", sc_before.mean))
        pairs.append(("alignment_after_mean", sc_after.mean))
        pairs.append(("alignment_after_std", sc_after.std))
        pairs.append(("alignment_after_stderr", sc_after.stderr))
    except ValueError:
        pass
    return pairs


def _render_figures(tmp, ds, before, after, z, trace_cols):
    if ds.kind == "images":
        figures.save_mean_images(
            os.path.join(tmp, "fig_means.png"),
            before.mean(axis=0),
            after.mean(axis=0),
            ds.image_shape,
        )
    elif ds.kind == "curves":
        figures.save_curve_overlays(
            os.path.join(tmp, "fig_curves.png"), before, after, z
        )
    else:
        figures.save_points_scatter(
            os.path.join(tmp, "fig_points.png"), before, after, z
        )
    if trace_cols:
        figures.save_trace_plot(os.path.join(tmp, "fig_trace.png"), trace_cols)


def cmd_ba(cfg, hp_over):
    ds = load_dataset(_resolve_input(cfg["in"]), cfg["format"])
    family = _family_for(cfg, ds)
    hp = _hyper_for(cfg, hp_over, ds, family)
    state = run_ba(ds.items, family, hp)
    with _staged_outdir(cfg["out"]) as tmp:
        _write_csv(os.path.join(tmp, "rho.csv"), state.rho)
        _write_aligned(tmp, ds, state.aligned)
        _write_mean(tmp, ds, "mean_before", ds.items.mean(axis=0))
        _write_mean(tmp, ds, "mean_after", state.aligned.mean(axis=0))
        _write_csv(
            os.path.join(tmp, "trace.csv"),
            [[i + 1, v] for i, v in enumerate(state.trace)],
            header="iteration,objective",
        )
        z = np.zeros(ds.n, dtype=int)
        pairs = [
            ("command", "ba"),
            ("family", family.name),
            ("n_items", ds.n),
            ("iterations_run", state.iteration),
            ("objective_final", state.trace[-1] if state.trace else float("nan")),
        ]
        pairs += _kind_metrics(ds, ds.items, state.aligned, z)
        _write_report(os.path.join(tmp, "report.txt"), pairs)
        _render_figures(
            tmp, ds, ds.items, state.aligned, None, {"objective": list(state.trace)}
        )
    return 0


def _parse_seeds_file(path, n):
    labeled = []
    for row in data_mod._parse_csv_rows(path):
        if len(row) != 2:
            raise DataFormatError(f"{path}: seed rows must be 'index,label'")
        idx = int(row[0])
        if not 0 <= idx < n:
            raise DataFormatError(f"{path}: seed index {idx} out of range")
        labeled.append((idx, int(row[1])))
    return labeled


def _jac_outputs(tmp, cfg, ds, family, state, truth):
    _write_assignments(os.path.join(tmp, "z.csv"), state.z)
    if state.best is not None:
        _write_assignments(os.path.join(tmp, "z_best.csv"), state.best[2])
    _write_csv(os.path.join(tmp, "rho.csv"), state.rho)
    _write_aligned(tmp, ds, state.aligned)
    for k in state.live_ids():
        mask = state.z == k
        if mask.any():
            _write_mean(tmp, ds, f"mean_cluster_{k}", state.aligned[mask].mean(axis=0))
    _write_csv(
        os.path.join(tmp, "trace.csv"),
        [list(row) for row in state.trace],
        header="iteration,clusters,gamma,score",
    )
    with open(os.path.join(tmp, "checkpoint.bin"), "wb") as f:
        f.write(data_mod.checkpoint_save(state))

    pairs = [
        ("command", "jac"),
        ("family", family.name),
        ("n_items", ds.n),
        ("iterations_run", state.iteration),
        ("clusters_final", state.n_clusters),
        ("gamma_final", state.gamma),
        ("score_final", state.trace[-1][3] if state.trace else float("nan")),
        ("transform_calls", state.transform_calls),
    ]
    if truth is not None:
        pairs.append(("rand_index", metrics.rand_index(state.z, truth)))
        if state.best is not None:
            pairs.append(("rand_index_best", metrics.rand_index(state.best[2], truth)))
    pairs += _kind_metrics(ds, ds.items, state.aligned, state.z)
    _write_report(os.path.join(tmp, "report.txt"), pairs)

    cols = {
        "clusters": [row[1] for row in state.trace],
        "gamma": [row[2] for row in state.trace],
    }
    if ds.kind == "images":
        ids = [k for k in state.live_ids() if (state.z == k).any()]
        means = [state.aligned[state.z == k].mean(axis=0) for k in ids]
        if means:
            figures.save_cluster_means(
                os.path.join(tmp, "fig_clusters.png"), means, ds.image_shape, ids
            )
    _render_figures(tmp, ds, ds.items, state.aligned, state.z, cols)


def cmd_jac(cfg, hp_over):
    ds = load_dataset(_resolve_input(cfg["in"]), cfg["format"])
    family = _family_for(cfg, ds)
    hp = _hyper_for(cfg, hp_over, ds, family)
    seeds_path = cfg["seeds"]
    if seeds_path in (None, "none", ""):
        labeled = None
    else:
        labeled = _parse_seeds_file(seeds_path, ds.n)
    if cfg["gamma_init"] == 0 and not labeled:
        raise ConfigError("gamma_init 0 requires --seeds (locked clusters)")
    if cfg["sampler"] not in (1, 2):
        raise ConfigError("--sampler must be 1 or 2")
    truth = load_labels(cfg["truth"]) if cfg["truth"] else ds.labels
    state = run_jac(
        ds.items,
        family,
        hp,
        sampler=cfg["sampler"],
        labeled=labeled,
        replication=cfg["seed_replication"],
        workers=cfg["workers"],
        parallel=cfg["parallel"],
    )
    with _staged_outdir(cfg["out"]) as tmp:
        _jac_outputs(tmp, cfg, ds, family, state, truth)
    return 0


def cmd_synth(args):
    kind = args.kind
    seed = args.seed if args.seed is not None else 0
    if kind == "curves":
        ds = data_mod.synth_curves(
            per_base=args.count, magnitude=args.magnitude, seed=seed, noise=args.noise
        )
    elif kind == "points2d":
        radii = [float(v) for v in args.radii.split(",")]
        spreads = [float(v) for v in args.spreads.split(",")]
        ds = data_mod.synth_points2d(
            radii, spreads, [args.count] * len(radii), seed=seed
        )
    elif kind == "images":
        ds = data_mod.synth_images(
            n_classes=args.classes,
            per_class=args.count,
            magnitude=args.magnitude,
            seed=seed,
            noise=args.noise or 0.0,
        )
    else:
        raise ConfigError(f"unknown synth kind {kind!r}")
    with _staged_outdir(args.out) as tmp:
        if kind == "images":
            data_mod.save_dataset(ds, os.path.join(tmp, "images"), "pgm-dir")
        else:
            data_mod.save_dataset(ds, os.path.join(tmp, "data.csv"))
        _write_csv(os.path.join(tmp, "labels.csv"), ds.labels.reshape(-1, 1))
        _write_report(
            os.path.join(tmp, "report.txt"),
            [("command", "synth"), ("kind", kind), ("n_items", ds.n), ("seed", seed)],
        )
    return 0


def cmd_eval(args):
    pred = load_labels(args.pred)
    truth = load_labels(args.truth)
    pairs = [("command", "eval"), ("rand_index", metrics.rand_index(pred, truth))]
    if args.aligned:
        ds = load_dataset(_resolve_input(args.aligned), args.format)
        score = metrics.alignment_score(ds.items, pred)
        pairs += [
            ("alignment_mean", score.mean),
            ("alignment_std", score.std),
            ("alignment_stderr", score.stderr),
        ]
        if ds.kind == "images":
            pairs.append(("entropy", metrics.mean_pixel_entropy(ds.items)))
        elif ds.kind == "curves":
            pairs.append(("stddev_score", metrics.stddev_score(ds.items)))
    for key, value in pairs:
        if isinstance(value, float):
            value = f"{value:.10g}"
        print(f"{key}\t{value}")
    if args.out:
        _write_report(args.out, pairs)
    return 0


def cmd_checkpoint(args, cfg, hp_over):
    if args.action == "save":
        src = args.ckpt or os.path.join(args.run or "", "checkpoint.bin")
        if not os.path.exists(src):
            raise FileNotFoundError(f"checkpoint not found: {src}")
        blob = open(src, "rb").read()
        info = data_mod.checkpoint_info(blob)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(args.out)) or ".")
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, args.out)
        for key, value in sorted(info.items()):
            print(f"{key}\t{value}")
        return 0
    if args.action == "load":
        blob = open(_resolve_input(args.ckpt), "rb").read()
        info = data_mod.checkpoint_info(blob)
        ds = load_dataset(_resolve_input(cfg["in"]), cfg["format"])
        family = make_family(
            info["family"], image_shape=ds.image_shape, curve_length=ds.dim
        )
        state = data_mod.checkpoint_load(blob, ds.items, family, seed=cfg["seed"])
        if ds.n:
            gibbs_iteration(state, sampler=cfg["sampler"])
        truth = load_labels(cfg["truth"]) if cfg["truth"] else ds.labels
        with _staged_outdir(cfg["out"]) as tmp:
            _jac_outputs(tmp, cfg, ds, family, state, truth)
        return 0
    raise ConfigError("checkpoint action must be save or load")


def _build_parser():
    p = _Parser(prog="tdpmix", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--family", default=None)
        sp.add_argument("--iters", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--in", dest="input", default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", default=None, choices=(
            "csv-curves", "csv-points", "pgm-dir", "idx"))
        sp.add_argument("--truth", default=None)
        sp.add_argument("--opt-budget", dest="opt_budget", type=int, default=None)

    ba = sub.add_parser("ba", help="single-cluster Bayesian alignment")
    common(ba)

    jac = sub.add_parser("jac", help="joint alignment and clustering")
    common(jac)
    jac.add_argument("--sampler", type=int, default=None)
    jac.add_argument("--L", type=int, default=None)
    jac.add_argument("--gamma-init", dest="gamma_init", type=float, default=None)
    jac.add_argument("--seeds", default=None)
    jac.add_argument(
        "--seed-replication", dest="seed_replication", type=int, default=None
    )
    jac.add_argument("--workers", type=int, default=None)
    jac.add_argument(
        "--parallel", action="store_const", const=True, default=None,
        help="map/reduce schedule (parameters update once per iteration)",
    )

    synth = sub.add_parser("synth", help="generate synthetic data")
    synth.add_argument("--kind", required=True, choices=("curves", "points2d", "images"))
    synth.add_argument("--out", required=True)
    synth.add_argument("--count", type=int, default=50)
    synth.add_argument("--magnitude", type=float, default=0.3)
    synth.add_argument("--noise", type=float, default=None)
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--radii", default="1,3")
    synth.add_argument("--spreads", default="0.8,0.8")
    synth.add_argument("--classes", type=int, default=10)

    ev = sub.add_parser("eval", help="metrics report")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--aligned", default=None)
    ev.add_argument("--format", default=None)
    ev.add_argument("--out", default=None)

    ck = sub.add_parser("checkpoint", help="save or warm-start from statistics")
    ck.add_argument("action", choices=("save", "load"))
    common(ck)
    ck.add_argument("--ckpt", default=None)
    ck.add_argument("--run", default=None)
    ck.add_argument("--sampler", type=int, default=None)

    return p


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "eval":
            return cmd_eval(args)
        cfg, hp_over = _merge_config(args)
        if args.command == "ba":
            return cmd_ba(cfg, hp_over)
        if args.command == "jac":
            return cmd_jac(cfg, hp_over)
        if args.command == "checkpoint":
            return cmd_checkpoint(args, cfg, hp_over)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"tdpmix: config error: {e}", file=sys.stderr)
        return 1
    except (DataFormatError, FileNotFoundError, IsADirectoryError, NotADirectoryError) as e:
        print(f"tdpmix: data error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures
        if os.environ.get("TDPMIX_DEBUG"):
            raise
        print(f"tdpmix: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
