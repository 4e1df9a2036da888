"""Command-line surface: synthesize data, train flat or tree models,
evaluate, predict, and inspect codevectors as images.

Commands: synth, train, eval, predict, inspect. Exit codes: 0 success,
1 usage error, 2 data/load error, 3 internal invariant violation. The
ODA_SEED environment variable overrides the configured training seed.
Config files are flat `key = value` text; command-line flags override
file values.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .anneal import AnnealParams, AnnealState, run_oda
from .bregman import GENERALIZED_KL, SQUARED_EUCLIDEAN, DivergenceKind
from .data import Dataset, SampleStream, gen_circles, gen_gaussians, load_csv, load_idx, save_csv
from .errors import DataError, InternalError, UsageError
from .metrics import emit_history, eval_accuracy, eval_distortion, evaluate
from .modelio import load_model, predict_dataset, save_model
from .tree import OdaTree, TreeParams, run_tree, tree_stats
from .wavelet import level_shape

MODES = ("flat", "tree", "multires")

CONFIG_KEYS = {
    "mode", "dataset", "out", "seed", "policy", "budget", "init",
    "divergence", "gkl_floor", "t_max", "t_min", "t_min_ratio", "gamma",
    "k_max", "eps_c", "eps_n", "eps_r", "delta", "step_a", "step_b",
    "check_every", "level_budget", "calibration", "max_depth",
    "wavelet_levels", "floor_ratios", "eval_each_level",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _opt_float(text: str):
    if text in ("auto", "none", ""):
        return None
    return float(text)


def _opt_int(text: str):
    if text in ("none", ""):
        return None
    return int(text)


def read_config(path) -> dict:
    """Flat key = value config; '#' starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def load_dataset_spec(spec: str) -> Dataset:
    """Dataset specs: csv:PATH[?label=COL|label=-][&shape=HxW],
    idx:IMAGES,LABELS, gaussians:k=v&..., circles:k=v&...; a bare path is
    treated as CSV. label=- ignores a label column; shape reshapes rows
    into images."""
    kind, sep, rest = spec.partition(":")
    if not sep:
        kind, rest = "csv", spec
    if kind == "csv":
        path, _, query = rest.partition("?")
        label = None
        forced_unlabeled = False
        shape = None
        for item in filter(None, query.split("&")):
            key, sep2, value = item.partition("=")
            if key == "label" and sep2:
                if value == "-":
                    forced_unlabeled = True
                else:
                    label = value
            elif key == "shape" and sep2:
                shape = tuple(int(v) for v in value.split("x"))
            else:
                raise UsageError(f"bad csv spec parameter {item!r}")
        if label is None and _csv_has_label_header(path):
            label = "label"
        dataset = load_csv(path, label_column=label)
        if forced_unlabeled:
            dataset = Dataset(dataset.samples)
        if shape is not None:
            if int(np.prod(shape)) != int(np.prod(dataset.feature_shape)):
                raise UsageError(f"shape {shape} does not match "
                                 f"{dataset.feature_shape[0]} features per row")
            dataset = Dataset(dataset.samples.reshape((len(dataset),) + shape),
                              dataset.labels)
        return dataset
    if kind == "idx":
        images, sep2, labels = rest.partition(",")
        if not sep2:
            raise UsageError("idx spec needs 'idx:IMAGES,LABELS'")
        return load_idx(images, labels)
    if kind in ("gaussians", "circles"):
        kv = {}
        for item in filter(None, rest.split("&")):
            key, sep2, value = item.partition("=")
            if not sep2:
                raise UsageError(f"bad generator parameter {item!r}")
            kv[key] = value
        return _generate(kind, kv)
    raise UsageError(f"unknown dataset spec kind {kind!r}")


def _csv_has_label_header(path) -> bool:
    try:
        with open(path) as fh:
            first = fh.readline()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return "label" in [cell.strip() for cell in first.strip().split(",")]


def _generate(kind: str, kv: dict) -> Dataset:
    try:
        seed = int(kv.get("seed", "0"))
        n = int(kv.get("n", "1500"))
        if kind == "circles":
            radii = [float(v) for v in kv.get("radii", "1,2").split(",")]
            noise = float(kv.get("noise", "0.1"))
            return gen_circles(seed, n // len(radii), radii, noise)
        centers = [[float(v) for v in c.split(",")]
                   for c in kv.get("centers", "-3,0|3,0").split("|")]
        std = float(kv.get("std", "1.0"))
        return gen_gaussians(seed, n // len(centers), centers, std)
    except ValueError as exc:
        raise UsageError(f"bad {kind} parameters: {exc}") from None


def _divergence_from(cfg: dict) -> DivergenceKind:
    tag = cfg.get("divergence", SQUARED_EUCLIDEAN)
    if tag not in (SQUARED_EUCLIDEAN, GENERALIZED_KL):
        raise UsageError(f"divergence must be {SQUARED_EUCLIDEAN} or {GENERALIZED_KL}")
    return DivergenceKind(tag, float(cfg.get("gkl_floor", "1e-12")))


def _anneal_params(cfg: dict, seed: int) -> AnnealParams:
    return AnnealParams(
        t_max=_opt_float(cfg.get("t_max", "auto")),
        t_min=_opt_float(cfg.get("t_min", "auto")),
        t_min_ratio=float(cfg.get("t_min_ratio", "1e-4")),
        gamma=float(cfg.get("gamma", "0.8")),
        k_max=int(cfg.get("k_max", "256")),
        eps_c=_opt_float(cfg.get("eps_c", "auto")),
        eps_n=_opt_float(cfg.get("eps_n", "auto")),
        eps_r=float(cfg.get("eps_r", "1e-4")),
        delta=float(cfg.get("delta", "0.01")),
        step_a=float(cfg.get("step_a", "2.0")),
        step_b=float(cfg.get("step_b", "0.9")),
        divergence=_divergence_from(cfg),
        seed=seed,
        check_every=int(cfg.get("check_every", "100")),
        level_sample_budget=int(cfg.get("level_budget", "50000")),
        calibration_samples=int(cfg.get("calibration", "200")),
    )


def _merge_config(args, flag_names) -> dict:
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for name in flag_names:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = str(value)
    return cfg


def cmd_synth(args) -> int:
    kv = {"seed": str(args.seed), "n": str(args.n)}
    if args.generator == "circles":
        kv["radii"] = args.radii
        kv["noise"] = str(args.noise_std)
    else:
        kv["centers"] = args.centers
        kv["std"] = str(args.std)
    dataset = _generate(args.generator, kv)
    save_csv(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


_TRAIN_FLAGS = (
    "mode", "dataset", "out", "seed", "policy", "budget", "init", "divergence",
    "gkl_floor", "t_max", "t_min", "t_min_ratio", "gamma", "k_max", "eps_c",
    "eps_n", "eps_r", "delta", "step_a", "step_b", "check_every",
    "level_budget", "calibration", "max_depth", "wavelet_levels",
    "floor_ratios", "eval_each_level",
)


def cmd_train(args) -> int:
    cfg = _merge_config(args, _TRAIN_FLAGS)
    mode = cfg.get("mode", "flat")
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    if "dataset" not in cfg:
        raise UsageError("a dataset spec is required (--dataset or config)")
    if "out" not in cfg:
        raise UsageError("an output directory is required (--out or config)")
    seed = int(cfg.get("seed", "0"))
    if os.environ.get("ODA_SEED"):
        seed = int(os.environ["ODA_SEED"])
    dataset = load_dataset_spec(cfg["dataset"])
    if len(dataset) == 0:
        raise UsageError("cannot train on an empty dataset")
    params = _anneal_params(cfg, seed)
    policy = cfg.get("policy", "replacement")
    budget = _opt_int(cfg.get("budget", "none" if mode == "flat" else "400000"))
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    initial_point = None
    if cfg.get("init"):
        initial_point = np.array([float(v) for v in cfg["init"].split(",")])

    supervised = dataset.labels is not None
    if mode == "flat":
        hook = None
        if supervised and cfg.get("eval_each_level", "true") == "true":
            flat_xs = dataset.samples.reshape(len(dataset), -1)

            def hook(state, record):
                record.train_accuracy = eval_accuracy(state, Dataset(flat_xs, dataset.labels))
                record.distortion = eval_distortion(state, Dataset(flat_xs, dataset.labels))

        model = run_oda(
            SampleStream(dataset, seed, policy), params,
            initial_point=initial_point, max_samples=budget, level_hook=hook)
        history = model.history
    else:
        levels = int(cfg.get("wavelet_levels", "0"))
        depth = int(cfg.get("max_depth", "1"))
        if mode == "multires":
            if levels == 0:
                levels = depth
            if levels != depth:
                raise UsageError("multires mode requires wavelet_levels = max_depth")
        else:
            levels = 0
        ratios = tuple(float(v) for v in cfg.get("floor_ratios", "0.05,1e-4").split(","))
        tparams = TreeParams(max_depth=depth, wavelet_levels=levels,
                             floor_ratios=ratios, base=params)
        model = run_tree(SampleStream(dataset, seed, policy), tparams, max_samples=budget)
        history = [rec for node in model.nodes() for rec in node.history_records()]

    save_model(out_dir / "model.json", model, mode, dataset.feature_shape)
    emit_history(history, out_dir / "history.csv")

    if isinstance(model, OdaTree):
        stats = tree_stats(model)
        print(f"mode: {mode}  nodes: {len(stats['nodes'])}  "
              f"total codevectors: {stats['total_codevectors']}  "
              f"leaf codevectors: {stats['leaf_codevectors']}  depth: {stats['max_depth']}")
    else:
        print(f"mode: {mode}  levels: {len(history)}  codevectors: {model.k}")
    if supervised:
        print(f"train_accuracy: {eval_accuracy(model, dataset):.4f}")
    unconverged = sum(1 for rec in history if not rec.converged)
    if unconverged:
        print(f"warning: {unconverged} temperature level(s) hit the sample "
              f"budget before converging", file=sys.stderr)
    print(f"model: {out_dir / 'model.json'}")
    print(f"history: {out_dir / 'history.csv'}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_model(args.model)
    dataset = load_dataset_spec(args.dataset)
    if len(dataset) == 0:
        raise UsageError("cannot evaluate on an empty dataset")
    report = evaluate(bundle.model, dataset, temperature=args.temperature)
    rows = [
        ("accuracy", "" if report.accuracy is None else repr(report.accuracy)),
        ("distortion", repr(report.distortion)),
        ("entropy", repr(report.entropy)),
        ("free_energy", repr(report.free_energy)),
        ("temperature", repr(report.temperature)),
        ("codevectors", str(report.codevector_count)),
        ("samples", str(report.samples_evaluated)),
    ]
    for name, value in rows:
        print(f"{name}: {value}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(",".join(name for name, _ in rows) + "\n")
            fh.write(",".join(value for _, value in rows) + "\n")
    return 0


def cmd_predict(args) -> int:
    bundle = load_model(args.model)
    label_col = "label" if _csv_has_label_header(args.input) else None
    try:
        dataset = load_csv(args.input, label_column=label_col)
    except DataError as exc:
        if "empty file" not in str(exc):
            raise
        dataset = Dataset(np.empty((0, 0)))
    with open(args.out, "w", newline="") as fh:
        fh.write("label\n")
        if len(dataset):
            samples = dataset.samples
            if len(bundle.feature_shape) == 2:
                samples = samples.reshape((len(dataset),) + bundle.feature_shape)
                dataset = Dataset(samples)
            for label in predict_dataset(bundle, dataset):
                fh.write(f"{label}\n")
    print(f"wrote predictions to {args.out}")
    return 0


def _write_pgm(path, matrix) -> None:
    lo = float(matrix.min())
    hi = float(matrix.max())
    if hi > lo:
        scaled = np.round((matrix - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.full(matrix.shape, 128, dtype=np.uint8)
    h, w = matrix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())


def cmd_inspect(args) -> int:
    bundle = load_model(args.model)
    if len(bundle.feature_shape) != 2:
        raise UsageError("inspect needs image-shaped (2D) features")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if bundle.is_tree:
        nodes = list(bundle.model.nodes())
        total_levels = bundle.model.wavelet_levels
    else:
        state: AnnealState = bundle.model
        nodes = [_FlatNodeView(state)]
        total_levels = 0
    selected = [n for n in nodes if args.node in ("all", n.id)]
    if not selected:
        raise UsageError(f"no node with id {args.node!r}")
    written = 0
    for node in selected:
        arrays = node.codebook_arrays()
        if arrays is None:
            continue
        mu, _rho, ids = arrays
        shape = level_shape(bundle.feature_shape, node.resolution_index, total_levels)
        for i in range(mu.shape[0]):
            label = ids[i] if ids[i] is not None else "none"
            name = f"node-{node.id}-cv-{i}-class-{label}.pgm"
            _write_pgm(out_dir / name, np.asarray(mu[i]).reshape(shape))
            written += 1
    print(f"wrote {written} PGM image(s) to {out_dir}")
    return 0


class _FlatNodeView:
    """Presents a flat model as a single root node for inspection."""

    id = "0"
    resolution_index = 0

    def __init__(self, state: AnnealState):
        self._state = state

    def codebook_arrays(self):
        if self._state.k == 0:
            return None
        ids = [self._state.classes[i] for i in self._state.labels]
        return self._state.mu, self._state.rho, ids


def build_parser() -> _Parser:
    parser = _Parser(prog="oda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("generator", choices=("gaussians", "circles"))
    p.add_argument("--n", type=int, default=1500, help="total sample count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--std", type=float, default=1.0, help="gaussians: blob std")
    p.add_argument("--centers", default="-3,0|3,0",
                   help="gaussians: 'x,y|x,y' center list")
    p.add_argument("--radii", default="1,2", help="circles: ring radii")
    p.add_argument("--noise-std", type=float, default=0.1, dest="noise_std")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="flat key=value config file")
    for name in _TRAIN_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--temperature", type=float)
    p.add_argument("--out", help="optional CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict labels for a CSV of inputs")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect", help="write codevector weights as PGM images")
    p.add_argument("--model", required=True)
    p.add_argument("--node", default="all", help="node id or 'all'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
