"""Command-line interface.

    adagpr train    --dataset DIR --model adagpr ... --out RUN
    adagpr coeffs   --run RUN [--layer L] [--evolution]
    adagpr spectrum --dataset DIR [--kmax K] [--out DIR]
    adagpr bound    --run RUN | --dataset DIR --mu-file PATH --alpha A
    adagpr generate {sbm,hetero} --out DIR ...

Exit codes: 0 success, 2 invalid input, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bounds, models, pipeline
from . import data
from .data import ExperimentConfig, format_float, load_dataset, load_split, write_dataset
from .errors import AdaGPRError, TrainingDivergence, ValidationError
from .graph import compute_spectrum, normalize_adjacency

log = logging.getLogger("adagpr")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3

METRICS_FILE = "metrics.json"
COEFFS_FILE = "coefficients.csv"
BOUND_FILE = "bound.json"
CONFIG_FILE = "config.resolved.json"
SPECTRUM_FILE = "spectrum.csv"
PROFILE_FILE = "profile.csv"
PARAMS_FILE = "params.npz"
RUN_SPLIT_FILE = "split.json"
TIMING_FILE = "timing.json"

# flag name -> ExperimentConfig field
TRAIN_FLAGS = {
    "dataset": str, "model": str, "layers": int, "k": int, "hidden": int, "alpha": float,
    "lambda": float, "dropout": float, "lr": float, "wd1": float, "wd2": float, "wd3": float,
    "epochs": int, "patience": int, "seed": int, "eval_every": int, "split": str,
    "per_class": int, "val_size": int, "test_size": int, "split_seed": int,
}


class UsageError(ValidationError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _prepare_out(path: Path, force: bool):
    if path.exists() and any(path.iterdir()) and not force:
        raise UsageError(f"output directory {path} is not empty (use --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)


def coefficients_csv(best: np.ndarray, trace_epochs, trace_tables) -> str:
    k = best.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snapshot", "layer"] + [f"mu_{i}" for i in range(k)])
    for layer, row in enumerate(best, 1):
        w.writerow(["best", layer] + [format_float(v) for v in row])
    for epoch, table in zip(trace_epochs, trace_tables):
        for layer, row in enumerate(table, 1):
            w.writerow([epoch, layer] + [format_float(v) for v in row])
    return buf.getvalue()


def read_coefficients(path: Path) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Return the best-snapshot table and ``{epoch: table}``."""
    if not path.is_file():
        raise UsageError(f"no coefficient trace at {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["snapshot", "layer"]:
        raise UsageError(f"{path} is not a coefficient trace")
    best, trace = [], {}
    for row in rows[1:]:
        vals = np.array([float(v) for v in row[2:]])
        if row[0] == "best":
            best.append(vals)
        else:
            trace.setdefault(int(row[0]), []).append(vals)
    return np.array(best), {e: np.array(t) for e, t in trace.items()}


def spectrum_csv(eigenvalues) -> str:
    return "index,eigenvalue\n" + "".join(f"{i},{format_float(v)}\n" for i, v in enumerate(eigenvalues, 1))


def profile_csv(profile) -> str:
    return "k,power_sum\n" + "".join(f"{k},{format_float(v)}\n" for k, v in enumerate(profile))


def _format_table(header: Sequence[str], rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


# ---------------------------------------------------------------- train

def resolve_train_config(args) -> ExperimentConfig:
    doc = ExperimentConfig.load(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    for flag in TRAIN_FLAGS:
        value = getattr(args, flag.replace("-", "_"))
        if value is not None:
            doc[flag] = value
    if args.out is not None:
        doc["out"] = args.out
    if args.row_normalize is not None:
        doc["row_normalize"] = args.row_normalize
    cfg = ExperimentConfig.from_dict(doc)
    if not cfg.dataset:
        raise UsageError("no dataset given (--dataset or config 'dataset')")
    if not cfg.out:
        raise UsageError("no output directory given (--out or config 'out')")
    return cfg


def _bound_for_run(prep: pipeline.Prepared, params: models.ParameterSet, best: np.ndarray,
                   test_accuracy: float, R: float = 1.0, delta: float = 0.05,
                   allow_truncated: bool = True, spectrum=None) -> Optional[bounds.BoundReport]:
    spec = prep.spec
    if spec.variant not in ("gcnii", "adagpr", "adagpr-fixed-uniform"):
        return None
    spectrum = spectrum or compute_spectrum(prep.adjacency, "auto")
    if spectrum.truncated and not allow_truncated:
        raise UsageError("spectrum is truncated; pass --allow-truncated to accept it")
    b = [bounds.column_l1_bound(params[f"W{i}"]) for i in range(spec.layers + 1)]
    inp = bounds.BoundInput(
        spectrum=spectrum, mus=list(best), alpha=spec.alpha, b_norms=b,
        num_train=prep.split.train.size, num_test=max(prep.split.test.size, 1),
        x_fro=float(np.linalg.norm(prep.features)), R=R, delta=delta,
        test_risk=None if np.isnan(test_accuracy) else 1.0 - test_accuracy,
    )
    if spec.variant == "gcnii":
        return bounds.evaluate_corollary1(inp)
    return bounds.evaluate_theorem1(inp)


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    out = Path(cfg.out)
    prep = pipeline.prepare(cfg)
    _prepare_out(out, args.force)
    (out / CONFIG_FILE).write_text(cfg.dumps(), encoding="utf-8")
    try:
        from .training import fit

        result = fit(prep.spec, prep.train_cfg, prep.adjacency, prep.features,
                     prep.dataset.labels, prep.split)
    except TrainingDivergence as exc:
        print(f"error: training diverged at epoch {exc.epoch}", file=sys.stderr)
        return EXIT_DIVERGED
    m = result.metrics
    (out / METRICS_FILE).write_text(_dumps(m.to_dict(include_time=False)), encoding="utf-8")
    (out / TIMING_FILE).write_text(_dumps({"wall_seconds": m.wall_seconds}), encoding="utf-8")
    (out / COEFFS_FILE).write_text(
        coefficients_csv(result.best_coefficients, result.trace.epochs, result.trace.tables),
        encoding="utf-8")
    (out / RUN_SPLIT_FILE).write_text(json.dumps(prep.split.to_dict()) + "\n", encoding="utf-8")
    np.savez(out / PARAMS_FILE, **result.params.values)
    if not args.no_analysis:
        spectrum = compute_spectrum(prep.adjacency, "auto")
        (out / SPECTRUM_FILE).write_text(spectrum_csv(spectrum.eigenvalues), encoding="utf-8")
        report = _bound_for_run(prep, result.params, result.best_coefficients, m.test_accuracy,
                                spectrum=spectrum)
        if report is not None:
            (out / BOUND_FILE).write_text(_dumps(report.to_dict()), encoding="utf-8")
    print(f"test_accuracy={m.test_accuracy:.4f} best_epoch={m.best_epoch} epochs_run={m.epochs_run}")
    return EXIT_OK


# ---------------------------------------------------------------- coeffs

def cmd_coeffs(args) -> int:
    run = Path(args.run)
    best, trace = read_coefficients(run / COEFFS_FILE)
    if best.size == 0:
        raise UsageError(f"{run / COEFFS_FILE} holds no coefficients")
    k = best.shape[1]
    if args.evolution:
        layer = args.layer or 1
        if not 1 <= layer <= best.shape[0]:
            raise UsageError(f"layer must lie in [1, {best.shape[0]}]")
        rows = [[e] + [f"{v:.4f}" for v in t[layer - 1]] for e, t in sorted(trace.items())]
        print(f"# layer {layer} coefficient evolution")
        print(_format_table(["epoch"] + [str(i) for i in range(k)], rows))
        return EXIT_OK
    layers = range(1, best.shape[0] + 1) if args.layer is None else [args.layer]
    rows = []
    for layer in layers:
        if not 1 <= layer <= best.shape[0]:
            raise UsageError(f"layer must lie in [1, {best.shape[0]}]")
        rows.append([layer] + [f"{v:.4f}" for v in best[layer - 1]])
    print(_format_table(["layer"] + [str(i) for i in range(k)], rows))
    return EXIT_OK


# ---------------------------------------------------------------- spectrum

def cmd_spectrum(args) -> int:
    ds = load_dataset(args.dataset)
    a = normalize_adjacency(ds.graph)
    spectrum = compute_spectrum(a, args.mode)
    if spectrum.truncated:
        print(f"# {spectrum.truncation_count} eigenvalues not computed (Lanczos)", file=sys.stderr)
        profile = bounds.power_sums(spectrum, args.kmax)
    else:
        profile = bounds.oversmoothing_profile(spectrum, args.kmax)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name in (SPECTRUM_FILE, PROFILE_FILE):
            if (out / name).exists() and not args.force:
                raise UsageError(f"{out / name} exists (use --force to overwrite)")
        (out / SPECTRUM_FILE).write_text(spectrum_csv(spectrum.eigenvalues), encoding="utf-8")
        (out / PROFILE_FILE).write_text(profile_csv(profile), encoding="utf-8")
    print(f"# N={spectrum.num_nodes} method={spectrum.method} "
          f"lambda_max={spectrum.eigenvalues[0]:.6f} lambda_min={spectrum.eigenvalues[-1]:.6f}")
    print(_format_table(["k", "sum|lambda|^k"], [[k, f"{v:.6f}"] for k, v in enumerate(profile)]))
    return EXIT_OK


# ---------------------------------------------------------------- bound

def read_mu_file(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"mu file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if text.startswith("snapshot,layer"):
        return read_coefficients(p)[0]
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            if rows:
                raise UsageError(f"{p}: non-numeric coefficient row {line!r}") from None
            continue  # header
    if not rows or len({len(r) for r in rows}) != 1:
        raise UsageError(f"{p}: need one comma-separated coefficient row per layer")
    return np.array(rows)


def _print_report(report: bounds.BoundReport):
    rows = [[l, f"{s:.6g}", f"{f:.6g}", f"{t:.6g}"] for l, (s, f, t) in
            enumerate(zip(report.spectral_sums, report.first_terms, report.second_terms), 1)]
    print(_format_table(["layer", "spectral_sum", "first_term", "second_term"], rows))
    print(f"complexity_index={report.complexity_index:.6g} gcnii_index={report.gcnii_index:.6g} "
          f"tail_c0={report.tail_c0:.6g} tail_confidence={report.tail_confidence:.6g}")


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_bound(args) -> int:
    if bool(args.run) == bool(args.dataset):
        raise UsageError("give exactly one of --run or --dataset")
    if args.run:
        run = Path(args.run)
        cfg = ExperimentConfig.load(run / CONFIG_FILE)
        prep = pipeline.prepare(cfg)
        prep.split = load_split(run / RUN_SPLIT_FILE)
        with np.load(run / PARAMS_FILE) as z:
            params = models.ParameterSet({n: z[n] for n in z.files})
        best, _ = read_coefficients(run / COEFFS_FILE)
        acc = json.loads((run / METRICS_FILE).read_text(encoding="utf-8"))["test_accuracy"]
        spectrum = compute_spectrum(prep.adjacency, "auto")
        if spectrum.truncated and not args.allow_truncated:
            raise UsageError("spectrum is truncated; pass --allow-truncated to accept it")
        report = _bound_for_run(prep, params, best, acc, R=args.R, delta=args.delta,
                                allow_truncated=True, spectrum=spectrum)
        if report is None:
            raise UsageError(f"no complexity index for model {prep.spec.variant!r}")
        out = Path(args.out) if args.out else run
    else:
        if args.alpha is None or (args.mu_file is None and not args.gcnii):
            raise UsageError("--dataset mode needs --alpha and --mu-file (or --gcnii with --layers)")
        ds = load_dataset(args.dataset)
        spectrum = compute_spectrum(normalize_adjacency(ds.graph), "auto")
        if spectrum.truncated and not args.allow_truncated:
            raise UsageError("spectrum is truncated; pass --allow-truncated to accept it")
        if args.mu_file:
            mus = read_mu_file(args.mu_file)
        else:
            if not args.layers:
                raise UsageError("--gcnii without --mu-file needs --layers")
            mus = np.tile([0.0, 1.0], (args.layers, 1))
        L = mus.shape[0]
        b = _parse_floats(args.b_norms) if args.b_norms else [1.0] * (L + 1)
        if len(b) != L + 1:
            raise UsageError(f"--b-norms needs {L + 1} values (B_0..B_L)")
        M, U = args.m, args.u
        if M is None or U is None:
            if ds.split is None:
                raise UsageError("dataset has no split.json; pass --m and --u")
            M = ds.split.train.size if M is None else M
            U = ds.split.test.size if U is None else U
        inp = bounds.BoundInput(spectrum=spectrum, mus=list(mus), alpha=args.alpha, b_norms=b,
                                num_train=M, num_test=U, x_fro=float(np.linalg.norm(ds.features)),
                                R=args.R, delta=args.delta)
        report = bounds.evaluate_corollary1(inp) if args.gcnii else bounds.evaluate_theorem1(inp)
        out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        target = out / BOUND_FILE
        if target.exists() and not args.force and not args.run:
            raise UsageError(f"{target} exists (use --force to overwrite)")
        target.write_text(_dumps(report.to_dict()), encoding="utf-8")
    _print_report(report)
    return EXIT_OK


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    out = Path(args.out)
    _prepare_out(out, args.force)
    if args.kind == "sbm":
        ds = data.generate_sbm(args.n_per_block, args.blocks, args.p_in, args.p_out,
                          args.features, args.noise, args.seed)
    else:
        ds = data.generate_heterophilous(args.n, args.features, args.seed, num_classes=args.blocks,
                                    p_in=args.p_in, p_out=args.p_out, noise=args.noise)
    write_dataset(ds, out)
    print(f"wrote {ds.num_nodes} nodes, {len(ds.graph.undirected_pairs())} edges to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adagpr", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write run artifacts")
    t.add_argument("--config", help="JSON config path or shipped name (cora, citeseer, pubmed, cora_gcn, heterophilous)")
    for flag, typ in TRAIN_FLAGS.items():
        kwargs = {"type": typ, "default": None}
        if flag == "model":
            kwargs["choices"] = list(models.VARIANTS) + list(models.ALIASES)
        t.add_argument(f"--{flag.replace('_', '-')}", dest=flag, **kwargs)
    t.add_argument("--row-normalize", type=_bool, default=None)
    t.add_argument("--out")
    t.add_argument("--force", action="store_true")
    t.add_argument("--no-analysis", action="store_true", help="skip spectrum.csv and bound.json")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("coeffs", help="print learned GPR coefficients of a run")
    c.add_argument("--run", required=True)
    c.add_argument("--layer", type=int)
    c.add_argument("--evolution", action="store_true")
    c.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("spectrum", help="eigenvalues and oversmoothing profile of a dataset graph")
    s.add_argument("--dataset", required=True)
    s.add_argument("--kmax", type=int, default=10)
    s.add_argument("--mode", choices=["auto", "dense", "lanczos"], default="auto")
    s.add_argument("--out")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_spectrum)

    b = sub.add_parser("bound", help="spectral complexity index (AdaGPR / GCNII)")
    b.add_argument("--run")
    b.add_argument("--dataset")
    b.add_argument("--mu-file")
    b.add_argument("--gcnii", action="store_true")
    b.add_argument("--layers", type=int)
    b.add_argument("--alpha", type=float)
    b.add_argument("--R", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=0.05)
    b.add_argument("--b-norms")
    b.add_argument("--m", type=int)
    b.add_argument("--u", type=int)
    b.add_argument("--allow-truncated", action="store_true")
    b.add_argument("--out")
    b.add_argument("--force", action="store_true")
    b.set_defaults(func=cmd_bound)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("kind", choices=["sbm", "hetero"])
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=150, help="hetero: total nodes")
    g.add_argument("--n-per-block", type=int, default=100)
    g.add_argument("--blocks", type=int, default=3)
    g.add_argument("--p-in", type=float, default=None)
    g.add_argument("--p-out", type=float, default=None)
    g.add_argument("--features", type=int, default=16)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "generate":
        defaults = {"sbm": (data.SBM_P_IN, data.SBM_P_OUT),
                    "hetero": (data.HETERO_P_IN, data.HETERO_P_OUT)}[args.kind]
        args.p_in = defaults[0] if args.p_in is None else args.p_in
        args.p_out = defaults[1] if args.p_out is None else args.p_out
    try:
        return args.func(args)
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (AdaGPRError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
