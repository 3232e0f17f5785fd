"""Command-line front end: train / embed / evaluate / benchmark / plot.

Heavy imports happen inside main() so the ENHOPE_THREADS environment
variable can cap BLAS thread pools before numpy loads them.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_env() -> None:
    threads = os.environ.get("ENHOPE_THREADS")
    if not threads:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def _add_data_args(parser: argparse.ArgumentParser, prefix: str = "") -> None:
    p = f"{prefix}-" if prefix else ""
    group = parser.add_argument_group(f"{prefix or 'input'} data")
    group.add_argument(f"--{p}idx-images", help="IDX image file")
    group.add_argument(f"--{p}idx-labels", help="IDX label file")
    group.add_argument(f"--{p}csv", help="CSV file with one label column")
    group.add_argument(f"--{p}label-column", default="label",
                       help="label column name (or index with --%scsv-no-header)" % p)
    group.add_argument(f"--{p}csv-no-header", action="store_true",
                       help="CSV file has no header row")


def _load_data(args: argparse.Namespace, prefix: str = ""):
    from . import data

    p = f"{prefix}_" if prefix else ""
    idx_images = getattr(args, f"{p}idx_images")
    idx_labels = getattr(args, f"{p}idx_labels")
    csv_path = getattr(args, f"{p}csv")
    if idx_images and idx_labels:
        return data.load_idx(idx_images, idx_labels)
    if csv_path:
        no_header = getattr(args, f"{p}csv_no_header")
        label_col: str | int = getattr(args, f"{p}label_column")
        if no_header:
            label_col = int(label_col) if str(label_col).lstrip("-").isdigit() else label_col
        return data.load_csv(csv_path, label_col, has_header=not no_header)
    flag = f"--{prefix}-" if prefix else "--"
    raise SystemExit2(
        f"no {prefix or 'input'} data given: use {flag}idx-images/{flag}idx-labels "
        f"or {flag}csv")


class SystemExit2(Exception):
    """User-facing CLI error; rendered as a single `error:` line, exit 2."""


def _relabel(bundle, ds):
    """Re-code a dataset's labels into the model's class-id space.

    CSV loading assigns ids by first appearance, so two files over the same
    classes can disagree; the name map stored in the model reconciles them.
    """
    import numpy as np

    from .data import Dataset

    if bundle.label_names is not None:
        lut = {n: i for i, n in enumerate(bundle.label_names)}
        names = (ds.label_names if ds.label_names is not None
                 else [str(v) for v in range(ds.class_count)])
        missing = [n for n in names if n not in lut]
        if missing:
            raise SystemExit2(
                f"class {missing[0]!r} in the data is unknown to the model")
        remap = np.array([lut[n] for n in names])
        return Dataset(ds.features, remap[ds.labels], bundle.class_count,
                       bundle.label_names)
    if ds.label_names is not None:
        # model trained on raw integer labels: interpret names numerically
        try:
            remap = np.array([int(n) for n in ds.label_names])
        except ValueError:
            raise SystemExit2(
                "data has string class names but the model stores no name map") from None
        if remap.min() < 0 or remap.max() >= bundle.class_count:
            raise SystemExit2("data class names fall outside the model's classes")
        return Dataset(ds.features, remap[ds.labels], bundle.class_count, None)
    return ds


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enhope",
        description="Supervised collapsing-classes embedding with exemplar-based fast kNN")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train an embedding model")
    _add_data_args(t)
    t.add_argument("--out", required=True, help="output model file")
    t.add_argument("--report", help="write a JSON training report here")
    t.add_argument("--variant", choices=["high-order", "linear"], default="high-order")
    t.add_argument("--mode", choices=["kmeans", "learned", "random", "none"],
                   default="kmeans",
                   help="exemplar mode; 'none' trains the pairwise objective")
    t.add_argument("--learned-init", choices=["kmeans", "random"], default="kmeans",
                   help="exemplar initialization for --mode learned")
    t.add_argument("--kernel", choices=["student-t", "gaussian"], default="student-t",
                   help="pairwise kernel for --mode none")
    t.add_argument("--z", type=int, default=20, help="number of exemplars")
    t.add_argument("--factors", type=int, default=800, help="factor count F")
    t.add_argument("--hidden", type=int, default=400, help="high-order unit count m")
    t.add_argument("--order", type=int, default=2, help="feature interaction order")
    t.add_argument("--embed-dim", type=int, default=2)
    t.add_argument("--normalize", choices=["none", "minmax01", "zscore"],
                   default="minmax01")
    t.add_argument("--val-frac", type=float, default=0.1,
                   help="fraction held out per class for validation (0 disables)")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=5000)
    t.add_argument("--cg-steps", type=int, default=3, help="CG steps per batch")
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--armijo-c1", type=float, default=1e-4,
                   help="sufficient-decrease constant for the line search")
    t.add_argument("--shrink", type=float, default=0.5,
                   help="line-search backtracking factor")
    t.add_argument("--restart-every", type=int, default=20,
                   help="steepest-descent restart interval in CG steps")
    t.add_argument("--per-row-norm", action="store_true",
                   help="normalize exemplar probabilities per data point (ablation)")
    t.add_argument("--k", type=int, help="validation kNN neighbor count")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("embed", help="write embedding CSV for a dataset")
    e.add_argument("--model", required=True)
    _add_data_args(e)
    e.add_argument("--out", required=True, help="output CSV path")

    v = sub.add_parser("evaluate", help="kNN error rate of a model on a test set")
    v.add_argument("--model", required=True)
    _add_data_args(v)
    _add_data_args(v, prefix="ref")
    v.add_argument("--k", type=int, help="override the z-based neighbor rule")

    b = sub.add_parser("benchmark", help="exemplar-kNN vs full-kNN speedup")
    b.add_argument("--model", required=True)
    _add_data_args(b, prefix="train")
    _add_data_args(b, prefix="test")
    b.add_argument("--k-full", type=int, default=5)
    b.add_argument("--k-ex", type=int, help="exemplar-arm k (default: z rule)")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out", help="write the report as JSON here")

    p = sub.add_parser("plot", help="render an embedding CSV as an SVG scatter")
    p.add_argument("--in", dest="in_csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=800)
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    import numpy as np

    from . import data, embedding, exemplars as ex_mod, modelfile, optimizer

    ds = _load_data(args)
    ds, stats = data.normalize(ds, args.normalize)
    if args.val_frac > 0:
        split = data.stratified_split(ds, args.val_frac, args.seed)
    else:
        split = data.Split(np.arange(ds.n), np.array([], dtype=np.int64), 0.0)
    train_ds = ds.subset(split.train_indices)

    exemplar_set = None
    trainable = False
    if args.mode != "none":
        if args.mode == "learned":
            mode = f"learned_init_{args.learned_init.replace('-', '_')}"
            trainable = True
        else:
            mode = args.mode
        cfg = ex_mod.ExemplarConfig(z=args.z, mode=mode, seed=args.seed)
        exemplar_set = ex_mod.build_exemplars(train_ds, cfg)

    if args.variant == "high-order":
        model = embedding.init_high_order(ds.feature_dim, args.embed_dim,
                                          args.factors, args.hidden,
                                          order=args.order, seed=args.seed,
                                          norm=stats)
    else:
        model = embedding.init_linear(ds.feature_dim, args.embed_dim,
                                      seed=args.seed, norm=stats)

    cg = optimizer.CgConfig(max_epochs=args.epochs, batch_size=args.batch_size,
                            cg_steps_per_batch=args.cg_steps, seed=args.seed,
                            patience=args.patience, armijo_c1=args.armijo_c1,
                            shrink=args.shrink, restart_every=args.restart_every)
    progress = None if args.quiet else print
    model, exemplar_set, report = optimizer.train(
        model, ds, split, exemplar_set,
        loss_mode="pairwise" if args.mode == "none" else "exemplar",
        cfg=cg, kernel=args.kernel.replace("-", "_"),
        trainable_exemplars=trainable, per_row=args.per_row_norm,
        eval_k=args.k, progress=progress)

    final_val = report.val_errors[report.selected_epoch]
    bundle = modelfile.ModelBundle(model, exemplar_set, ds.class_count,
                                   args.seed, len(report.epoch_losses), final_val,
                                   label_names=ds.label_names)
    modelfile.save_model(bundle, args.out)
    if args.report:
        with open(args.report, "w") as f:
            json.dump({"epoch_losses": report.epoch_losses,
                       "val_errors": report.val_errors,
                       "epoch_seconds": report.epoch_seconds,
                       "selected_epoch": report.selected_epoch}, f, indent=2)
    if not args.quiet:
        print(f"saved model to {args.out} "
              f"(selected epoch {report.selected_epoch}, val_err={final_val:.6f})")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    from . import embedding, modelfile

    bundle = modelfile.load_model(args.model)
    ds = _relabel(bundle, _load_data(args))
    model = bundle.model
    if ds.feature_dim != model.input_dim:
        raise SystemExit2(
            f"data has {ds.feature_dim} features, model expects {model.input_dim}")
    X = ds.features if model.norm is None else model.norm.apply(ds.features)
    Y = embedding.forward(model, X)
    h = Y.shape[1]
    lines = [",".join([f"y{i + 1}" for i in range(h)] + ["label", "is_exemplar"])]
    for row, label in zip(Y, ds.labels):
        lines.append(",".join([repr(float(v)) for v in row] + [str(int(label)), "0"]))
    if bundle.exemplars is not None:
        Ye = embedding.forward(model, bundle.exemplars.vectors)
        for row, label in zip(Ye, bundle.exemplars.labels):
            lines.append(",".join([repr(float(v)) for v in row] + [str(int(label)), "1"]))
    with open(args.out, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from . import embedding, exemplars as ex_mod, knn, modelfile

    bundle = modelfile.load_model(args.model)
    ds = _relabel(bundle, _load_data(args))
    if bundle.exemplars is not None:
        refs = bundle.exemplars
    else:
        if not (getattr(args, "ref_csv") or getattr(args, "ref_idx_images")):
            raise SystemExit2(
                "model has no exemplars (pairwise training); supply reference "
                "data via --ref-csv or --ref-idx-images/--ref-idx-labels")
        ref_ds = _relabel(bundle, _load_data(args, prefix="ref"))
        X = ref_ds.features if bundle.model.norm is None else bundle.model.norm.apply(ref_ds.features)
        refs = ex_mod.ExemplarSet(X, ref_ds.labels)
    k = args.k if args.k is not None else knn.auto_k(refs.z)
    _, error = knn.classify_with_model(bundle.model, refs, ds, k)
    print(f"error_rate={error:.6f} k={k} n_test={ds.n} z={refs.z}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    from . import knn, modelfile

    bundle = modelfile.load_model(args.model)
    if bundle.exemplars is None:
        raise SystemExit2("benchmark needs a model trained with exemplars")
    train_ds = _relabel(bundle, _load_data(args, prefix="train"))
    test_ds = _relabel(bundle, _load_data(args, prefix="test"))
    report = knn.benchmark(bundle.model, bundle.exemplars, train_ds, test_ds,
                           k_full=args.k_full, k_exemplar=args.k_ex,
                           repeats=args.repeats)
    print(report.to_text())
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report.to_dict(), f, indent=2)
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    from . import svgplot

    svgplot.plot_csv(args.in_csv, args.out, size=args.size)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "embed": cmd_embed,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    _apply_thread_env()
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
