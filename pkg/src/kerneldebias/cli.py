"""Operator command line: synthesis, training, evaluation, parameter sweeps.

Every artifact written (run record, report, sweep table) embeds the full
configuration that produced it, so any run can be reproduced from its output
alone.
"""

import csv
import itertools
import json
import sys
import traceback
from pathlib import Path

import click

from .dataio import load_dataset, load_manifest, load_model, save_model
from .errors import KernelDebiasError
from .pipeline import evaluate_model, evaluate_zero_shot, train_from_manifest
from .synth import SynthSpec, emit_dataset, generate
from .trainer import TrainConfig

SWEEP_COLUMNS = ["tau", "tau_z", "avg", "wg", "gap", "eod", "seconds", "error"]


@click.group()
def main():
    """Kernel-space debiasing of frozen image/text embeddings."""


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fail(exc):
    tag = type(exc).__name__ if isinstance(exc, Exception) else "error"
    click.echo(f"error [{tag}]: {exc}", err=True)
    sys.exit(1)


train_options = [
    click.option("--tau-i", type=float, default=0.7, show_default=True,
                 help="Sensitive-attribute penalty weight, image side."),
    click.option("--tau-t", type=float, default=0.7, show_default=True,
                 help="Sensitive-attribute penalty weight, text side."),
    click.option("--tau-z", type=float, default=0.7, show_default=True,
                 help="Cross-modal alignment weight."),
    click.option("--gamma", type=float, default=1e-4, show_default=True,
                 help="Constraint regularizer."),
    click.option("--rff-dim", type=int, default=1000, show_default=True,
                 help="Random-feature dimension."),
    click.option("--r", "r", type=int, default=None,
                 help="Representation dimension (default: classes - 1)."),
    click.option("--iters", type=int, default=10, show_default=True,
                 help="Alternating iterations."),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--supervised-y", is_flag=True,
                 help="Use ground-truth target labels instead of pseudo-labels."),
    click.option("--supervised-s", is_flag=True,
                 help="Use ground-truth sensitive labels instead of pseudo-labels."),
    click.option("--balance", "balance", is_flag=True,
                 help="Pre-sample the training split to balance predicted classes."),
    click.option("--bandwidth", type=float, default=None,
                 help="Explicit RBF bandwidth (default: median heuristic)."),
]


def _with_train_options(fn):
    for opt in reversed(train_options):
        fn = opt(fn)
    return fn


def _train_config(tau_i, tau_t, tau_z, gamma, rff_dim, r, iters, seed,
                  supervised_y, supervised_s, balance, bandwidth) -> TrainConfig:
    return TrainConfig(
        tau_i=tau_i,
        tau_t=tau_t,
        tau_z=tau_z,
        gamma=gamma,
        r=r,
        rff_dim=rff_dim,
        iters=iters,
        seed=seed,
        supervised_y=supervised_y,
        supervised_s=supervised_s,
        balance_presample=balance,
        bandwidth=bandwidth,
    )


def _config_echo(cfg: TrainConfig, manifest) -> dict:
    return {
        "manifest": str(manifest),
        "tau_i": cfg.tau_i,
        "tau_t": cfg.tau_t,
        "tau_z": cfg.tau_z,
        "gamma": cfg.gamma,
        "r": cfg.r,
        "rff_dim": cfg.rff_dim,
        "iters": cfg.iters,
        "seed": cfg.seed,
        "supervised_y": cfg.supervised_y,
        "supervised_s": cfg.supervised_s,
        "balance_presample": cfg.balance_presample,
        "bandwidth": cfg.bandwidth,
    }


@main.command()
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--n", type=int, default=5000, show_default=True)
@click.option("--d", type=int, default=16, show_default=True)
@click.option("--mode", type=click.Choice(["spurious", "intrinsic"]),
              default="spurious", show_default=True)
@click.option("--rho", type=float, default=0.95, show_default=True,
              help="Fraction of samples whose sensitive group aligns with the class.")
@click.option("--signal-gap", type=float, default=4.0, show_default=True)
@click.option("--bias-gap", type=float, default=12.0, show_default=True)
@click.option("--noise-sigma", type=float, default=1.0, show_default=True)
@click.option("--prompt-bias", type=float, default=None,
              help="Sensitive-axis contamination of class prompts (default per mode).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--test-n", type=int, default=None,
              help="Also emit a test split with this many samples.")
@click.option("--test-rho", type=float, default=0.5, show_default=True,
              help="Alignment fraction of the test split.")
def synth(out, n, d, mode, rho, signal_gap, bias_gap, noise_sigma, prompt_bias,
          seed, test_n, test_rho):
    """Generate a synthetic dataset (and optional test split) with manifests."""
    out = Path(out)
    spec = SynthSpec(
        n=n, d=d, correlation_mode=mode, spurious_strength=rho,
        signal_gap=signal_gap, bias_gap=bias_gap, noise_sigma=noise_sigma,
        seed=seed, prompt_bias=prompt_bias,
    )
    try:
        manifest = emit_dataset(generate(spec), out / "train", split="train")
        click.echo(f"wrote {manifest}")
        if test_n is not None:
            from dataclasses import replace

            test_spec = replace(spec, n=test_n, spurious_strength=test_rho)
            manifest = emit_dataset(generate(test_spec), out / "test", split="test")
            click.echo(f"wrote {manifest}")
    except KernelDebiasError as exc:
        _fail(exc)


@main.command()
@click.option("--manifest", required=True, type=click.Path(),
              help="Dataset manifest to train on.")
@click.option("--out", required=True, type=click.Path(), help="Model file to write.")
@click.option("--run-record", type=click.Path(), default=None,
              help="Where to write the run record JSON (default: <out>.run.json).")
@_with_train_options
def train(manifest, out, run_record, **kwargs):
    """Train the debiasing encoders and save the model."""
    cfg = _train_config(**kwargs)
    try:
        run = train_from_manifest(manifest, cfg)
        save_model(run.model, out)
    except (KernelDebiasError, OSError) as exc:
        _fail(exc)
    # training-split metrics, when the manifest carries labels and the model
    # can predict (iters >= 1)
    metrics = None
    if run.dataset.y is not None and run.dataset.s is not None and run.model.encoder_txt is not None:
        metrics = evaluate_model(run.model, run.dataset).to_dict()
    record = {
        "config": _config_echo(cfg, manifest),
        "timing_seconds": run.seconds,
        "artifacts": {"model": str(out)},
        "metrics": metrics,
        "history": [rec.to_dict() for rec in run.model.history],
    }
    record_path = run_record or f"{out}.run.json"
    _write_json(record_path, record)
    click.echo(f"wrote {out} and {record_path} ({run.seconds:.2f}s train)")


@main.command("eval")
@click.option("--manifest", required=True, type=click.Path(),
              help="Labeled dataset manifest to evaluate on.")
@click.option("--model", "model_path", type=click.Path(), default=None,
              help="Trained model file (omit with --zero-shot).")
@click.option("--out", required=True, type=click.Path(), help="Report JSON to write.")
@click.option("--skew-k", type=int, default=None,
              help="Top-k cutoff for MaxSkew (default: min(1000, n)).")
@click.option("--positive-class", type=int, default=1, show_default=True,
              help="Target class treated as positive by EOD.")
@click.option("--zero-shot", is_flag=True,
              help="Evaluate plain zero-shot prediction on the raw embeddings.")
def eval_cmd(manifest, model_path, out, skew_k, positive_class, zero_shot):
    """Evaluate a model (or the zero-shot baseline) and write a report."""
    try:
        dataset = load_dataset(load_manifest(manifest))
        if zero_shot:
            report = evaluate_zero_shot(dataset, skew_k=skew_k,
                                        positive_class=positive_class)
            model_echo = None
        else:
            if model_path is None:
                _fail("either --model or --zero-shot is required")
            model = load_model(model_path)
            report = evaluate_model(model, dataset, skew_k=skew_k,
                                    positive_class=positive_class)
            model_echo = str(model_path)
    except KernelDebiasError as exc:
        _fail(exc)
    doc = {
        "config": {
            "manifest": str(manifest),
            "model": model_echo,
            "skew_k": skew_k,
            "positive_class": positive_class,
            "zero_shot": zero_shot,
        },
        "metrics": report.to_dict(),
    }
    _write_json(out, doc)
    click.echo(f"wrote {out}")


def _parse_grid(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise click.BadParameter(f"not a comma-separated float list: {text!r}")
    if not values:
        raise click.BadParameter("grid must be nonempty")
    return values


@main.command()
@click.option("--manifest", required=True, type=click.Path(),
              help="Training manifest.")
@click.option("--eval-manifest", type=click.Path(), default=None,
              help="Labeled manifest to evaluate each cell on (default: training manifest).")
@click.option("--taus", required=True, help="Comma-separated tau grid (sets tau_i and tau_t).")
@click.option("--tau-zs", required=True, help="Comma-separated tau_z grid.")
@click.option("--out", required=True, type=click.Path(), help="Sweep CSV to write.")
@_with_train_options
def sweep(manifest, eval_manifest, taus, tau_zs, out, **kwargs):
    """Grid sweep over tau and tau_z; one independent training run per cell."""
    base_cfg = _train_config(**kwargs)
    tau_grid = sorted(_parse_grid(taus))
    tau_z_grid = sorted(_parse_grid(tau_zs))
    eval_path = eval_manifest or manifest
    try:
        eval_dataset = load_dataset(load_manifest(eval_path))
    except KernelDebiasError as exc:
        _fail(exc)

    rows = []
    from dataclasses import replace

    for tau, tau_z in itertools.product(tau_grid, tau_z_grid):
        cfg = replace(base_cfg, tau_i=tau, tau_t=tau, tau_z=tau_z)
        row = {"tau": tau, "tau_z": tau_z, "avg": "", "wg": "", "gap": "",
               "eod": "", "seconds": "", "error": ""}
        try:
            run = train_from_manifest(manifest, cfg)
            report = evaluate_model(run.model, eval_dataset)
            row.update(
                avg=f"{report.avg_acc:.6f}",
                wg=f"{report.wg_acc:.6f}",
                gap=f"{report.gap:.6f}",
                eod="" if report.eod is None else f"{report.eod:.6f}",
                seconds=f"{run.seconds:.3f}",
            )
        except (KernelDebiasError, OSError) as exc:
            row["error"] = str(exc).replace("\n", " ")
        rows.append(row)

    config_echo = _config_echo(base_cfg, manifest)
    config_echo.update({"eval_manifest": str(eval_path), "taus": tau_grid,
                        "tau_zs": tau_z_grid})
    with open(out, "w", newline="") as fh:
        fh.write("# config: " + json.dumps(config_echo, sort_keys=True) + "\n")
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {out} ({len(rows)} cells)")


if __name__ == "__main__":
    main()
