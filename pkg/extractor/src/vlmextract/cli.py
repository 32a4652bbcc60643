"""Command line for the embedding extractor."""

import sys

import click

from .extract import PromptSet, extract


@click.command()
@click.option("--images", required=True, type=click.Path(exists=True),
              help="Image directory (sorted by name) or CSV listing paths.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--model", "model_id", required=True,
              help="Checkpoint id or local path of a CLIP-style model.")
@click.option("--target-prompt", "target_prompts", multiple=True, required=True,
              help="One prompt per target class (repeatable).")
@click.option("--sensitive-prompt", "sensitive_prompts", multiple=True,
              help="One prompt per sensitive class (repeatable).")
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--device", default="cpu", show_default=True)
@click.option("--split", default="extracted", show_default=True,
              help="Split name recorded in the manifest.")
def main(images, out, model_id, target_prompts, sensitive_prompts, batch_size,
         device, split):
    """Encode images and prompts into NPY embeddings plus a manifest."""
    prompts = PromptSet(target_prompts=target_prompts,
                        sensitive_prompts=sensitive_prompts)
    try:
        result = extract(images, prompts, model_id, out, batch_size=batch_size,
                         device=device, split=split)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"wrote {result.manifest_path} ({result.n} rows, dim {result.dim}, "
        f"{len(result.skipped)} skipped)"
    )


if __name__ == "__main__":
    main()
