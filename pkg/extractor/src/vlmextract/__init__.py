"""Bridge frozen vision-language checkpoints to the debiasing pipeline's interchange files."""

from .extract import DEFAULT_TEMPLATE, ExtractResult, PromptSet, extract, list_images

__version__ = "0.1.0"
