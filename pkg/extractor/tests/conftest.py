import numpy as np
import pytest
import torch
from PIL import Image


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A miniature randomly initialized CLIP checkpoint saved to disk.

    Exercises the real from_pretrained loading path without any network
    access; deterministic because the weights are seeded and inference runs
    in eval mode.
    """
    from tokenizers import Tokenizer, models, pre_tokenizers, trainers
    from transformers import (
        CLIPConfig,
        CLIPImageProcessor,
        CLIPModel,
        CLIPProcessor,
        CLIPTextConfig,
        CLIPTokenizerFast,
        CLIPVisionConfig,
    )

    tok = Tokenizer(models.BPE(unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.BpeTrainer(
        vocab_size=256,
        special_tokens=["<unk>", "<|startoftext|>", "<|endoftext|>"],
    )
    tok.train_from_iterator(
        [
            "a photo of a person",
            "this is a photo of a good evil smart dumb attractive unattractive "
            "lawful criminal friendly unfriendly person",
            "landbird waterbird land water background male female",
        ],
        trainer,
    )
    tokenizer = CLIPTokenizerFast(
        tokenizer_object=tok,
        unk_token="<unk>",
        bos_token="<|startoftext|>",
        eos_token="<|endoftext|>",
        pad_token="<|endoftext|>",
    )
    text_cfg = CLIPTextConfig(
        vocab_size=tokenizer.vocab_size + 16,
        hidden_size=32,
        intermediate_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        max_position_embeddings=48,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    vision_cfg = CLIPVisionConfig(
        hidden_size=32,
        intermediate_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        image_size=32,
        patch_size=8,
    )
    config = CLIPConfig(
        text_config=text_cfg.to_dict(),
        vision_config=vision_cfg.to_dict(),
        projection_dim=16,
    )
    torch.manual_seed(0)
    model = CLIPModel(config).eval()
    image_processor = CLIPImageProcessor(
        size={"shortest_edge": 32}, crop_size={"height": 32, "width": 32}
    )
    processor = CLIPProcessor(image_processor=image_processor, tokenizer=tokenizer)

    path = tmp_path_factory.mktemp("tiny-clip")
    model.save_pretrained(path)
    processor.save_pretrained(path)
    return str(path)


@pytest.fixture()
def image_dir(tmp_path):
    """Three decodable images plus one corrupt file, in sorted-name order."""
    rng = np.random.default_rng(7)
    for idx in range(3):
        pixels = rng.integers(0, 255, size=(40, 40, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(tmp_path / f"img_{idx}.png")
    (tmp_path / "img_3_broken.png").write_bytes(b"this is not an image")
    return tmp_path
