from __future__ import annotations

from dataclasses import replace

import pytest
import torch

from src.config import ModelConfig
from src.errors import ConfigError, LabelError, ShapeError
from src.networks import ContentEncoder, Discriminator, SubbandGAN


@pytest.fixture
def tiny_models(tiny_model_cfg: ModelConfig) -> SubbandGAN:
    torch.manual_seed(0)
    return SubbandGAN(tiny_model_cfg).eval()


def test_reference_shape_chain() -> None:
    torch.manual_seed(0)
    models = SubbandGAN(ModelConfig(num_speakers=3)).eval()
    mel = torch.randn(1, 1, 80, 224)

    with torch.no_grad():
        content = models.encode_content(mel)
        offsets = models.predict_offsets(content)
        feature_map = models.style_encoder.feature_map(mel)
        style = models.encode_style(mel)
        generated = models.decode(content, style.style)

    assert content.shape == (1, 256, 20, 112)
    assert offsets.shape == (1, 112)
    assert feature_map.shape == (1, 2048, 4, 14)
    assert style.style.shape == (1, 4, 256)
    assert style.class_logits.shape == (1, 3)
    assert generated.shape == (1, 1, 80, 224)


def test_fresh_pitch_shift_predicts_zero_offsets(tiny_models: SubbandGAN) -> None:
    mel = torch.randn(2, 1, 16, 32)

    with torch.no_grad():
        content = tiny_models.encode_content(mel)
        offsets = tiny_models.predict_offsets(content)
        code = tiny_models.content_code(mel)

    assert torch.all(offsets == 0)
    assert torch.all(offsets.abs() < 1)
    torch.testing.assert_close(code, content)


def test_offsets_stay_inside_the_open_unit_interval(tiny_models: SubbandGAN) -> None:
    torch.nn.init.normal_(tiny_models.pitch_shift.project.weight, std=50.0)
    torch.nn.init.constant_(tiny_models.pitch_shift.project.bias, 3.0)

    with torch.no_grad():
        offsets = tiny_models.predict_offsets(tiny_models.encode_content(torch.randn(3, 1, 16, 32)))

    assert offsets.shape == (3, 16)
    assert torch.all(offsets.abs() < 1)


@pytest.mark.parametrize("bias", [20.0, -20.0])
def test_saturated_projection_still_gives_offsets_below_one(tiny_models: SubbandGAN, bias: float) -> None:
    torch.nn.init.zeros_(tiny_models.pitch_shift.project.weight)
    torch.nn.init.constant_(tiny_models.pitch_shift.project.bias, bias)

    with torch.no_grad():
        offsets = tiny_models.predict_offsets(tiny_models.encode_content(torch.randn(2, 1, 16, 32)))

    assert torch.tanh(torch.tensor(bias)).abs() == 1.0
    assert torch.all(offsets.abs() < 1)
    assert torch.all(offsets.abs() > 0.999)


def _wide_content_encoder(normalized: bool) -> ContentEncoder:
    torch.manual_seed(0)
    cfg = ModelConfig(n_mels=16, frames=256, num_subbands=4, content_channels=32, base_channels=8, max_shift_rows=1.0)
    encoder = ContentEncoder(cfg).eval()
    if not normalized:
        for block in encoder.blocks:
            block.norm1 = torch.nn.Identity()
            block.norm2 = torch.nn.Identity()
    return encoder


def _column_change(encoder: ContentEncoder, frame: int) -> torch.Tensor:
    torch.manual_seed(1)
    mel = torch.randn(1, 1, 16, 256)
    bumped = mel.clone()
    bumped[..., frame] += 3.0
    with torch.no_grad():
        delta = (encoder(bumped) - encoder(mel)).abs()
    return delta.mean(dim=(0, 1, 2))


def test_content_convolutions_only_reach_a_bounded_window() -> None:
    change = _column_change(_wide_content_encoder(normalized=False), frame=128)

    columns = torch.arange(len(change))
    far = (columns - 64).abs() > 14
    assert len(change) == 128
    assert change[64] > 0
    torch.testing.assert_close(change[far], torch.zeros(int(far.sum())), atol=1e-6, rtol=0)


def test_content_changes_far_from_a_perturbed_frame_are_much_smaller() -> None:
    change = _column_change(_wide_content_encoder(normalized=True), frame=128)

    columns = torch.arange(len(change))
    near = change[(columns - 64).abs() <= 2].mean()
    far = change[(columns - 64).abs() > 24].mean()
    assert far < 0.25 * near


def test_identical_batch_items_give_identical_outputs(tiny_models: SubbandGAN) -> None:
    mel = torch.randn(1, 1, 16, 32).expand(3, -1, -1, -1).contiguous()

    with torch.no_grad():
        content = tiny_models.content_code(mel)
        style = tiny_models.encode_style(mel)
        generated = tiny_models.generate(mel, style.style)

    for tensor in (content, style.style, style.class_logits, generated):
        torch.testing.assert_close(tensor[1:], tensor[:1].expand_as(tensor[1:]))


def test_style_perceptron_normalizes_and_rectifies_every_layer(tiny_models: SubbandGAN) -> None:
    layers = list(tiny_models.style_encoder.mlp)

    assert sum(isinstance(layer, torch.nn.Linear) for layer in layers) == 3
    assert sum(isinstance(layer, torch.nn.ReLU) for layer in layers) == 3
    assert isinstance(layers[-1], torch.nn.ReLU)
    with torch.no_grad():
        style = tiny_models.encode_style(torch.randn(2, 1, 16, 32)).style
    assert torch.all(style >= 0)


def test_subband_paths_only_see_their_own_style_part(tiny_models: SubbandGAN) -> None:
    content = torch.randn(1, 32, 4, 16)
    style = torch.randn(1, 4, 32, requires_grad=True)

    paths = tiny_models.decoder.decode_paths(content, style)

    for index, path in enumerate(paths):
        (grad,) = torch.autograd.grad(path.sum(), style, retain_graph=True)
        for part in range(4):
            if part == index:
                assert grad[:, part].abs().sum() > 0
            else:
                assert torch.count_nonzero(grad[:, part]) == 0


def test_decoder_rejects_wrong_number_of_style_parts(tiny_models: SubbandGAN) -> None:
    with pytest.raises(ConfigError, match="4 parts"):
        tiny_models.decode(torch.randn(1, 32, 4, 16), torch.randn(1, 3, 32))


@pytest.mark.parametrize(("subbands", "n_mels"), [(1, 16), (2, 16), (4, 16), (5, 20)])
def test_generate_keeps_mel_shape_for_every_subband_count(tiny_model_cfg: ModelConfig, subbands: int, n_mels: int) -> None:
    cfg = replace(tiny_model_cfg, num_subbands=subbands, n_mels=n_mels)
    models = SubbandGAN(cfg).eval()
    mel = torch.randn(2, 1, n_mels, 32)

    with torch.no_grad():
        style = models.encode_style(mel).style
        generated = models.generate(mel, style)

    assert style.shape == (2, subbands, 32)
    assert generated.shape == mel.shape


def test_pitch_shift_ablation_skips_the_shift(tiny_model_cfg: ModelConfig) -> None:
    models = SubbandGAN(replace(tiny_model_cfg, use_pitch_shift=False)).eval()
    torch.nn.init.constant_(models.pitch_shift.project.bias, 2.0)
    mel = torch.randn(1, 1, 16, 32)

    with torch.no_grad():
        torch.testing.assert_close(models.content_code(mel), models.encode_content(mel))


def test_wrong_mel_shape_is_rejected(tiny_models: SubbandGAN) -> None:
    with pytest.raises(ShapeError):
        tiny_models.encode_content(torch.randn(1, 1, 16, 30))
    with pytest.raises(ShapeError):
        tiny_models.encode_style(torch.randn(1, 16, 32))


def test_discriminator_selects_the_logit_of_each_label(tiny_models: SubbandGAN) -> None:
    mel = torch.randn(2, 1, 16, 32)
    discriminator = tiny_models.discriminator

    with torch.no_grad():
        all_logits = discriminator.head(discriminator.blocks(discriminator.stem(mel))).mean(dim=(2, 3))
        picked = tiny_models.discriminate(mel, torch.tensor([1, 0]))

    torch.testing.assert_close(picked, torch.stack([all_logits[0, 1], all_logits[1, 0]]))


def test_discriminator_rejects_bad_labels(tiny_models: SubbandGAN) -> None:
    mel = torch.randn(2, 1, 16, 32)

    with pytest.raises(LabelError):
        tiny_models.discriminate(mel, torch.tensor([0, 2]))
    with pytest.raises(ShapeError):
        tiny_models.discriminate(mel, torch.tensor([0]))


def test_discriminator_gradients_match_finite_differences() -> None:
    torch.manual_seed(3)
    cfg = ModelConfig(n_mels=8, frames=8, num_subbands=4, num_speakers=3, base_channels=2, max_shift_rows=1.0)
    discriminator = Discriminator(cfg).double()
    mel = torch.randn(1, 1, 8, 8, dtype=torch.float64, requires_grad=True)
    labels = torch.tensor([2])

    assert torch.autograd.gradcheck(lambda x: discriminator(x, labels), (mel,), eps=1e-6, atol=1e-6, rtol=1e-3)


def test_generator_parameters_exclude_the_discriminator(tiny_models: SubbandGAN) -> None:
    generator_ids = {id(p) for p in tiny_models.generator_parameters()}
    discriminator_ids = {id(p) for p in tiny_models.discriminator.parameters()}

    assert generator_ids.isdisjoint(discriminator_ids)
    assert len(generator_ids) + len(discriminator_ids) == len(list(tiny_models.parameters()))
