import numpy as np
import pytest
import torch

from ice_localizer.model import (
    ActivationSourceNet,
    CheckpointError,
    ModelConfig,
    ModelError,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from ice_localizer.train import weighted_cross_entropy

REDUCED = ModelConfig(backbone="reduced")


def test_adapter_weight_and_output_shape():
    torch.manual_seed(0)
    model = build_model(ModelConfig())
    assert tuple(model.adapter[0].weight.shape) == (64, 1, 9, 7, 7)
    model.eval()
    with torch.no_grad():
        out = model.adapter(torch.zeros(1, 1, 32, 553, 756))
    assert tuple(out.shape) == (1, 64, 26, 185, 252)


def test_adapter_arithmetic_helper():
    model = ActivationSourceNet(ModelConfig())
    assert model.expected_adapter_output((32, 553, 756)) == (26, 185, 252)
    assert model.expected_adapter_output((32, 64, 64)) == (26, 22, 22)


def test_full_model_forward_reference_batch():
    torch.manual_seed(0)
    model = build_model(ModelConfig())
    model.eval()
    with torch.no_grad():
        logits = model(torch.zeros(8, 1, 32, 138, 189))
    assert tuple(logits.shape) == (8, 3)
    assert torch.isfinite(logits).all()


def test_reduced_backbone_keeps_head_contract():
    torch.manual_seed(0)
    model = build_model(REDUCED)
    model.eval()
    with torch.no_grad():
        logits = model(torch.rand(2, 1, 32, 64, 64))
    assert tuple(logits.shape) == (2, 3)


def test_eval_mode_forward_is_deterministic():
    torch.manual_seed(0)
    model = build_model(REDUCED)
    model.eval()
    x = torch.rand(1, 1, 32, 48, 48)
    batch = torch.cat([x, x], dim=0)
    with torch.no_grad():
        logits = model(batch)
        again = model(batch)
    assert torch.equal(logits[0], logits[1])
    assert torch.equal(logits, again)


def test_temporal_collapse_rejected_before_compute():
    model = ActivationSourceNet(REDUCED)
    with pytest.raises(ModelError, match="collapses"):
        model(torch.zeros(1, 1, 6, 64, 64))
    with pytest.raises(ModelError):
        model(torch.zeros(1, 32, 64, 64))  # missing channel axis


def test_parameter_count_regression():
    assert sum(p.numel() for p in ActivationSourceNet(ModelConfig()).parameters()) == 33_167_811
    assert sum(p.numel() for p in ActivationSourceNet(REDUCED).parameters()) == 2_080_371


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip_bitexact(tmp_path):
    torch.manual_seed(3)
    model = build_model(REDUCED)
    model.eval()
    x = torch.rand(2, 1, 32, 40, 40)
    with torch.no_grad():
        before = model(x)
    meta = {"epoch": 17, "val_acc": 0.875}
    path = tmp_path / "ckpt.pt"
    save_checkpoint(model, meta, path)
    loaded, got_meta = load_checkpoint(path, expected_config=REDUCED)
    with torch.no_grad():
        after = loaded(x)
    assert torch.max(torch.abs(after - before)).item() == 0.0
    assert got_meta["epoch"] == 17 and got_meta["val_acc"] == 0.875


def test_checkpoint_config_mismatch(tmp_path):
    torch.manual_seed(0)
    model = build_model(REDUCED)
    path = tmp_path / "ckpt.pt"
    save_checkpoint(model, {"epoch": 1, "val_acc": 0.5}, path)
    with pytest.raises(CheckpointError, match="config"):
        load_checkpoint(path, expected_config=ModelConfig())


def test_checkpoint_corrupt_file(tmp_path):
    path = tmp_path / "junk.pt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


# ---------------------------------------------------------------- pretrained hook


def test_pretrained_backbone_loads_stages_only(tmp_path):
    torch.manual_seed(5)
    donor = build_model(REDUCED)
    weights = tmp_path / "backbone.pt"
    torch.save(donor.state_dict(), weights)
    torch.manual_seed(99)
    model = build_model(
        ModelConfig(backbone="reduced", pretrained_weights_path=str(weights))
    )
    assert torch.equal(model.layer1[0].conv1.weight, donor.layer1[0].conv1.weight)
    assert torch.equal(model.layer4[1].conv2.weight, donor.layer4[1].conv2.weight)
    assert not torch.equal(model.adapter[0].weight, donor.adapter[0].weight)


def test_pretrained_mismatch_lists_layers(tmp_path):
    torch.manual_seed(5)
    donor = build_model(REDUCED)
    weights = tmp_path / "backbone.pt"
    torch.save(donor.state_dict(), weights)
    with pytest.raises(ModelError, match="layer1.0.conv1.weight"):
        build_model(ModelConfig(pretrained_weights_path=str(weights)))


# ---------------------------------------------------------------- gradient check


def test_adapter_gradients_match_finite_differences():
    torch.manual_seed(11)
    model = build_model(REDUCED).double()
    model.eval()
    x = torch.rand(2, 1, 32, 32, 32, dtype=torch.float64)
    y = torch.tensor([0, 2])
    w = (1.0, 1.0, 1.0)

    def loss_value() -> float:
        with torch.no_grad():
            return weighted_cross_entropy(model(x), y, w).item()

    model.zero_grad()
    loss = weighted_cross_entropy(model(x), y, w)
    loss.backward()
    weight = model.adapter[0].weight
    grad = weight.grad.detach().clone()

    rng = np.random.default_rng(7)
    flat = weight.view(-1)
    coords = rng.choice(flat.numel(), size=20, replace=False)
    # double precision keeps the FD noise floor ~1e-8 here; this eps also sits
    # below the distance to the nearest downstream ReLU kink
    eps = 1e-7
    for idform in coords:
        i = int(idform)
        orig = flat[i].item()
        with torch.no_grad():
            flat[i] = orig + eps
        up = loss_value()
        with torch.no_grad():
            flat[i] = orig - eps
        down = loss_value()
        with torch.no_grad():
            flat[i] = orig
        fd = (up - down) / (2 * eps)
        ag = grad.view(-1)[i].item()
        rel = abs(fd - ag) / max(abs(fd), abs(ag), 1e-6)
        assert rel <= 1e-3, f"coord {i}: autograd {ag} vs fd {fd} (rel {rel})"
