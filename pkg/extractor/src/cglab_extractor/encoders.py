"""Vision encoders exposing their final pooled representation.

Supported model ids: torchvision resnet18/resnet34/resnet50 and vit_b_16
(classification head replaced by identity), plus "toycnn", a small local
convnet useful for fast smoke runs.  `pretrained=False` keeps the seeded
random initialization and tags the dump as a random baseline.
"""

from __future__ import annotations

import torch
import torch.nn as nn

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ToyCnn(nn.Module):
    """Three conv blocks + global average pooling; 64-d embeddings."""

    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )

    def forward(self, x):
        return self.features(x).flatten(1)


def _torchvision_model(model_id: str, pretrained: bool) -> nn.Module:
    import torchvision.models as tvm

    builders = {
        "resnet18": (tvm.resnet18, "fc"),
        "resnet34": (tvm.resnet34, "fc"),
        "resnet50": (tvm.resnet50, "fc"),
        "vit_b_16": (tvm.vit_b_16, "heads"),
    }
    builder, head = builders[model_id]
    weights = "DEFAULT" if pretrained else None
    model = builder(weights=weights)
    setattr(model, head, nn.Identity())
    return model


def build_encoder(model_id: str, pretrained: bool = False,
                  seed: int = 0) -> tuple:
    """Returns (module, input_size, preprocessing description)."""
    torch.manual_seed(seed)
    if model_id == "toycnn":
        model = ToyCnn()
        input_size = 64
    elif model_id in ("resnet18", "resnet34", "resnet50", "vit_b_16"):
        model = _torchvision_model(model_id, pretrained)
        input_size = 224
    else:
        raise ValueError(f"unknown model id {model_id!r}")
    model.eval()
    preprocessing = (f"resize_bilinear:{input_size},"
                     f"normalize:imagenet_mean_std")
    return model, input_size, preprocessing


def preprocess(batch: torch.Tensor, input_size: int) -> torch.Tensor:
    """(N, H, W, 3) float images in [0,1] -> normalized (N, 3, S, S)."""
    batch = batch.permute(0, 3, 1, 2)
    if batch.shape[-1] != input_size:
        batch = torch.nn.functional.interpolate(
            batch, size=(input_size, input_size), mode="bilinear",
            align_corners=False)
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    return (batch - mean) / std
