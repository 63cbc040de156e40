"""Backbone + head classifier construction and prediction.

Supported backbones are the torchvision ResNet50, VGG19, DenseNet161 and
DenseNet201 trunks with their stock classifier replaced by a fresh linear
head sized to the task's class count. The backbone's trailing blocks are
addressable for the finetuning stage's freeze/unfreeze partition.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .errors import ShapeMismatch, UnsupportedBackbone, WeightsUnavailable

log = logging.getLogger(__name__)

SUPPORTED_BACKBONES = ("resnet50", "vgg19", "densenet161", "densenet201")

# ImageNet statistics; also the contract for randomly initialized trunks so
# train/eval preprocessing never diverges.
INPUT_MEAN = (0.485, 0.456, 0.406)
INPUT_STD = (0.229, 0.224, 0.225)


class ClassifierModel(nn.Module):
    """A feature trunk plus a linear head producing g class scores."""

    def __init__(self, backbone_name: str, backbone: nn.Module, head: nn.Linear,
                 blocks: Sequence[nn.Module], stem: Sequence[nn.Module]):
        super().__init__()
        self.backbone_name = backbone_name
        self.backbone = backbone
        self.head = head
        self._blocks = list(blocks)
        self._stem = list(stem)

    @property
    def num_classes(self) -> int:
        return self.head.out_features

    def backbone_blocks(self) -> list[nn.Module]:
        """Architectural blocks ordered shallow to deep ('deeper layers' unfreeze last-first)."""
        return list(self._blocks)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return torch.softmax(self.forward(x), dim=-1)

    def backbone_parameters(self):
        return self.backbone.parameters()

    def set_trainable(self, unfrozen_depth: int) -> None:
        """Freeze everything except the head and the last unfrozen_depth blocks.

        Frozen modules are also held in eval mode by train() so BatchNorm
        running statistics stay bit-identical while frozen.
        """
        for p in self.backbone.parameters():
            p.requires_grad = False
        for p in self.head.parameters():
            p.requires_grad = True
        depth = min(max(unfrozen_depth, 0), len(self._blocks))
        self._unfrozen = self._blocks[len(self._blocks) - depth:] if depth else []
        for block in self._unfrozen:
            for p in block.parameters():
                p.requires_grad = True

    def train(self, mode: bool = True):
        super().train(mode)
        if mode:
            # Keep frozen parts in eval so their BN buffers never drift.
            unfrozen = getattr(self, "_unfrozen", [])
            self.backbone.eval()
            for block in unfrozen:
                block.train()
        return self


def _load_torchvision_backbone(name: str, pretrained: bool):
    import torchvision.models as tvm

    ctors = {
        "resnet50": (tvm.resnet50, "ResNet50_Weights"),
        "vgg19": (tvm.vgg19, "VGG19_Weights"),
        "densenet161": (tvm.densenet161, "DenseNet161_Weights"),
        "densenet201": (tvm.densenet201, "DenseNet201_Weights"),
    }
    ctor, weights_enum_name = ctors[name]
    weights = None
    if pretrained:
        weights = getattr(tvm, weights_enum_name).DEFAULT
    return ctor(weights=weights)


def _vgg_feature_blocks(features: nn.Sequential) -> list[nn.Module]:
    """Split the VGG feature stack into conv blocks at MaxPool boundaries."""
    blocks: list[nn.Module] = []
    current: list[nn.Module] = []
    for layer in features:
        current.append(layer)
        if isinstance(layer, nn.MaxPool2d):
            blocks.append(nn.ModuleList(current))
            current = []
    if current:
        blocks.append(nn.ModuleList(current))
    return blocks


def build_model(
    backbone: str,
    g: int,
    pretrained: bool = True,
    allow_random_fallback: bool = False,
    weights_loader: Callable[[str, bool], nn.Module] | None = None,
) -> ClassifierModel:
    """Construct a classifier with a freshly initialized g-way head.

    With pretrained, backbone weights come from the weights provider; if
    they cannot be loaded (offline), WeightsUnavailable is raised unless
    allow_random_fallback is set, which warns and uses random init (the
    desk-scale/test path).
    """
    if g < 2:
        raise ValueError(f"need at least 2 classes, got {g}")
    if backbone not in SUPPORTED_BACKBONES:
        raise UnsupportedBackbone(f"backbone '{backbone}' not in {SUPPORTED_BACKBONES}")
    loader = weights_loader or _load_torchvision_backbone
    try:
        net = loader(backbone, pretrained)
    except Exception as exc:
        if not pretrained:
            raise
        if not allow_random_fallback:
            raise WeightsUnavailable(
                f"pretrained weights for {backbone} unavailable: {exc}"
            ) from exc
        log.warning("pretrained weights for %s unavailable (%s); falling back to random init",
                    backbone, exc)
        net = loader(backbone, False)

    if backbone == "resnet50":
        feat_dim = net.fc.in_features
        net.fc = nn.Identity()
        blocks = [net.layer1, net.layer2, net.layer3, net.layer4]
        stem = [net.conv1, net.bn1]
    elif backbone == "vgg19":
        feat_dim = net.classifier[0].in_features
        net.classifier = nn.Identity()
        blocks = _vgg_feature_blocks(net.features)
        stem = []
    else:  # densenet161 / densenet201
        feat_dim = net.classifier.in_features
        net.classifier = nn.Identity()
        f = net.features
        blocks = [
            nn.ModuleList([f.denseblock1, f.transition1]),
            nn.ModuleList([f.denseblock2, f.transition2]),
            nn.ModuleList([f.denseblock3, f.transition3]),
            nn.ModuleList([f.denseblock4, f.norm5]),
        ]
        stem = [f.conv0, f.norm0]

    head = nn.Linear(feat_dim, g)
    model = ClassifierModel(backbone, net, head, blocks, stem)
    model.set_trainable(unfrozen_depth=0)
    return model


def normalize_input(images: np.ndarray) -> torch.Tensor:
    """Convert NxHxWx3 float [0,1] arrays to normalized NCHW tensors."""
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4 or images.shape[-1] != 3:
        raise ShapeMismatch(f"expected NxHxWx3 image array, got shape {images.shape}")
    t = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32)).permute(0, 3, 1, 2)
    mean = torch.tensor(INPUT_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(INPUT_STD).view(1, 3, 1, 1)
    return (t - mean) / std


def predict(model: ClassifierModel, batch: torch.Tensor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Probabilities, hard labels and confidences for a normalized batch.

    The hard label is the argmax over class probabilities; numpy argmax
    breaks ties toward the lowest class index. Confidence is the max
    probability.
    """
    if batch.ndim == 3:
        batch = batch[None]
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise ShapeMismatch(f"expected NCHW batch with 3 channels, got {tuple(batch.shape)}")
    model.eval()
    probs = model.predict_proba(batch).cpu().numpy()
    labels = np.argmax(probs, axis=1)
    confidences = probs[np.arange(len(probs)), labels]
    return probs, labels, confidences
