from typing import List

import torch
from torch import nn

from config import config


class ActionClassifier(nn.Module):
    """Single-layer GRU over per-frame pose vectors.

    The final hidden state is the motion feature used by FID, diversity and
    multimodality; a linear head turns it into the action posterior.
    """

    def __init__(self, input_dim: int, actions: List[str], hidden: int = config.CLASSIFIER_HIDDEN):
        super().__init__()
        self.actions = list(actions)
        self.input_dim = input_dim
        self.hidden = hidden
        self.register_buffer("feature_mean", torch.zeros(input_dim))
        self.register_buffer("feature_std", torch.ones(input_dim))
        self.gru = nn.GRU(input_dim, hidden, num_layers=1, batch_first=True)
        self.head = nn.Linear(hidden, len(self.actions))

    def set_normalization(self, mean: torch.Tensor, std: torch.Tensor):
        self.feature_mean.copy_(mean)
        self.feature_std.copy_(torch.where(std > 1e-6, std, torch.ones_like(std)))

    def features(self, frames: torch.Tensor) -> torch.Tensor:
        normalized = (frames - self.feature_mean) / self.feature_std
        _, hidden = self.gru(normalized)
        return hidden[-1]

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(frames))

    def posterior(self, frames: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.forward(frames), dim=-1)

    def predict(self, frames: torch.Tensor) -> List[str]:
        indices = self.forward(frames).argmax(dim=-1).tolist()
        return [self.actions[index] for index in indices]
