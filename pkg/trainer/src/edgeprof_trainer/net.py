"""Torch implementation of the EdgeConv classifier.

Mirrors the inference engine's architecture exactly (same layer widths,
same batchnorm placement, same static-tail semantics) so exported ECW
weights drop straight into the engine. Neighbor selection uses squared
Euclidean distance, excludes self-loops, and breaks distance ties by
ascending node index via a stable sort — the same neighbor-set contract
the engine documents.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

BN_EPSILON = 1e-5


def knn_indices(x: torch.Tensor, k: int, exact: bool = False) -> torch.Tensor:
    """(B, n, c) -> (B, n, k) neighbor indices.

    ``exact=True`` avoids the matrix-multiply expansion of the pairwise
    distance, trading speed for the small cancellation error that could
    otherwise reorder near-ties; fixture export uses it.
    """
    mode = "donot_use_mm_for_euclid_dist" if exact else "use_mm_for_euclid_dist"
    dist = torch.cdist(x, x, p=2.0, compute_mode=mode)
    n = x.shape[1]
    eye = torch.eye(n, dtype=torch.bool, device=x.device)
    dist = dist.masked_fill(eye, float("inf"))
    order = torch.argsort(dist, dim=-1, stable=True)
    return order[..., :k]


def gather_edge_features(x: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """(B, n, c), (B, n, k) -> (B, n, k, 2c) as (x_i || x_j - x_i)."""
    b, n, c = x.shape
    k = idx.shape[-1]
    base = torch.arange(b, device=x.device).view(b, 1, 1) * n
    flat = x.reshape(b * n, c)
    neighbors = flat[(idx + base).reshape(-1)].reshape(b, n, k, c)
    center = x.unsqueeze(2).expand(b, n, k, c)
    return torch.cat([center, neighbors - center], dim=-1)


class EdgeConvClassifier(nn.Module):
    def __init__(self, k: int = 20, in_dim: int = 3,
                 dec_channels: tuple[int, ...] = (64, 64, 64, 128),
                 embed_dim: int = 1024, head_channels: tuple[int, ...] = (512, 256),
                 num_classes: int = 40, static_tail: int = 0, dropout: float = 0.5):
        super().__init__()
        if not 0 <= static_tail < len(dec_channels):
            raise ValueError(f"static_tail must be in [0, {len(dec_channels) - 1}]")
        self.k = k
        self.static_tail = static_tail
        self.dec_channels = tuple(dec_channels)
        self.knn_calls = 0  # running count, exposed for structural tests

        self.dec_linears = nn.ModuleList()
        self.dec_bns = nn.ModuleList()
        c = in_dim
        for out in dec_channels:
            self.dec_linears.append(nn.Linear(2 * c, out))
            self.dec_bns.append(nn.BatchNorm1d(out, eps=BN_EPSILON))
            c = out
        concat = sum(dec_channels)
        self.embed_linear = nn.Linear(concat, embed_dim)
        self.embed_bn = nn.BatchNorm1d(embed_dim, eps=BN_EPSILON)
        self.head = nn.ModuleList([
            nn.Linear(embed_dim, head_channels[0]),
            nn.Linear(head_channels[0], head_channels[1]),
            nn.Linear(head_channels[1], num_classes),
        ])
        self.dropout = nn.Dropout(dropout)

    def _bn(self, bn: nn.BatchNorm1d, h: torch.Tensor) -> torch.Tensor:
        shape = h.shape
        return bn(h.reshape(-1, shape[-1])).reshape(shape)

    def forward(self, pos: torch.Tensor, exact_knn: bool = False) -> torch.Tensor:
        x = pos
        n_layers = len(self.dec_channels)
        outputs = []
        idx = None
        for li in range(n_layers):
            if li < n_layers - self.static_tail:
                idx = knn_indices(x, self.k, exact=exact_knn)
                self.knn_calls += 1
            edges = gather_edge_features(x, idx)
            h = self.dec_linears[li](edges)
            h = F.relu(self._bn(self.dec_bns[li], h))
            x = h.max(dim=2).values
            outputs.append(x)
        cat = torch.cat(outputs, dim=-1)
        emb = F.relu(self._bn(self.embed_bn, self.embed_linear(cat)))
        pooled = emb.max(dim=1).values
        h = self.dropout(F.relu(self.head[0](pooled)))
        h = self.dropout(F.relu(self.head[1](h)))
        return F.log_softmax(self.head[2](h), dim=-1)

    # --- ECW interchange ----------------------------------------------------

    def export_tensors(self) -> dict[str, "torch.Tensor"]:
        """State dict keyed by the published ECW naming scheme."""
        out: dict[str, torch.Tensor] = {}
        for i, (lin, bn) in enumerate(zip(self.dec_linears, self.dec_bns), start=1):
            out[f"dec{i}.linear0.weight"] = lin.weight
            out[f"dec{i}.linear0.bias"] = lin.bias
            out[f"dec{i}.bn0.gamma"] = bn.weight
            out[f"dec{i}.bn0.beta"] = bn.bias
            out[f"dec{i}.bn0.running_mean"] = bn.running_mean
            out[f"dec{i}.bn0.running_var"] = bn.running_var
        out["embed.linear0.weight"] = self.embed_linear.weight
        out["embed.linear0.bias"] = self.embed_linear.bias
        out["embed.bn0.gamma"] = self.embed_bn.weight
        out["embed.bn0.beta"] = self.embed_bn.bias
        out["embed.bn0.running_mean"] = self.embed_bn.running_mean
        out["embed.bn0.running_var"] = self.embed_bn.running_var
        for i, lin in enumerate(self.head):
            out[f"head.linear{i}.weight"] = lin.weight
            out[f"head.linear{i}.bias"] = lin.bias
        return out

    def export_arrays(self) -> dict:
        import numpy as np
        return {name: np.ascontiguousarray(t.detach().cpu().numpy(), dtype=np.float32)
                for name, t in self.export_tensors().items()}
