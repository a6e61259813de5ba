"""Golden fixture export: (PCF cloud, ECW weights, expected log-probs).

A fixture is only useful if the engine under test and this reference
implementation provably build the same neighbor sets, so candidate clouds
are rejected unless every dynamic layer keeps a healthy relative gap
between the k-th and (k+1)-th neighbor distance of every node. Float32
rounding differences between the two implementations are orders of
magnitude below the accepted margin, which pins the graphs and reduces
the comparison to pure arithmetic.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .codec import write_ecw, write_pcf
from .net import EdgeConvClassifier, gather_edge_features, knn_indices

# Worst observed float32-vs-float64 relative deviation of either
# implementation's squared distances is ~9e-7 (squared scale), i.e.
# ~4.5e-7 on the euclidean scale the margin below is measured on; 5e-6
# keeps an order of magnitude of headroom while accepting most clouds.
MARGIN_THRESHOLD = 5e-6


def build_model(weight_seed: int, num_classes: int = 40,
                perturb_seed: int | None = None) -> EdgeConvClassifier:
    """Seeded random-init model with non-trivial batchnorm statistics."""
    torch.manual_seed(weight_seed)
    model = EdgeConvClassifier(num_classes=num_classes)
    rng = np.random.default_rng(weight_seed if perturb_seed is None else perturb_seed)
    with torch.no_grad():
        for bn in list(model.dec_bns) + [model.embed_bn]:
            size = bn.running_mean.shape[0]
            bn.running_mean.copy_(torch.from_numpy(
                rng.normal(0.0, 0.3, size).astype(np.float32)))
            bn.running_var.copy_(torch.from_numpy(
                rng.uniform(0.7, 1.6, size).astype(np.float32)))
            bn.weight.copy_(torch.from_numpy(
                rng.uniform(0.8, 1.25, size).astype(np.float32)))
            bn.bias.copy_(torch.from_numpy(
                rng.normal(0.0, 0.2, size).astype(np.float32)))
    model.eval()
    return model


def dynamic_layer_margins(model: EdgeConvClassifier, pos: torch.Tensor) -> list[float]:
    """Min relative k-boundary distance gap per dynamic layer (eval mode)."""
    margins: list[float] = []
    x = pos
    n_layers = len(model.dec_channels)
    idx = None
    with torch.no_grad():
        for li in range(n_layers):
            if li < n_layers - model.static_tail:
                dist = torch.cdist(x, x, p=2.0,
                                   compute_mode="donot_use_mm_for_euclid_dist")
                n = x.shape[1]
                dist = dist.masked_fill(torch.eye(n, dtype=torch.bool), float("inf"))
                ordered = torch.sort(dist, dim=-1).values
                gap = ordered[..., model.k] - ordered[..., model.k - 1]
                rel = gap / torch.clamp(ordered[..., model.k - 1], min=1e-6)
                margins.append(float(rel.min()))
                idx = knn_indices(x, model.k, exact=True)
            edges = gather_edge_features(x, idx)
            h = model.dec_linears[li](edges)
            h = F.relu(model._bn(model.dec_bns[li], h))
            x = h.max(dim=2).values
    return margins


def reference_forward(model: EdgeConvClassifier, points: np.ndarray) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        out = model(torch.from_numpy(points).unsqueeze(0), exact_knn=True)
    return out.squeeze(0).numpy().astype(np.float32)


def export_fixtures(out_dir: str | Path, count: int = 21, seed: int = 42,
                    ks: tuple[int, ...] = (10, 20),
                    sizes: tuple[int, ...] = (256, 512),
                    tails: tuple[int, ...] = (0, 1, 2),
                    margin_threshold: float = MARGIN_THRESHOLD,
                    log=print) -> dict:
    """Write ``count`` fixture bundles plus a manifest into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    weight_seeds = [seed + i for i in range(3)]
    models: dict[int, EdgeConvClassifier] = {}
    for ws in weight_seeds:
        models[ws] = build_model(ws)
        write_ecw(out_dir / f"weights_s{ws}.ecw", models[ws].export_arrays())

    entries = []
    cloud_rng_seed = seed * 1000
    rejected = 0
    while len(entries) < count:
        i = len(entries)
        tail = tails[i % len(tails)]
        k = ks[i % len(ks)]
        n = sizes[i % len(sizes)]
        ws = weight_seeds[i % len(weight_seeds)]
        model = models[ws]
        model.k = k
        model.static_tail = tail

        while True:
            cloud_rng_seed += 1
            rng = np.random.default_rng(cloud_rng_seed)
            points = rng.uniform(-1.0, 1.0, (n, 3)).astype(np.float32)
            margins = dynamic_layer_margins(model, torch.from_numpy(points).unsqueeze(0))
            if min(margins) >= margin_threshold:
                break
            rejected += 1

        expected = reference_forward(model, points)
        again = reference_forward(model, points)
        if float(np.abs(expected - again).max()) > 1e-6:
            raise RuntimeError("reference forward is not self-consistent")

        cloud_name = f"cloud_{i:02d}.pcf"
        write_pcf(out_dir / cloud_name, points)
        entries.append({
            "cloud": cloud_name,
            "weights": f"weights_s{ws}.ecw",
            "k": k,
            "static_tail": tail,
            "n": n,
            "min_margin": min(margins),
            "log_probs": [float(v) for v in expected],
        })
        log(f"fixture {i:02d}: n={n} k={k} tail={tail} seed={cloud_rng_seed} "
            f"margin={min(margins):.2e}")

    manifest = {
        "generator": {
            "seed": seed,
            "weight_seeds": weight_seeds,
            "margin_threshold": margin_threshold,
            "rejected_clouds": rejected,
            "knn": "squared-euclidean, self excluded, ties by ascending index",
        },
        "fixtures": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
