"""End-to-end private message passing: calibrate the noise once, then
iterate layer forward + Gaussian perturbation + row projection for K hops,
releasing only the final embedding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .accountant import (
    AccountantMode,
    ModuleBudgets,
    NoisePlan,
    PrivacySpec,
    calibrate_sigma,
    convergent_factor,
    sensitivity_for_level,
)
from .graphs import LabeledDataset, normalized_adjacency
from .layers import LayerParams, layer_forward, project_rows
from .prng import stream

_ROW_NORM_TOL = 1e-9
_HOP_STREAM = 0x40C4


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs: layer coefficients, privacy target, seed.

    ``spec.gamma`` must equal the layer's contraction constant; the
    accountant's guarantee is stated in terms of that constant.
    ``max_degree`` optionally caps the maximum node degree admitted under
    node-level privacy (graphs exceeding it are rejected).
    """

    cgl: LayerParams
    spec: PrivacySpec
    k_hops: int
    seed: int
    mode: AccountantMode = "convergent"
    budgets: ModuleBudgets = field(default_factory=ModuleBudgets)
    max_degree: int | None = None

    def __post_init__(self) -> None:
        if self.k_hops < 0:
            raise ValueError("k_hops must be non-negative")
        if self.spec.level != "none" and self.k_hops != self.spec.k_hops:
            raise ValueError(
                f"k_hops ({self.k_hops}) must match spec.k_hops ({self.spec.k_hops})"
            )
        if self.spec.level != "none" and abs(self.spec.gamma - self.cgl.c_l) > 1e-12:
            raise ValueError(
                f"spec.gamma ({self.spec.gamma}) must equal the layer c_l "
                f"({self.cgl.c_l}); the privacy bound is stated for that constant"
            )


@dataclass(frozen=True)
class RunArtifacts:
    """Released output: the final embedding and the calibration record.

    Intermediate iterates are discarded; only the last hop's projected
    matrix leaves the pipeline.
    """

    x_k_final: np.ndarray
    plan: NoisePlan
    per_hop_noise_std: float


def sample_gaussian_matrix(
    rows: int, cols: int, std: float, rng: np.random.Generator
) -> np.ndarray:
    """IID zero-mean Gaussian matrix; std = 0 yields exact zeros."""
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0.0:
        return np.zeros((rows, cols))
    return rng.normal(loc=0.0, scale=std, size=(rows, cols))


def run_pipeline(dataset: LabeledDataset, cfg: PipelineConfig) -> RunArtifacts:
    """Run the perturbed contractive pipeline and release X^(K).

    Requires row-normalized input features.  The per-hop noise standard
    deviation is exactly sensitivity * plan.sigma; each hop draws from its
    own counter-derived stream so runs are reproducible regardless of
    evaluation order.
    """
    x0 = np.asarray(dataset.features, dtype=float)
    row_norms = np.linalg.norm(x0, axis=1)
    if row_norms.size and row_norms.max() > 1.0 + _ROW_NORM_TOL:
        raise ValueError(
            f"input features must have row norm <= 1 (max {row_norms.max():.6g}); "
            "project them first"
        )

    level = cfg.spec.level
    delta_mp = sensitivity_for_level(level, dataset.graph, cfg.cgl, cfg.max_degree)
    if level == "none":
        plan = NoisePlan(
            sigma=0.0,
            alpha_star=float(cfg.spec.k_hops + 1),
            delta_mp=0.0,
            factor=convergent_factor(max(cfg.k_hops, 1), cfg.cgl.c_l),
            eps_achieved=0.0,
        )
    else:
        plan = calibrate_sigma(cfg.spec, delta_mp, cfg.budgets, cfg.mode)

    noise_std = plan.noise_std
    adj = normalized_adjacency(dataset.graph)
    x = x0.copy()
    for hop in range(cfg.k_hops):
        x = layer_forward(adj, x, x0, cfg.cgl)
        if noise_std > 0.0:
            rng = stream(cfg.seed, _HOP_STREAM, hop)
            x = x + sample_gaussian_matrix(x.shape[0], x.shape[1], noise_std, rng)
        x = project_rows(x)
    return RunArtifacts(x_k_final=x, plan=plan, per_hop_noise_std=noise_std)


def save_artifacts(artifacts: RunArtifacts, embedding_path, plan_path) -> None:
    """Persist the embedding as CSV and the noise plan as a JSON sidecar."""
    emb = np.asarray(artifacts.x_k_final)
    with Path(embedding_path).open("w") as fh:
        for row in emb:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    sidecar = dict(artifacts.plan.to_dict(), per_hop_noise_std=artifacts.per_hop_noise_std)
    with Path(plan_path).open("w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
