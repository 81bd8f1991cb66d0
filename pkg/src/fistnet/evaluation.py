"""Distribution-distance evaluation and report rendering.

Feature statistics come from the frozen surrogate feature net (deepest
scale, spatially mean-pooled), so absolute distances are not comparable to
numbers computed with a real pretrained backbone; every report carries a
protocol tag saying which feature space produced it. The distance itself is
the standard Gaussian Frechet form with an eigendecomposition square root.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import (InsufficientSamplesError, NumericalError,
                     ValidationError)
from .extrinsic_path import StylePipeline, pipeline_synthesize
from .generator_core import StyleWeightVector
from .losses import PerceptualFeatureNet

PSD_EIG_TOL = 1e-10
SURROGATE_PROTOCOL = "surrogate-feature-space (seeded net, not Inception)"


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class FeatureStatistics:
    """Gaussian summary of a feature cloud: mean, covariance, sample count."""

    mean: np.ndarray
    cov: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValidationError(
                f"covariance shape {self.cov.shape} does not match mean dim {d}")
        if not (np.isfinite(self.mean).all() and np.isfinite(self.cov).all()):
            raise ValidationError("statistics must be finite")
        if np.abs(self.cov - self.cov.T).max(initial=0.0) > 1e-8:
            raise ValidationError("covariance must be symmetric within 1e-8")
        if self.sample_count < 2:
            raise ValidationError("sample_count must be >= 2")
        # exact symmetry simplifies everything downstream
        self.cov = (self.cov + self.cov.T) / 2.0

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def statistics_from_features(feats: np.ndarray) -> FeatureStatistics:
    """Empirical mean and sample covariance with compensated summation.

    Reduction is order-independent: each entry is an exact fsum over the
    sample axis, so permuting the rows reproduces the result bit for bit.
    """
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2:
        raise ValidationError(f"expected (N, d) features, got {feats.shape}")
    n, d = feats.shape
    if n < 2:
        raise InsufficientSamplesError(
            f"need at least 2 samples for covariance, got {n}")
    mean = np.array([math.fsum(feats[:, j]) / n for j in range(d)])
    centered = feats - mean
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            v = math.fsum(centered[:, i] * centered[:, j]) / (n - 1)
            cov[i, j] = v
            cov[j, i] = v
    return FeatureStatistics(mean=mean, cov=cov, sample_count=n)


def pooled_features(net: PerceptualFeatureNet, images: torch.Tensor,
                    ) -> np.ndarray:
    """Deepest feature scale, spatially averaged, one row per image."""
    with torch.no_grad():
        deepest = net.features(images)[-1]
    return deepest.mean(dim=(2, 3)).double().numpy()


def extract_statistics(net: PerceptualFeatureNet, images) -> FeatureStatistics:
    if len(images) < 2:
        raise InsufficientSamplesError(
            f"need at least 2 images, got {len(images)}")
    return statistics_from_features(pooled_features(net, images.stacked()))


# ---------------------------------------------------------------------------
# Frechet distance
# ---------------------------------------------------------------------------

def _psd_sqrt(mat: np.ndarray, context: dict) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(mat)
    if eigvals.min(initial=0.0) < -PSD_EIG_TOL:
        raise NumericalError(
            f"matrix square root outside PSD domain (min eig {eigvals.min()})",
            operands=context)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def fid(a: FeatureStatistics, b: FeatureStatistics) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))."""
    if a.dim != b.dim:
        raise ValidationError(
            f"feature dims differ: {a.dim} vs {b.dim}")
    context = {"cov_a": a.cov, "cov_b": b.cov}
    diff = a.mean - b.mean
    mean_term = float(diff @ diff)

    # sqrt of the product via the symmetrized form A^1/2 B A^1/2
    a_half = _psd_sqrt(a.cov, context)
    inner = a_half @ b.cov @ a_half
    inner = (inner + inner.T) / 2.0
    eigvals = np.linalg.eigvalsh(inner)
    if eigvals.min(initial=0.0) < -PSD_EIG_TOL:
        raise NumericalError(
            f"product square root outside PSD domain (min eig {eigvals.min()})",
            operands=context)
    trace_sqrt = float(np.sqrt(np.clip(eigvals, 0.0, None)).sum())
    return mean_term + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * trace_sqrt


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Rows of {method_name, metric_name, value} plus protocol metadata."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            missing = {"method_name", "metric_name", "value"} - set(row)
            if missing:
                raise ValidationError(f"report row missing fields {missing}")
            if not math.isfinite(row["value"]):
                raise ValidationError(
                    f"non-finite value in row {row['method_name']}/{row['metric_name']}")

    def values(self, metric_name: str) -> dict:
        return {r["method_name"]: r["value"] for r in self.rows
                if r["metric_name"] == metric_name}

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "metadata": self.metadata},
                          sort_keys=True, indent=2)


def run_fid_protocol(pipe: StylePipeline, style_refs, test_set, *,
                     pnet: PerceptualFeatureNet | None = None,
                     config=None, method_name: str = "FISTNet",
                     batch_size: int = 8) -> EvalReport:
    """Stylize the test set, then report both comparison pairings.

    The protocol leaves the comparison pair open, so both are computed and
    labeled: stylized-vs-style-references and stylized-vs-test-inputs.
    """
    if len(style_refs) == 0 or len(test_set) == 0:
        raise ValidationError("style and test sets must be non-empty")
    if pnet is None:
        seed = config.perceptual_seed if config is not None else 104
        pnet = PerceptualFeatureNet(seed)

    ones = StyleWeightVector.ones(pipe.gen.num_layers)
    chunks = []
    stackd = test_set.stacked()
    with torch.no_grad():
        for start in range(0, stackd.shape[0], batch_size):
            chunks.append(pipeline_synthesize(
                pipe, stackd[start:start + batch_size], ones))
    stylized = torch.cat(chunks, dim=0)

    stats_style = extract_statistics(pnet, style_refs)
    stats_test = extract_statistics(pnet, test_set)
    stats_stylized = statistics_from_features(pooled_features(pnet, stylized))

    rows = [
        {"method_name": method_name,
         "metric_name": "fid_stylized_vs_style_refs",
         "value": fid(stats_style, stats_stylized)},
        {"method_name": method_name,
         "metric_name": "fid_stylized_vs_test_set",
         "value": fid(stats_test, stats_stylized)},
    ]
    metadata = {
        "protocol": SURROGATE_PROTOCOL,
        "seed": getattr(config, "seed", None),
        "feature_net_seed": pnet.seed,
    }
    return EvalReport(rows=rows, metadata=metadata)


def preference_report(scores: list) -> EvalReport:
    """Per-method preference scores with the average appended, best first."""
    entries = []
    for row in scores:
        missing = {"method", "FP", "IQ", "SQ"} - set(row)
        if missing:
            raise ValidationError(f"score row missing fields {missing}")
        vals = [float(row[k]) for k in ("FP", "IQ", "SQ")]
        for v in vals:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(
                    f"score {v} for {row['method']} outside [0, 1]")
        entries.append((row["method"], vals, math.fsum(vals) / 3.0))
    entries.sort(key=lambda e: -e[2])

    rows = []
    for method, (fp, iq, sq), avg in entries:
        rows.extend([
            {"method_name": method, "metric_name": "FP", "value": fp},
            {"method_name": method, "metric_name": "IQ", "value": iq},
            {"method_name": method, "metric_name": "SQ", "value": sq},
            {"method_name": method, "metric_name": "Avg", "value": avg},
        ])
    return EvalReport(rows=rows, metadata={"protocol": "preference-scores"})


def render_fid_table(report: EvalReport,
                     metric_name: str | None = None) -> str:
    """Two-column plain-text table: method name, then the distance."""
    if metric_name is None:
        metrics = {r["metric_name"] for r in report.rows}
        metric_name = sorted(metrics)[0] if metrics else ""
    rows = [(r["method_name"], r["value"]) for r in report.rows
            if r["metric_name"] == metric_name]
    width = max([len("Methods")] + [len(name) for name, _ in rows])
    lines = [f"{'Methods':<{width}} FID", "-" * (width + 6)]
    for name, value in rows:
        lines.append(f"{name:<{width}} {value:.1f}")
    return "\n".join(lines)
