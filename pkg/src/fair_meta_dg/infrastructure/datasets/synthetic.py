"""잠재요인 (c, s, a) 에서 관측 x 를 만드는 다중 도메인 합성 데이터 생성기.

구조적 파라미터 (w, μ_a, M, style mean) 는 ``SynthSpec.mixing_seed`` 로,
도메인별 샘플은 ``generate`` 의 seed 로 결정됩니다.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger

from fair_meta_dg.domain.config import SynthSpec
from fair_meta_dg.domain.model import DomainDataset, ExampleBatch, GroundTruthLatents


@dataclass(frozen=True, eq=False)
class LabelLaw:
    """P(y | c). 모든 도메인이 이 객체 하나를 공유합니다."""

    weights: np.ndarray
    noise: float

    def score(self, c: np.ndarray) -> np.ndarray:
        return c @ self.weights

    def sample(self, c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        eps = rng.normal(0.0, self.noise, size=c.shape[0]) if self.noise > 0 else 0.0
        return (self.score(c) + eps > 0).astype(np.int64)


class SyntheticGenerator:
    def __init__(self, spec: SynthSpec) -> None:
        spec.validate()
        self.spec = spec
        rng = np.random.default_rng(spec.mixing_seed)

        w = rng.standard_normal(spec.content_dim)
        self.label_law = LabelLaw(weights=w / np.linalg.norm(w), noise=spec.noise)

        direction = rng.standard_normal(spec.sensitive_dim)
        self.sensitive_mean = direction / np.linalg.norm(direction) * spec.sensitive_shift

        k = spec.content_dim + spec.style_dim + spec.sensitive_dim
        mixing = rng.standard_normal((spec.feature_dim, k)) / np.sqrt(k)
        while np.linalg.matrix_rank(mixing) < k:
            mixing = rng.standard_normal((spec.feature_dim, k)) / np.sqrt(k)
        self.mixing = mixing

        if spec.style_means is not None:
            self.style_means = np.asarray(spec.style_means, dtype=np.float64)
        else:
            self.style_means = rng.standard_normal((spec.domains, spec.style_dim)) * spec.style_scale

    @staticmethod
    def domain_name(index: int) -> str:
        return f"domain_{index}"

    def generate(self, per_domain_count: int, seed: int) -> list[DomainDataset]:
        if per_domain_count < 1:
            raise ValueError(f"per_domain_count must be positive, got {per_domain_count}")
        streams = np.random.SeedSequence(seed).spawn(self.spec.domains)
        datasets = [
            self._generate_domain(e, per_domain_count, np.random.default_rng(stream))
            for e, stream in enumerate(streams)
        ]
        logger.debug(
            "합성 데이터 생성",
            domains=len(datasets),
            per_domain_count=per_domain_count,
            seed=seed,
        )
        return datasets

    def _generate_domain(self, e: int, n: int, rng: np.random.Generator) -> DomainDataset:
        spec = self.spec
        domain_id = self.domain_name(e)

        c = rng.standard_normal((n, spec.content_dim))
        s = self.style_means[e] + rng.standard_normal((n, spec.style_dim))
        y = self.label_law.sample(c, rng)

        # P(z = 2y-1) = (1 + ρ_e) / 2
        aligned = 2 * y - 1
        keep = rng.random(n) < (1.0 + spec.correlations[e]) / 2.0
        z = np.where(keep, aligned, -aligned).astype(np.int64)

        a = z[:, None] * self.sensitive_mean + rng.standard_normal((n, spec.sensitive_dim))
        latent = np.concatenate([c, s, a], axis=1)
        x = latent @ self.mixing.T
        if spec.feature_noise > 0:
            x = x + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))

        batch = ExampleBatch(
            x=x,
            z=z,
            y=y,
            record_ids=tuple(f"{domain_id}:{i}" for i in range(n)),
            domains=(domain_id,) * n,
        )
        return DomainDataset(
            domain_id=domain_id,
            batch=batch,
            latents=GroundTruthLatents(c=c, s=s, a=a),
        )


def generate_synthetic(spec: SynthSpec, per_domain_count: int, seed: int) -> list[DomainDataset]:
    return SyntheticGenerator(spec).generate(per_domain_count, seed)
