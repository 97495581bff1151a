"""Per-stage adversarial losses and the assembled training objective."""

from __future__ import annotations

import json
from typing import NamedTuple, Sequence

import torch

from .discriminators import DiscOutput

LOG_EPS = 1e-12


class LossReport(NamedTuple):
    """Scalar summary of one training step; the generator total satisfies
    g_total = sum(per_stage_g) + lambda_scm * scm + kl_weight * kl."""

    g_total: float
    d_total: float
    per_stage_g: tuple[float, ...]
    per_stage_d: tuple[float, ...]
    scm: float
    kl: float
    lambda_scm: float
    kl_weight: float


def _mean_score(raw: torch.Tensor) -> torch.Tensor:
    """Expectation over examples (and patches, for patch-grid outputs)."""
    return raw.mean()


def generator_adversarial_loss(fake_out: DiscOutput, mode: str) -> torch.Tensor:
    """Generator-side loss for one stage given critic outputs on fakes.

    log mode: -1/2 E[log D(x)] - 1/2 E[log D(x, s)] with post-sigmoid scores;
    wgan-gp mode: -1/2 E[D(x)] - 1/2 E[D(x, s)] with raw scores.
    """
    u, c = fake_out.uncond, fake_out.cond
    if mode == "log":
        return (
            -0.5 * _mean_score(torch.log(u.clamp_min(LOG_EPS)))
            - 0.5 * _mean_score(torch.log(c.clamp_min(LOG_EPS)))
        )
    return -0.5 * _mean_score(u) - 0.5 * _mean_score(c)


def discriminator_adversarial_loss(
    real_out: DiscOutput,
    fake_out: DiscOutput,
    gp: torch.Tensor | float,
    mode: str,
    gp_weight: float = 10.0,
) -> torch.Tensor:
    """Discriminator-side loss for one stage.

    log mode: the four -1/2 log terms over both heads on real and fake.
    wgan-gp mode: 1/2 (E[D(fake)] - E[D(real)]) per head plus the weighted
    gradient penalty; ``gp`` is ignored in log mode.
    """
    if mode == "log":
        loss = torch.zeros(())
        for real, fake in ((real_out.uncond, fake_out.uncond), (real_out.cond, fake_out.cond)):
            loss = loss - 0.5 * _mean_score(torch.log(real.clamp_min(LOG_EPS)))
            loss = loss - 0.5 * _mean_score(torch.log((1.0 - fake).clamp_min(LOG_EPS)))
        return loss
    loss = 0.5 * (_mean_score(fake_out.uncond) - _mean_score(real_out.uncond))
    loss = loss + 0.5 * (_mean_score(fake_out.cond) - _mean_score(real_out.cond))
    return loss + gp_weight * (gp if isinstance(gp, torch.Tensor) else torch.tensor(float(gp)))


def total_loss(
    per_stage_g: Sequence[float],
    scm: float = 0.0,
    kl: float = 0.0,
    lambda_scm: float = 0.0,
    kl_weight: float = 0.0,
    per_stage_d: Sequence[float] | None = None,
) -> LossReport:
    """Assemble the step report; all inputs are plain scalars."""
    per_stage_g = tuple(float(v) for v in per_stage_g)
    per_stage_d = tuple(float(v) for v in (per_stage_d or (0.0,) * len(per_stage_g)))
    g_total = sum(per_stage_g) + lambda_scm * scm + kl_weight * kl
    return LossReport(
        g_total=g_total,
        d_total=sum(per_stage_d),
        per_stage_g=per_stage_g,
        per_stage_d=per_stage_d,
        scm=float(scm),
        kl=float(kl),
        lambda_scm=float(lambda_scm),
        kl_weight=float(kl_weight),
    )


def report_json_line(report: LossReport, step: int) -> str:
    """One metrics-log line: the step index plus every scalar field."""
    record: dict = {"step": step}
    record.update(
        g_total=report.g_total,
        d_total=report.d_total,
        scm=report.scm,
        kl=report.kl,
        lambda_scm=report.lambda_scm,
        kl_weight=report.kl_weight,
    )
    for i, v in enumerate(report.per_stage_g):
        record[f"g{i}"] = v
    for i, v in enumerate(report.per_stage_d):
        record[f"d{i}"] = v
    return json.dumps(record, sort_keys=True)
