"""Whole-model finite-difference verification on micro configurations.

Each case builds a tiny model (B <= 8, F <= 4, d <= 4, M = 2), draws a
seeded batch, and checks the analytic gradient of the total objective for
every parameter group against central differences. Covers all four expert
kinds, all three pair-loss forms, and all three loss locations; the gate
MLP, gating table, and tower are exercised by every case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DatasetSchema, FeatureField
from .experts import ExpertConfig
from .losses import LossConfig
from .model import build_model, forward_full
from .numerics import GradCheckReport
from .trainer import gradcheck_model

MICRO_FIELDS = 3
MICRO_CARD = 5
MICRO_EMBED = 2
MICRO_OUT = 3
MICRO_BATCH = 6


@dataclass
class SuiteCase:
    name: str
    configs: list[ExpertConfig]
    loss: LossConfig
    seed: int


def _dnn(out=MICRO_OUT, final=None):
    return ExpertConfig(kind="dnn", out_dim=out, hidden=(4,), dnn_out=final)


def _fm(out=MICRO_OUT):
    return ExpertConfig(kind="fm", out_dim=out)


def _crossnet(out=MICRO_OUT, layers=2):
    return ExpertConfig(kind="crossnet", out_dim=out, cross_layers=layers)


def _cin(out=MICRO_OUT):
    return ExpertConfig(kind="cin", out_dim=out, cin_maps=(3, 2))


def suite_cases() -> list[SuiteCase]:
    corr_out = LossConfig(form="corr", alpha=0.7, location="output")
    return [
        SuiteCase("dnn corr@output", [_dnn(), _dnn()], corr_out, seed=11),
        SuiteCase("fm corr@output", [_fm(), _fm()], corr_out, seed=12),
        SuiteCase("crossnet corr@output", [_crossnet(), _crossnet()], corr_out, seed=13),
        SuiteCase("cin corr@output", [_cin(), _cin()], corr_out, seed=14),
        SuiteCase(
            "crossnet cov_l1@output",
            [_crossnet(), _crossnet()],
            LossConfig(form="cov_l1", alpha=0.7, location="output"),
            seed=15,
        ),
        SuiteCase(
            "crossnet cov_l2@output",
            [_crossnet(), _crossnet()],
            LossConfig(form="cov_l2", alpha=0.7, location="output"),
            seed=16,
        ),
        SuiteCase(
            "dnn corr@input",
            [_dnn(final=MICRO_OUT), _dnn(final=MICRO_OUT)],
            LossConfig(form="corr", alpha=0.7, location="input"),
            seed=17,
        ),
        SuiteCase(
            "crossnet corr@intermediate",
            [_crossnet(), _crossnet()],
            LossConfig(form="corr", alpha=0.7, location="intermediate"),
            seed=18,
        ),
        SuiteCase(
            "hetero dnn+cin corr@output", [_dnn(), _cin()], corr_out, seed=19
        ),
        SuiteCase(
            "bce only (alpha=0)",
            [_dnn(), _crossnet()],
            LossConfig(form="corr", alpha=0.0, location="output"),
            seed=20,
        ),
    ]


def micro_schema() -> DatasetSchema:
    return DatasetSchema(
        fields=tuple(FeatureField(f"f{j}", MICRO_CARD) for j in range(MICRO_FIELDS))
    )


def _mlp_kink_margins(mlp, cache, vals: list[float]) -> None:
    for (x, z), act in zip(cache, mlp.activations):
        if act:
            vals.append(float(np.abs(z).min()))


def kink_margin(model, fc) -> float:
    """Distance of the forward pass from the nearest non-differentiable point.

    Central differences are only meaningful where the objective is smooth
    in an h-neighborhood; this collects |pre-activation| for every ReLU
    site (experts, alignment heads, gate MLP, tower) and, for the L1
    covariance form, |entry| of the centered cross matrices (sign kink).
    """
    vals: list[float] = []
    _mlp_kink_margins(model.tower, fc.tower_cache, vals)
    gn, gate_mlp_cache, _ = fc.gate_cache
    _mlp_kink_margins(gn.mlp, gate_mlp_cache, vals)
    for expert, cache in zip(model.experts, fc.expert_caches):
        if expert.kind == "dnn":
            core_cache, align_cache = cache
            _mlp_kink_margins(expert.core, core_cache, vals)
        else:  # fm, crossnet, cin: alignment head is the only kink site
            align_cache = cache[-1]
        _, z = align_cache
        vals.append(float(np.abs(z).min()))
    if model.loss.active and model.loss.form == "cov_l1":
        if model.loss.location == "output":
            sets = [fc.outputs]
        elif model.loss.location == "input":
            sets = [fc.embeds]
        else:
            layered = [
                model.experts[m].layer_outputs(fc.expert_caches[m])
                for m in range(model.num_experts)
            ]
            sets = [
                [layers[l] for layers in layered] for l in range(len(layered[0]))
            ]
        for mats in sets:
            centered = [m - m.mean(axis=0, keepdims=True) for m in mats]
            for i in range(len(centered)):
                for j in range(i + 1, len(centered)):
                    cross = centered[i].T @ centered[j]
                    vals.append(float(np.abs(cross).min()))
    return min(vals)


def run_case(
    case: SuiteCase,
    h: float = 1e-5,
    tol: float = 1e-4,
    margin: float = 1e-3,
    max_tries: int = 25,
) -> GradCheckReport:
    """Gradcheck the case on the first seed whose forward pass clears the
    differentiability margin.

    The seed advance looks only at forward quantities, never at the
    gradient comparison, so a wrong backward pass cannot slip through.
    """
    from .model import named_params

    for attempt in range(max_tries):
        seed = case.seed + 101 * attempt
        model = build_model(
            micro_schema(),
            "me",
            case.configs,
            case.loss,
            embed_dim=MICRO_EMBED,
            gate_hidden=(4,),
            tower_hidden=(4,),
            seed=seed,
        )
        rng = np.random.default_rng(seed + 1000)
        # genericize the parameter point: exact zeros (biases, the gate's
        # zero-initialized final layer) would leave whole paths with a
        # vacuous 0 == 0 comparison
        for _, arr in named_params(model):
            arr += rng.uniform(-0.05, 0.05, size=arr.shape)
        indices = rng.integers(0, MICRO_CARD, size=(MICRO_BATCH, MICRO_FIELDS))
        labels = np.zeros(MICRO_BATCH)
        labels[: MICRO_BATCH // 2] = 1.0
        if kink_margin(model, forward_full(model, indices)) < margin:
            continue
        return gradcheck_model(model, indices, labels, h=h, tol=tol)
    raise RuntimeError(f"no kink-free micro configuration found for {case.name!r}")


def run_suite(h: float = 1e-5, tol: float = 1e-4) -> list[tuple[str, GradCheckReport]]:
    return [(case.name, run_case(case, h=h, tol=tol)) for case in suite_cases()]
