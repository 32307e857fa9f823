"""Decoding strategies: regular, context-amplified, and three-branch contrastive.

The engine runs a greedy loop over up to three synchronized prefixes, one per
knowledge branch:

* parametric  - the question alone,
* relevant    - the question plus the passage expected to contain the answer,
* irrelevant  - the question plus an off-topic or adversarial passage.

Per step each required branch contributes a full next-token logit vector; the
strategy combines them, the argmax token is appended to every active branch,
and the loop stops on EOS, a token budget, or a stop string.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import IO

import numpy as np

from trident.backends.base import LMBackend, TokenSequence
from trident.errors import LengthMismatch, StrategyBranchMissing

ABSENT = -1.0  # sentinel for trace fields a strategy never computed


def softmax(logits) -> np.ndarray:
    """Stable softmax: positive entries summing to 1, max subtracted first."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _check_lengths(*vectors: np.ndarray) -> None:
    lengths = {v.shape[0] for v in vectors}
    if len(lengths) > 1:
        raise LengthMismatch(f"logit vectors of different lengths: {sorted(lengths)}")


def combine_contrastive(z, z_plus, z_minus, alpha: float) -> np.ndarray:
    """Three-branch ensemble: z + alpha * (z_plus - z_minus)."""
    z, z_plus, z_minus = (np.asarray(v, dtype=np.float64) for v in (z, z_plus, z_minus))
    _check_lengths(z, z_plus, z_minus)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return z + alpha * (z_plus - z_minus)


def ratio_form_probability(z, z_plus, z_minus, alpha: float) -> np.ndarray:
    """Cross-check oracle: p * (p_plus / p_minus)^alpha, renormalized.

    Computed in probability space on purpose, so tests can verify it agrees
    with softmax(combine_contrastive(...)) without sharing that code path.
    """
    z, z_plus, z_minus = (np.asarray(v, dtype=np.float64) for v in (z, z_plus, z_minus))
    _check_lengths(z, z_plus, z_minus)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    weights = softmax(z) * (softmax(z_plus) / softmax(z_minus)) ** alpha
    return weights / weights.sum()


def combine_cad(z, z_plus, alpha: float) -> np.ndarray:
    """Two-branch context amplification: z_plus + alpha * (z_plus - z)."""
    z, z_plus = (np.asarray(v, dtype=np.float64) for v in (z, z_plus))
    _check_lengths(z, z_plus)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return z_plus + alpha * (z_plus - z)


def dynamic_alpha(p_parametric, p_relevant) -> float:
    """Per-step mixing weight from branch confidences.

    With C = max(p_parametric) and C_R = max(p_relevant): 1 - C when the
    parametric branch is strictly more confident, else C_R. Always in [0, 1].
    """
    confidence = float(np.max(p_parametric))
    confidence_rel = float(np.max(p_relevant))
    if confidence > confidence_rel:
        return 1.0 - confidence
    return confidence_rel


class StrategyKind(Enum):
    REGULAR_CLOSED = "reg-closed"
    REGULAR_OPEN = "reg-open"
    CAD = "cad"
    CONTRASTIVE_FIXED = "ours-fixed"
    CONTRASTIVE_DYNAMIC = "ours-dynamic"


_BRANCHES_BY_KIND = {
    StrategyKind.REGULAR_CLOSED: frozenset({"parametric"}),
    StrategyKind.REGULAR_OPEN: frozenset({"relevant"}),
    StrategyKind.CAD: frozenset({"parametric", "relevant"}),
    StrategyKind.CONTRASTIVE_FIXED: frozenset({"parametric", "relevant", "irrelevant"}),
    StrategyKind.CONTRASTIVE_DYNAMIC: frozenset({"parametric", "relevant", "irrelevant"}),
}

DEFAULT_CAD_ALPHA = 0.5
DEFAULT_FIXED_ALPHA = 1.0


@dataclass(frozen=True)
class DecodeStrategy:
    """Closed enumeration of decoding strategies, with the mixing weight."""

    kind: StrategyKind
    alpha: float | None = None

    def __post_init__(self):
        if self.kind in (StrategyKind.CAD, StrategyKind.CONTRASTIVE_FIXED):
            if self.alpha is None or self.alpha < 0:
                raise ValueError(f"{self.kind.value} needs a fixed alpha >= 0, got {self.alpha}")
        elif self.alpha is not None:
            raise ValueError(f"{self.kind.value} does not take a fixed alpha")

    @classmethod
    def regular_closed(cls) -> "DecodeStrategy":
        return cls(StrategyKind.REGULAR_CLOSED)

    @classmethod
    def regular_open(cls) -> "DecodeStrategy":
        return cls(StrategyKind.REGULAR_OPEN)

    @classmethod
    def cad(cls, alpha: float = DEFAULT_CAD_ALPHA) -> "DecodeStrategy":
        return cls(StrategyKind.CAD, alpha)

    @classmethod
    def contrastive_fixed(cls, alpha: float = DEFAULT_FIXED_ALPHA) -> "DecodeStrategy":
        return cls(StrategyKind.CONTRASTIVE_FIXED, alpha)

    @classmethod
    def contrastive_dynamic(cls) -> "DecodeStrategy":
        return cls(StrategyKind.CONTRASTIVE_DYNAMIC)

    @classmethod
    def parse(cls, name: str, alpha: float | None = None) -> "DecodeStrategy":
        """Parse a CLI name like ``cad`` or ``ours-fixed``, honoring --alpha."""
        try:
            kind = StrategyKind(name)
        except ValueError:
            valid = ", ".join(k.value for k in StrategyKind)
            raise ValueError(f"unknown strategy {name!r}; expected one of: {valid}") from None
        if kind is StrategyKind.CAD:
            return cls(kind, DEFAULT_CAD_ALPHA if alpha is None else alpha)
        if kind is StrategyKind.CONTRASTIVE_FIXED:
            return cls(kind, DEFAULT_FIXED_ALPHA if alpha is None else alpha)
        return cls(kind)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def required_branches(self) -> frozenset[str]:
        return _BRANCHES_BY_KIND[self.kind]

    @property
    def alpha_mode(self) -> str:
        if self.kind is StrategyKind.CONTRASTIVE_DYNAMIC:
            return "dynamic"
        if self.alpha is not None:
            return f"fixed({self.alpha})"
        return "none"

    def describe(self) -> dict:
        return {"name": self.name, "alpha": self.alpha, "alpha_mode": self.alpha_mode}


@dataclass
class BranchPrompts:
    """Per-branch prompt token sequences; unused branches stay None."""

    parametric: TokenSequence | None = None
    relevant: TokenSequence | None = None
    irrelevant: TokenSequence | None = None

    def get(self, branch: str) -> TokenSequence | None:
        return getattr(self, branch)

    def present(self) -> frozenset[str]:
        return frozenset(
            b for b in ("parametric", "relevant", "irrelevant") if self.get(b) is not None
        )


@dataclass
class StepTrace:
    step_index: int
    alpha_used: float
    confidence_parametric: float
    confidence_relevant: float
    chosen_token: int
    top5_combined: list[tuple[int, float]]

    def to_json(self) -> dict:
        return {
            "step_index": self.step_index,
            "alpha_used": self.alpha_used,
            "confidence_parametric": self.confidence_parametric,
            "confidence_relevant": self.confidence_relevant,
            "chosen_token": self.chosen_token,
            "top5_combined": [[tok, prob] for tok, prob in self.top5_combined],
        }


@dataclass
class DecodeResult:
    text: str
    tokens: TokenSequence
    traces: list[StepTrace]
    stop_reason: str  # eos | max_tokens | stop_string


@dataclass(frozen=True)
class DecodeLimits:
    max_new_tokens: int = 32
    stop_strings: tuple[str, ...] = ("\n",)


def _top_k(probs: np.ndarray, k: int = 5) -> list[tuple[int, float]]:
    k = min(k, probs.shape[0])
    order = np.argsort(-probs, kind="stable")[:k]
    return [(int(i), float(probs[i])) for i in order]


def _combine_step(strategy: DecodeStrategy, z, z_plus, z_minus):
    """Return (combined logits, alpha_used, confidence_parametric, confidence_relevant)."""
    kind = strategy.kind
    if kind is StrategyKind.REGULAR_CLOSED:
        return z, 0.0, float(np.max(softmax(z))), ABSENT
    if kind is StrategyKind.REGULAR_OPEN:
        return z_plus, 0.0, ABSENT, float(np.max(softmax(z_plus)))
    if kind is StrategyKind.CAD:
        conf_p = float(np.max(softmax(z)))
        conf_r = float(np.max(softmax(z_plus)))
        return combine_cad(z, z_plus, strategy.alpha), strategy.alpha, conf_p, conf_r
    p_parametric = softmax(z)
    p_relevant = softmax(z_plus)
    conf_p = float(np.max(p_parametric))
    conf_r = float(np.max(p_relevant))
    if kind is StrategyKind.CONTRASTIVE_FIXED:
        alpha = strategy.alpha
    else:
        alpha = dynamic_alpha(p_parametric, p_relevant)
    return combine_contrastive(z, z_plus, z_minus, alpha), alpha, conf_p, conf_r


def decode(
    strategy: DecodeStrategy,
    prompts: BranchPrompts,
    backend: LMBackend,
    limits: DecodeLimits = DecodeLimits(),
) -> DecodeResult:
    """Greedy generation under the given strategy.

    Every step appends the token chosen from the combined distribution to all
    active branch prefixes, keeping the generated suffix identical across
    branches. Ties at the argmax go to the lowest token index.
    """
    needed = strategy.required_branches
    missing = needed - prompts.present()
    if missing:
        raise StrategyBranchMissing(
            f"strategy {strategy.name} needs branches {sorted(needed)}, missing {sorted(missing)}"
        )

    prefixes: dict[str, list[int]] = {}
    for branch in needed:
        prompt = list(prompts.get(branch))
        backend.check_prefix(prompt)
        prefixes[branch] = prompt
    prompt_lens = {branch: len(prefixes[branch]) for branch in needed}

    eos_id = backend.vocab.eos_id
    tokens: list[int] = []
    traces: list[StepTrace] = []
    stop_reason = "max_tokens"

    for step in range(limits.max_new_tokens):
        z = z_plus = z_minus = None
        if "parametric" in needed:
            z = backend.next_logits(prefixes["parametric"], prompt_len=prompt_lens["parametric"])
        if "relevant" in needed:
            z_plus = backend.next_logits(prefixes["relevant"], prompt_len=prompt_lens["relevant"])
        if "irrelevant" in needed:
            z_minus = backend.next_logits(prefixes["irrelevant"], prompt_len=prompt_lens["irrelevant"])

        combined, alpha_used, conf_p, conf_r = _combine_step(strategy, z, z_plus, z_minus)
        chosen = int(np.argmax(combined))  # first occurrence = lowest index on ties
        if chosen == eos_id:
            stop_reason = "eos"
            break

        probs = softmax(combined)
        traces.append(
            StepTrace(
                step_index=step,
                alpha_used=float(alpha_used),
                confidence_parametric=conf_p,
                confidence_relevant=conf_r,
                chosen_token=chosen,
                top5_combined=_top_k(probs),
            )
        )
        tokens.append(chosen)
        for branch in needed:
            prefixes[branch].append(chosen)

        if limits.stop_strings:
            text_so_far = backend.detokenize(tokens)
            if any(s in text_so_far for s in limits.stop_strings):
                stop_reason = "stop_string"
                break

    return DecodeResult(
        text=backend.detokenize(tokens),
        tokens=tokens,
        traces=traces,
        stop_reason=stop_reason,
    )


def prompt_hash(tokens: TokenSequence | None) -> str | None:
    if tokens is None:
        return None
    payload = ",".join(str(t) for t in tokens).encode("ascii")
    return hashlib.sha256(payload).hexdigest()[:16]


def write_trace(
    fh: IO[str],
    strategy: DecodeStrategy,
    backend: LMBackend,
    prompts: BranchPrompts,
    traces: list[StepTrace],
) -> None:
    """JSONL trace: one header line, then one line per step."""
    header = {
        "strategy": strategy.name,
        "alpha_mode": strategy.alpha_mode,
        "backend": backend.identity,
        "prompt_hashes": {
            branch: prompt_hash(prompts.get(branch))
            for branch in ("parametric", "relevant", "irrelevant")
        },
    }
    fh.write(json.dumps(header, sort_keys=True) + "\n")
    for trace in traces:
        fh.write(json.dumps(trace.to_json(), sort_keys=True) + "\n")
