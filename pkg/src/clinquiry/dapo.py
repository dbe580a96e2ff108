"""Clipped-surrogate policy objective with group-normalized advantages.

The objective is evaluated at toy scale on a tabular softmax policy over a
fixed-horizon state chain (state at step t is ``t % num_states``).  For each
prompt, a group of G sampled outputs is scored; each output's advantage is
its reward normalized by the group mean and population standard deviation.
Token terms are ``min(ratio * A, clip(ratio, 1 - eps_low, 1 + eps_high) * A)``
with the probability ratio taken against the sampling-time policy, summed and
divided by the total token count of the group.

The analytic gradient treats the clip as piecewise constant (subgradient 0 at
the kinks) and is validated against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-8


class GroupTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class ClipConfig:
    """Asymmetric clip bounds for the probability ratio."""

    eps_low: float = 0.2
    eps_high: float = 0.28

    def __post_init__(self):
        if not 0 < self.eps_low < 1:
            raise ValueError("eps_low must be in (0, 1)")
        if self.eps_high <= 0:
            raise ValueError("eps_high must be > 0")


def normalize_advantages(rewards) -> np.ndarray:
    """Group-relative advantages: (R_i - mean) / population std.

    A zero-variance group carries no learning signal, so its advantages are
    all zero rather than an error.
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 1 or rewards.size < 2:
        raise GroupTooSmall(f"need a group of >= 2 rewards, got shape {rewards.shape}")
    std = rewards.std()  # ddof=0: population std over the full group
    if std < STD_FLOOR:
        return np.zeros_like(rewards)
    return (rewards - rewards.mean()) / std


def clipped_term(ratio: float, advantage: float, cfg: ClipConfig = ClipConfig()) -> float:
    """One token's surrogate term: min(ratio*A, clip(ratio)*A)."""
    if ratio <= 0:
        raise ValueError("ratio must be > 0")
    clipped = min(max(ratio, 1.0 - cfg.eps_low), 1.0 + cfg.eps_high)
    return min(ratio * advantage, clipped * advantage)


@dataclass(frozen=True)
class ToyPolicy:
    """Tabular softmax policy: one logit row per chain state."""

    logits: np.ndarray  # (num_states, num_actions)
    horizon: int

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float)
        object.__setattr__(self, "logits", logits)
        if logits.ndim != 2:
            raise ValueError("logits must be a (states, actions) matrix")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def num_states(self) -> int:
        return self.logits.shape[0]

    @property
    def num_actions(self) -> int:
        return self.logits.shape[1]

    def log_probs(self) -> np.ndarray:
        """Row-wise log softmax; each state's action distribution sums to 1."""
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def states_for(self, length: int) -> np.ndarray:
        return np.arange(length) % self.num_states

    def output_logprobs(self, output: np.ndarray) -> np.ndarray:
        """Per-token log-probabilities of an action sequence along the chain."""
        output = np.asarray(output, dtype=int)
        if output.size and output.max() >= self.num_actions:
            raise ValueError("action index out of range")
        return self.log_probs()[self.states_for(len(output)), output]

    def sample_output(self, rng: np.random.Generator, length: int) -> np.ndarray:
        probs = self.probs()
        states = self.states_for(length)
        return np.array(
            [rng.choice(self.num_actions, p=probs[s]) for s in states], dtype=int
        )

    def with_logits(self, logits: np.ndarray) -> "ToyPolicy":
        return ToyPolicy(logits=np.asarray(logits, dtype=float), horizon=self.horizon)


@dataclass(frozen=True)
class GroupSample:
    """G sampled outputs for one prompt: token sequences, rewards, old logprobs."""

    prompt_id: str
    outputs: tuple[np.ndarray, ...]
    rewards: np.ndarray
    old_logprobs: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=float))
        object.__setattr__(
            self, "outputs", tuple(np.asarray(o, dtype=int) for o in self.outputs)
        )
        object.__setattr__(
            self, "old_logprobs", tuple(np.asarray(lp, dtype=float) for lp in self.old_logprobs)
        )
        if not (len(self.outputs) == len(self.rewards) == len(self.old_logprobs)):
            raise ValueError("outputs, rewards, old_logprobs must align")
        if len(self.outputs) < 2:
            raise GroupTooSmall("a group needs >= 2 outputs")
        for o, lp in zip(self.outputs, self.old_logprobs):
            if len(o) != len(lp):
                raise ValueError("old_logprobs must align per token with outputs")
            if len(o) == 0:
                raise ValueError("outputs must be non-empty")

    @property
    def total_tokens(self) -> int:
        return sum(len(o) for o in self.outputs)


def objective(policy: ToyPolicy, batch: list[GroupSample], cfg: ClipConfig = ClipConfig()) -> float:
    """Token-level surrogate objective, averaged over groups.

    Deterministic: groups and tokens are reduced in a fixed order.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    log_probs = policy.log_probs()
    total = 0.0
    for group in batch:
        advantages = normalize_advantages(group.rewards)
        group_sum = 0.0
        for out, old_lp, adv in zip(group.outputs, group.old_logprobs, advantages):
            states = policy.states_for(len(out))
            ratios = np.exp(log_probs[states, out] - old_lp)
            clipped = np.clip(ratios, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high)
            group_sum += float(np.minimum(ratios * adv, clipped * adv).sum())
        total += group_sum / group.total_tokens
    return total / len(batch)


def gradient(policy: ToyPolicy, batch: list[GroupSample], cfg: ClipConfig = ClipConfig()) -> np.ndarray:
    """Analytic d(objective)/d(logits), clip treated as piecewise constant.

    A token contributes ``A * ratio * d log pi / d theta`` when its unclipped
    term attains the min (which includes the whole unclipped region), and 0
    when the clipped branch is strictly smaller.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    log_probs = policy.log_probs()
    probs = np.exp(log_probs)
    grad = np.zeros_like(policy.logits)
    for group in batch:
        advantages = normalize_advantages(group.rewards)
        scale = 1.0 / (group.total_tokens * len(batch))
        for out, old_lp, adv in zip(group.outputs, group.old_logprobs, advantages):
            if adv == 0.0:
                continue
            states = policy.states_for(len(out))
            ratios = np.exp(log_probs[states, out] - old_lp)
            clipped = np.clip(ratios, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high)
            active = ratios * adv <= clipped * adv
            for t in np.flatnonzero(active):
                s, a = states[t], out[t]
                coef = adv * ratios[t] * scale
                grad[s] -= coef * probs[s]
                grad[s, a] += coef
    return grad


def finite_difference_gradient(
    policy: ToyPolicy, batch: list[GroupSample], cfg: ClipConfig = ClipConfig(), h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of the objective; the check oracle."""
    base = policy.logits
    fd = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        bumped = base.copy()
        bumped[idx] += h
        plus = objective(policy.with_logits(bumped), batch, cfg)
        bumped[idx] -= 2 * h
        minus = objective(policy.with_logits(bumped), batch, cfg)
        fd[idx] = (plus - minus) / (2 * h)
    return fd


def boundary_states(
    policy: ToyPolicy, batch: list[GroupSample], cfg: ClipConfig = ClipConfig(), tol: float = 1e-3,
) -> set[int]:
    """States touched by any token whose ratio sits within tol of a clip bound.

    Finite differences are meaningless across the kink, so gradient checks
    exclude the logit rows of these states.
    """
    log_probs = policy.log_probs()
    flagged: set[int] = set()
    for group in batch:
        for out, old_lp in zip(group.outputs, group.old_logprobs):
            states = policy.states_for(len(out))
            ratios = np.exp(log_probs[states, out] - old_lp)
            near = (np.abs(ratios - (1.0 - cfg.eps_low)) < tol) | (
                np.abs(ratios - (1.0 + cfg.eps_high)) < tol
            )
            flagged.update(int(s) for s in states[near])
    return flagged


def gradient_check(
    policy: ToyPolicy,
    batch: list[GroupSample],
    cfg: ClipConfig = ClipConfig(),
    h: float = 1e-5,
    tol: float = 1e-3,
) -> tuple[float, int]:
    """Max relative error between analytic and FD gradients, boundary rows excluded.

    Returns (max_relative_error, number_of_checked_coordinates).
    """
    analytic = gradient(policy, batch, cfg)
    fd = finite_difference_gradient(policy, batch, cfg, h)
    excluded = boundary_states(policy, batch, cfg, tol)
    max_err, checked = 0.0, 0
    for idx in np.ndindex(analytic.shape):
        if idx[0] in excluded:
            continue
        denom = max(abs(analytic[idx]), abs(fd[idx]), 1e-6)
        max_err = max(max_err, abs(analytic[idx] - fd[idx]) / denom)
        checked += 1
    return max_err, checked


def make_group(
    old_policy: ToyPolicy,
    rng: np.random.Generator,
    *,
    prompt_id: str = "p0",
    group_size: int = 4,
    reward_scale: float = 1.0,
) -> GroupSample:
    """Sample a group from the old policy with random rewards and exact logprobs."""
    outputs, old_lps = [], []
    for _ in range(group_size):
        length = int(rng.integers(1, old_policy.horizon + 1))
        out = old_policy.sample_output(rng, length)
        outputs.append(out)
        old_lps.append(old_policy.output_logprobs(out))
    rewards = rng.normal(0.0, reward_scale, size=group_size)
    return GroupSample(
        prompt_id=prompt_id,
        outputs=tuple(outputs),
        rewards=rewards,
        old_logprobs=tuple(old_lps),
    )


def make_instance(
    rng: np.random.Generator,
    *,
    num_states: int = 3,
    num_actions: int = 2,
    horizon: int = 5,
    num_groups: int = 2,
    group_size: int = 4,
    divergence: float = 0.4,
) -> tuple[ToyPolicy, list[GroupSample]]:
    """A random (policy, batch) pair; ``divergence`` spreads the ratios.

    Outputs are sampled under an old policy; the returned policy is the old
    one perturbed, so ratios differ from 1 and both clip regions get hit.
    """
    old = ToyPolicy(
        logits=rng.normal(0.0, 1.0, size=(num_states, num_actions)), horizon=horizon
    )
    batch = [
        make_group(old, rng, prompt_id=f"p{g}", group_size=group_size)
        for g in range(num_groups)
    ]
    new = old.with_logits(old.logits + rng.normal(0.0, divergence, size=old.logits.shape))
    return new, batch


def ascent_curve(
    policy: ToyPolicy,
    batch: list[GroupSample],
    cfg: ClipConfig = ClipConfig(),
    *,
    learning_rate: float = 1e-4,
    steps: int = 10,
) -> list[float]:
    """Objective values along plain gradient-ascent steps on a fixed batch."""
    values = [objective(policy, batch, cfg)]
    current = policy
    for _ in range(steps):
        current = current.with_logits(current.logits + learning_rate * gradient(current, batch, cfg))
        values.append(objective(current, batch, cfg))
    return values
