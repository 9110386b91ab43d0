"""Off-policy V-Trace targets and policy-gradient advantages.

Given per-step value estimates V_t, a bootstrap value V_T, rewards r_t,
per-step discounts d_t (zero at episodic termination) and clipped importance
ratios rho_t = min(rho_bar, pi/mu), c_t = min(c_bar, pi/mu):

    delta_t = rho_t * (r_t + d_t * V_{t+1} - V_t)
    v_t     = V_t + delta_t + d_t * c_t * (v_{t+1} - V_{t+1})
    A_t     = rho_t * (r_t + d_t * v_{t+1} - V_t)

With rho = c = 1 on on-policy data v_t reduces to the n-step return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["VTraceReturns", "compute_vtrace"]


@dataclass(frozen=True)
class VTraceReturns:
    targets: np.ndarray  # v_t, same length as the inputs
    advantages: np.ndarray  # A_t = rho_t * (r_t + d_t * v_{t+1} - V_t)


def compute_vtrace(
    values: np.ndarray,
    bootstrap_value: float,
    rewards: np.ndarray,
    discounts: np.ndarray,
    log_rhos: np.ndarray,
    rho_bar: float = 1.0,
    c_bar: float = 1.0,
) -> VTraceReturns:
    values = np.asarray(values, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    discounts = np.asarray(discounts, dtype=np.float64)
    log_rhos = np.asarray(log_rhos, dtype=np.float64)
    t = values.shape[0]
    if not (rewards.shape[0] == discounts.shape[0] == log_rhos.shape[0] == t):
        raise ValueError(
            "length mismatch: values %d, rewards %d, discounts %d, log_rhos %d"
            % (t, rewards.shape[0], discounts.shape[0], log_rhos.shape[0])
        )
    ratios = np.exp(log_rhos)
    rhos = np.minimum(rho_bar, ratios)
    cs = np.minimum(c_bar, ratios)

    next_values = np.append(values[1:], bootstrap_value)
    deltas = rhos * (rewards + discounts * next_values - values)

    vs_minus_v = np.zeros(t)
    acc = 0.0
    for i in range(t - 1, -1, -1):
        acc = deltas[i] + discounts[i] * cs[i] * acc
        vs_minus_v[i] = acc
    targets = values + vs_minus_v

    next_targets = np.append(targets[1:], bootstrap_value)
    advantages = rhos * (rewards + discounts * next_targets - values)
    return VTraceReturns(targets=targets, advantages=advantages)
