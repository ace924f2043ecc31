"""Rate and fairness evaluation for a (ChannelSet, BeamformingSet) pair.

Beams are keyed (tx, target); co-channel interference at a receiver is every
other beam of its own transmitter, adjacent-channel is everything audible from
the other transmitters.  Relay receivers see only the TBS.  Rates are
log2(1 + SINR) in bits/s/Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .scenario import GROUPS, ScenarioConfig


def beam_catalog(config: ScenarioConfig) -> list:
    """Canonical beam order: TBS user beams, both relay feeds, then the relay
    and satellite user beams group by group."""
    cat = [("tbs", uid) for uid in config.user_ids("tbs")]
    cat += [("tbs", "usv"), ("tbs", "uav")]
    for g in ("usv", "uav", "sat"):
        cat += [(g, uid) for uid in config.user_ids(g)]
    return cat


@dataclass
class BeamformingSet:
    vectors: dict          # (tx, target) -> complex ndarray

    @classmethod
    def zeros(cls, config: ScenarioConfig):
        N = config.antenna_counts
        return cls({(tx, tg): np.zeros(N[tx], dtype=complex)
                    for tx, tg in beam_catalog(config)})

    def beams_from(self, tx: str):
        return [(tg, w) for (t, tg), w in self.vectors.items() if t == tx]

    def power_used(self, tx: str) -> float:
        return sum(float(np.vdot(w, w).real) for _, w in self.beams_from(tx))

    def budget_residuals(self, config: ScenarioConfig) -> dict:
        return {tx: self.power_used(tx) - config.power_budgets[tx]
                for tx in GROUPS}

    def copy(self):
        return BeamformingSet({k: v.copy() for k, v in self.vectors.items()})


def _power(h: np.ndarray, w: np.ndarray) -> float:
    if h.ndim == 1:
        return float(abs(np.vdot(h, w)) ** 2)
    y = h.conj().T @ w
    return float(np.vdot(y, y).real)


@dataclass
class PowerBreakdown:
    desired: float
    co_channel: float
    adjacent: float
    terms: list            # (tx, target, label, watts)

    @property
    def interference(self):
        return self.co_channel + self.adjacent


def received_powers(channels: ChannelSet, W: BeamformingSet) -> dict:
    """Per-receiver decomposition of every |h^H w|^2 / ||H^H w||^2 term."""
    out = {}
    for uid, links in channels.user_links.items():
        group = uid.rstrip("0123456789")
        des = cc = adj = 0.0
        terms = []
        for tx, lc in links.items():
            for target, w in W.beams_from(tx):
                if lc.value.shape[0] != w.shape[0]:
                    raise ValueError(f"beam ({tx},{target}) does not match "
                                     f"channel {tx}->{uid}")
                p = _power(lc.value, w)
                if tx == group and target == uid:
                    label, des = "desired", des + p
                elif tx == group:
                    label, cc = "co_channel", cc + p
                else:
                    label, adj = "adjacent", adj + p
                terms.append((tx, target, label, p))
        out[uid] = PowerBreakdown(des, cc, adj, terms)
    for relay, lc in channels.relay_links.items():
        des = cc = 0.0
        terms = []
        for target, w in W.beams_from("tbs"):
            p = _power(lc.value, w)
            if target == relay:
                label, des = "desired", des + p
            else:
                label, cc = "co_channel", cc + p
            terms.append(("tbs", target, label, p))
        out[relay + "_backhaul"] = PowerBreakdown(des, cc, 0.0, terms)
    return out


@dataclass
class RateReport:
    user_rates: dict
    backhaul_rates: dict           # "usv"/"uav"
    causality_residuals: dict      # sum(served) - backhaul, <= 0 ok
    min_rate: float
    jain: float
    powers: dict                   # receiver -> PowerBreakdown
    noise: dict                    # receiver -> watts


def _noise_for(noise, uid_or_relay, group):
    if isinstance(noise, dict):
        return noise[group]
    return noise


def rate_report(channels: ChannelSet, W: BeamformingSet, noise) -> RateReport:
    """noise: shared variance in watts, or a per-group dict (relay receivers
    use their own group's value)."""
    powers = received_powers(channels, W)
    user_rates, noise_used = {}, {}
    for uid in channels.user_links:
        group = uid.rstrip("0123456789")
        s2 = _noise_for(noise, uid, group)
        pb = powers[uid]
        user_rates[uid] = math.log2(1.0 + pb.desired / (pb.interference + s2))
        noise_used[uid] = s2
    backhaul = {}
    for relay in channels.relay_links:
        s2 = _noise_for(noise, relay, relay)
        pb = powers[relay + "_backhaul"]
        backhaul[relay] = math.log2(1.0 + pb.desired / (pb.interference + s2))
        noise_used[relay + "_backhaul"] = s2
    causality = {
        relay: sum(r for uid, r in user_rates.items()
                   if uid.rstrip("0123456789") == relay) - backhaul[relay]
        for relay in ("usv", "uav")}
    rates = list(user_rates.values())
    return RateReport(user_rates, backhaul, causality, min(rates),
                      jain_index(rates), powers, noise_used)


def causality_check(report: RateReport) -> tuple:
    return report.causality_residuals["usv"], report.causality_residuals["uav"]


def jain_index(rates) -> float:
    x = np.asarray(rates, dtype=float)
    if x.size == 0 or np.any(x < 0):
        raise ValueError("rates must be nonnegative and nonempty")
    s2 = float(np.sum(x * x))
    if s2 == 0.0:
        raise ValueError("all-zero rates have no fairness index")
    return float(np.sum(x)) ** 2 / (x.size * s2)
