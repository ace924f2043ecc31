"""Construction of the two per-iteration convex subproblems.

Beamforming: variables (eta, rate slacks r, stacked Re/Im beamformers, power
slacks S); every |h^H w|^2 is under-approximated by its tangent F, the
log-interference terms are over-approximated by tangents of log2(T + s2) in
the true quadratic T.  Trajectory: variables (eta, r, relay steps, distance
slacks); received powers become constant/x quotients in the slacks.  Leakage
slacks are capped by tangents of the convex distance powers (fourth power
for the surface relay, squared for the air relay); serving links use
separate slack copies bounded below by the exact quadratic epigraph, so the
two sides of the bound stay valid globally.  Clearances and kinematics are
linearized/second-order-cone as usual.

Internally everything is nondimensionalized: beamformers in sqrt(budget)
units, powers in noise units, slacks relative to their expansion values,
relay steps in dt*Vmax units.  Layouts record the scales to map back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .atoms import (LOG2E, AffineAtom, ConvexProgram, LogRateAtom, QuadAtom,
                    QuotientLogAtom, SocAtom, QuadTerm, complex_to_real_map,
                    complex_to_real_vec, real_to_complex_vec)
from .channel import INTERFERENCE_MAP, ChannelSet, LinkChannel
from .rates import BeamformingSet, PowerBreakdown, beam_catalog, received_powers
from .scenario import GROUPS, NodeKinematics, ScenarioConfig, WorldState


@dataclass
class AffineForm:
    a: np.ndarray
    b: float

    def value(self, z):
        return float(self.a @ np.asarray(z, dtype=float)) + self.b


@dataclass
class LinearBound:
    slope: float
    offset: float

    def value(self, T):
        return self.slope * T + self.offset


def _group_of(uid):
    return uid.rstrip("0123456789")


def _power(h, w):
    if h.ndim == 1:
        return float(abs(np.vdot(h, w)) ** 2)
    y = h.conj().T @ w
    return float(np.vdot(y, y).real)


# ---------------------------------------------------------------- expansion

def slack_catalog(config: ScenarioConfig) -> list:
    """Ordered distance-slack keys (kind, tx, rx); backhaul first."""
    uids = config.user_ids()
    cat = [("u", "tbs", "usv")] + [("u", "usv", uid) for uid in uids]
    cat += [("l", "tbs", "uav")] + [("l", "uav", uid) for uid in uids]
    return cat


def _slack_link(channels: ChannelSet, key) -> LinkChannel:
    kind, tx, rx = key
    if rx in ("usv", "uav"):
        return channels.relay_links[rx]
    return channels.user_links[rx][tx]


def _mobile_position(key, q_v, q_a):
    _, tx, rx = key
    node = rx if rx in ("usv", "uav") else tx
    return q_v if node == "usv" else q_a


def distance_power(link: LinkChannel, q_mobile) -> float:
    d2 = float(np.sum((np.asarray(q_mobile, float) - link.target) ** 2)) \
        + link.height_gap_sq
    return d2 * d2 if link.slack_kind == "u" else d2


@dataclass
class ExpansionPoint:
    W: BeamformingSet
    q_v: np.ndarray
    q_a: np.ndarray
    true_powers: dict          # receiver -> PowerBreakdown at W
    distance_powers: dict      # slack key -> U^l or L^l


def make_expansion(channels: ChannelSet, W: BeamformingSet, q_v, q_a,
                   config: ScenarioConfig) -> ExpansionPoint:
    dp = {}
    for key in slack_catalog(config):
        link = _slack_link(channels, key)
        dp[key] = distance_power(link, _mobile_position(key, q_v, q_a))
    return ExpansionPoint(W, np.asarray(q_v, float).copy(),
                          np.asarray(q_a, float).copy(),
                          received_powers(channels, W), dp)


# ------------------------------------------------------- elementary bounds

def linearize_power(h: np.ndarray, w_l: np.ndarray) -> AffineForm:
    """Tangent of |h^H w|^2 (or ||H^H w||^2) at w_l, over v = [Re w; Im w]."""
    G = complex_to_real_map(h)
    v_l = complex_to_real_vec(w_l)
    Gv = G @ v_l
    return AffineForm(2.0 * (G.T @ Gv), -float(Gv @ Gv))


def interference_upper_bound(T_l: float, sigma2: float) -> LinearBound:
    """Tangent of log2(T + sigma2) at T_l; concavity makes it an upper bound."""
    if T_l < 0:
        raise ValueError("expansion interference power must be nonnegative")
    k = LOG2E / (T_l + sigma2)
    return LinearBound(k, math.log2(T_l + sigma2) - k * T_l)


def distance_tangent(kind: str, X_l: float, q_l, target) -> AffineForm:
    """Affine under-estimator of the convex distance power at q_l, over q."""
    q_l = np.asarray(q_l, float)
    g = np.asarray(q_l - target, float)
    grad = 4.0 * math.sqrt(X_l) * g if kind == "u" else 2.0 * g
    return AffineForm(grad, X_l - float(grad @ q_l))


def distance_slack_bounds(expansion: ExpansionPoint, channels: ChannelSet,
                          config: ScenarioConfig) -> dict:
    """key -> (X^l, affine bound over the mobile position)."""
    out = {}
    for key in slack_catalog(config):
        link = _slack_link(channels, key)
        q_l = _mobile_position(key, expansion.q_v, expansion.q_a)
        X_l = expansion.distance_powers[key]
        if X_l <= 0:
            raise ValueError(f"zero distance at expansion for {key}")
        out[key] = (X_l, distance_tangent(key[0], X_l, q_l, link.target))
    return out


@dataclass
class RateHatBound:
    """Tangent lower bound of log2(d0 + sum_k N_k/x_k) at x = X."""

    b0: float
    B: dict                    # key -> nonnegative slope
    X: dict

    def value(self, x: dict):
        return self.b0 - sum(self.B[k] * (x[k] - self.X[k]) for k in self.B)


def rate_hat_lower_bound(d_const: float, contribs: dict) -> RateHatBound:
    """contribs: key -> (N_k, X_k) with N_k >= 0, X_k > 0; d_const includes
    the noise term."""
    total = d_const + sum(N / X for N, X in contribs.values())
    B = {k: LOG2E * N / (X * X * total) for k, (N, X) in contribs.items()}
    return RateHatBound(math.log2(total), B,
                        {k: X for k, (_, X) in contribs.items()})


def safe_distance_linearization(q_l, target, radius: float) -> AffineForm:
    """Affine form whose nonpositivity implies |q - target| >= radius."""
    q_l = np.asarray(q_l, float)
    g = q_l - np.asarray(target, float)
    gg = float(g @ g)
    if gg == 0.0:
        raise ValueError("clearance gradient undefined at the target point")
    return AffineForm(-2.0 * g, radius ** 2 + 2.0 * float(g @ q_l) - gg)


def restore_safety(q, state: WorldState, kin: NodeKinematics,
                   pad: float = 1e-3) -> np.ndarray:
    """Project a surface-relay position out of any violated clearance disc."""
    q = np.asarray(q, float).copy()
    targets = [(ob.center, ob.radius) for ob in state.obstacles]
    targets += [(p, kin.safe_radius_ship) for p in state.user_positions.values()]
    for _ in range(16):
        worst, radius, center = 0.0, None, None
        for c, r in targets:
            v = r - float(np.linalg.norm(q - c))
            if v > worst:
                worst, radius, center = v, r, c
        if center is None:
            return q
        d = q - center
        nd = float(np.linalg.norm(d))
        if nd == 0.0:
            d, nd = np.array([1.0, 0.0]), 1.0
        q = center + d / nd * (radius + pad)
    raise ValueError("could not restore clearance: discs overlap around the point")


# ------------------------------------------------------- beamforming build

@dataclass
class BeamformingLayout:
    program: ConvexProgram
    eta: int
    r_index: dict              # relay-served uid -> index
    beam_index: dict           # (tx, target) -> index array (2*N_tx)
    s_index: dict              # (receiver, tx, target) -> index
    w_scale: dict              # tx -> sqrt(budget)
    noise: float

    def to_beamforming(self, x) -> BeamformingSet:
        vecs = {}
        for beam, idx in self.beam_index.items():
            vecs[beam] = self.w_scale[beam[0]] * real_to_complex_vec(x[idx])
        return BeamformingSet(vecs)


def _audible(config, receiver):
    if receiver.endswith("_backhaul"):
        return ("tbs",)
    return INTERFERENCE_MAP[_group_of(receiver)]


def _receivers(config: ScenarioConfig):
    return config.user_ids() + ["usv_backhaul", "uav_backhaul"]


def _desired_beam(receiver):
    if receiver.endswith("_backhaul"):
        return ("tbs", receiver[:-len("_backhaul")])
    return (_group_of(receiver), receiver)


def _receiver_channel(channels: ChannelSet, receiver, tx):
    if receiver.endswith("_backhaul"):
        return channels.relay_links[receiver[:-len("_backhaul")]]
    return channels.user_links[receiver][tx]


def build_beamforming_program(channels: ChannelSet, expansion: ExpansionPoint,
                              config: ScenarioConfig) -> BeamformingLayout:
    prog = ConvexProgram("eta")
    noise = config.noise_variance
    cat = beam_catalog(config)
    relay_uids = config.user_ids("usv") + config.user_ids("uav")

    eta_idx = prog.add_variable("eta")[0]
    r_index = {uid: prog.add_variable(f"r:{uid}")[0] for uid in relay_uids}
    beam_index = {(tx, tg): prog.add_variable(f"w:{tx}:{tg}",
                                              2 * config.antenna_counts[tx])
                  for tx, tg in cat}
    pairs = []
    for rx in _receivers(config):
        for tx in _audible(config, rx):
            for tg, _ in expansion.W.beams_from(tx):
                pairs.append((rx, tx, tg))
    s_block = prog.add_variable("S", len(pairs))
    s_index = {p: int(s_block[k]) for k, p in enumerate(pairs)}
    n = prog.n
    w_scale = {tx: math.sqrt(config.power_budgets[tx]) for tx in GROUPS}

    # scaled channel map per (receiver, tx): ||Gtilde v||^2 = power/noise
    gmap = {}
    for rx in _receivers(config):
        for tx in _audible(config, rx):
            lc = _receiver_channel(channels, rx, tx)
            gmap[rx, tx] = complex_to_real_map(lc.value) * (w_scale[tx]
                                                            / math.sqrt(noise))

    powers_l = {}          # (rx, tx, tg) -> expansion power in noise units
    for rx in _receivers(config):
        pb = expansion.true_powers[rx]
        for tx, tg, _, p in pb.terms:
            powers_l[rx, tx, tg] = p / noise

    # S <= F tangents, one per pair, row-normalized by (T^l + 1)
    for rx, tx, tg in pairs:
        G = gmap[rx, tx]
        v_l = complex_to_real_vec(expansion.W.vectors[tx, tg]) / w_scale[tx]
        Gv = G @ v_l
        T_l = float(Gv @ Gv)
        scale = 1.0 / (T_l + 1.0)
        a = np.zeros(n)
        a[s_index[rx, tx, tg]] = scale
        a[beam_index[tx, tg]] = -2.0 * (G.T @ Gv) * scale
        prog.add_atom(AffineAtom(f"pw:{rx}:{tx}:{tg}", n, a, T_l * scale))

    # per-transmitter power budgets, sum ||w_hat||^2 <= 1
    for tx in GROUPS:
        terms = [QuadTerm(beam_index[tx, tg], np.eye(2 * config.antenna_counts[tx]))
                 for t2, tg in cat if t2 == tx]
        c = np.zeros(n)
        prog.add_atom(QuadAtom(f"budget:{tx}", n, terms, c, 1.0))

    # eta <= r for relay-served users
    for uid in relay_uids:
        a = np.zeros(n)
        a[eta_idx] = 1.0
        a[r_index[uid]] = -1.0
        prog.add_atom(AffineAtom(f"eta<=r:{uid}", n, a, 0.0))

    # rate bounds: lhs + R~up(T(w)) - log2(sum S + 1) <= 0
    def rate_atom(name, lhs_idx, rx):
        des = _desired_beam(rx)
        T_l = sum(p for (r2, tx, tg), p in powers_l.items()
                  if r2 == rx and (tx, tg) != des)
        ub = interference_upper_bound(T_l, 1.0)
        a_out = np.zeros(n)
        for i in np.atleast_1d(lhs_idx):
            a_out[i] = 1.0
        terms = []
        for tx in _audible(config, rx):
            for tg, _ in expansion.W.beams_from(tx):
                if (tx, tg) == des:
                    continue
                terms.append(QuadTerm(beam_index[tx, tg], gmap[rx, tx],
                                      alpha=ub.slope))
        a_in = np.zeros(n)
        kappa = sum(powers_l[rx, tx, tg] for (r2, tx, tg) in powers_l
                    if r2 == rx) + 1.0
        for (r2, tx, tg), si in s_index.items():
            if r2 == rx:
                a_in[si] = 1.0 / kappa
        # the log argument is scaled by 1/kappa to stay O(1); compensate here
        prog.add_atom(LogRateAtom(name, n, a_out,
                                  ub.offset - math.log2(kappa),
                                  terms, a_in, 1.0 / kappa))

    for uid in config.user_ids("tbs") + config.user_ids("sat"):
        rate_atom(f"rate:{uid}", eta_idx, uid)
    for uid in relay_uids:
        rate_atom(f"rate:{uid}", r_index[uid], uid)
    for relay in ("usv", "uav"):
        served = [r_index[uid] for uid in config.user_ids(relay)]
        rate_atom(f"causality:{relay}", np.array(served), relay + "_backhaul")

    return BeamformingLayout(prog, eta_idx, r_index, beam_index, s_index,
                             w_scale, noise)


def initial_beamforming_point(layout: BeamformingLayout,
                              expansion: ExpansionPoint,
                              config: ScenarioConfig,
                              gap: float = 0.05) -> np.ndarray:
    """Strictly feasible start: W^l itself, power slacks just under their
    tangents, rate slacks just under the bounds they must satisfy.  The gap
    keeps the start well inside the barrier so centering stays cheap."""
    prog = layout.program
    x = np.zeros(prog.n)
    for beam, idx in layout.beam_index.items():
        x[idx] = complex_to_real_vec(expansion.W.vectors[beam]) \
            / layout.w_scale[beam[0]]
    noise = layout.noise
    powers_l = {}
    for rx in _receivers(config):
        for tx, tg, _, p in expansion.true_powers[rx].terms:
            powers_l[rx, tx, tg] = p / noise
    for (rx, tx, tg), si in layout.s_index.items():
        T = powers_l[rx, tx, tg]
        x[si] = T - gap * (T + 1.0)

    def slack_rate(rx):
        des = _desired_beam(rx)
        tot = sum(x[si] for (r2, tx, tg), si in layout.s_index.items()
                  if r2 == rx) + 1.0
        intf = sum(powers_l[rx, tx, tg] for (r2, tx, tg) in powers_l
                   if r2 == rx and (tx, tg) != des)
        return math.log2(tot) - math.log2(intf + 1.0)

    margin = lambda v: gap * (1.0 + abs(v))
    r_val = {}
    for relay in ("usv", "uav"):
        share = slack_rate(relay + "_backhaul") / config.user_counts[relay]
        for uid in config.user_ids(relay):
            bound = min(slack_rate(uid), share)
            r_val[uid] = bound - margin(bound)
            x[layout.r_index[uid]] = r_val[uid]
    eta = min(min(slack_rate(uid) for uid
                  in config.user_ids("tbs") + config.user_ids("sat")),
              min(r_val.values()))
    x[layout.eta] = eta - margin(eta)
    _assert_interior(prog, x, "beamforming start")
    return x


def _assert_interior(prog: ConvexProgram, x, what: str):
    bad = []
    for a in prog.atoms:
        if not a.domain_ok(x):
            bad.append((a.name, "outside domain"))
        elif a.value(x) >= 0:
            bad.append((a.name, a.value(x)))
    if bad:
        raise ValueError(f"{what} not strictly interior: {bad[:3]}")


# -------------------------------------------------------- trajectory build

@dataclass
class TrajectoryContext:
    """Frozen per-slot kinematic data; prev2 may be None on the first slot."""
    q_v_prev: np.ndarray
    q_a_prev: np.ndarray
    q_v_prev2: np.ndarray | None
    q_a_prev2: np.ndarray | None
    dt: float
    state: WorldState
    base_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))


@dataclass
class TrajectoryLayout:
    program: ConvexProgram
    eta: int
    r_index: dict
    q_index: dict              # "usv"/"uav" -> index pair
    q_ref: dict                # previous positions
    q_scale: dict              # dt * Vmax
    slack_index: dict          # key -> index (interference copies)
    slack_ref: dict            # key -> X^l
    steering_skipped: dict     # relay -> bool (degenerate heading)
    srv_index: dict = None     # key -> index (serving copies, epigraph side)
    srv_aux: dict = None       # "u"-kind key -> index of the d^2 stage

    def to_positions(self, x):
        return {relay: self.q_ref[relay] + self.q_scale[relay] * x[idx]
                for relay, idx in self.q_index.items()}


def _heading(prev2, prev1, base_axis):
    if prev2 is None:
        d = np.asarray(base_axis, float)
    else:
        d = np.asarray(prev1, float) - np.asarray(prev2, float)
    nd = float(np.linalg.norm(d))
    return (d / nd, False) if nd > 0 else (None, True)


def build_trajectory_program(channels: ChannelSet, expansion: ExpansionPoint,
                             config: ScenarioConfig,
                             ctx: TrajectoryContext) -> TrajectoryLayout:
    prog = ConvexProgram("eta")
    noise = config.noise_variance
    relay_uids = config.user_ids("usv") + config.user_ids("uav")
    cat = slack_catalog(config)

    eta_idx = prog.add_variable("eta")[0]
    r_index = {uid: prog.add_variable(f"r:{uid}")[0] for uid in relay_uids}
    kin = {"usv": config.usv_kinematics, "uav": config.uav_kinematics}
    q_index = {relay: prog.add_variable(f"q:{relay}", 2)
               for relay in ("usv", "uav")}
    q_ref = {"usv": np.asarray(ctx.q_v_prev, float),
             "uav": np.asarray(ctx.q_a_prev, float)}
    q_scale = {relay: ctx.dt * kin[relay].max_speed for relay in ("usv", "uav")}
    u_block = prog.add_variable("u", sum(1 for k in cat if k[0] == "u"))
    l_block = prog.add_variable("l", sum(1 for k in cat if k[0] == "l"))
    iu = il = 0
    slack_index = {}
    for key in cat:
        if key[0] == "u":
            slack_index[key] = int(u_block[iu]); iu += 1
        else:
            slack_index[key] = int(l_block[il]); il += 1
    # the tangent-capped copies above sit below the true distance power,
    # which is the conservative side for leakage only; serving links get
    # separate copies bounded from below by the exact convex epigraph, so
    # closing on the served node is visible to the program
    srv_keys = [("u", "tbs", "usv"), ("l", "tbs", "uav")]
    srv_keys += [("u", "usv", uid) for uid in config.user_ids("usv")]
    srv_keys += [("l", "uav", uid) for uid in config.user_ids("uav")]
    s_block = prog.add_variable("s", len(srv_keys))
    srv_index = {k: int(s_block[i]) for i, k in enumerate(srv_keys)}
    u_srv = [k for k in srv_keys if k[0] == "u"]
    srv_aux = {}
    if u_srv:
        y_block = prog.add_variable("y", len(u_srv))
        srv_aux = {k: int(y_block[i]) for i, k in enumerate(u_srv)}
    n = prog.n
    X_ref = dict(expansion.distance_powers)
    exp_q = {"usv": expansion.q_v, "uav": expansion.q_a}

    def q_of(key):
        _, tx, rx = key
        return "usv" if (rx == "usv" or tx == "usv") else "uav"

    # distance-slack tangent caps, normalized slack u_hat = x / X^l
    bounds = distance_slack_bounds(expansion, channels, config)
    for key in cat:
        X_l, form = bounds[key]
        relay = q_of(key)
        s_q = q_scale[relay]
        a = np.zeros(n)
        a[slack_index[key]] = 1.0
        a[q_index[relay]] = -form.a * s_q / X_l
        b = -(form.b + float(form.a @ q_ref[relay])) / X_l
        prog.add_atom(AffineAtom(f"cap:{':'.join(key)}", n, a, b))
        # positivity keeps the quotients bounded even with zero numerators
        pos = np.zeros(n)
        pos[slack_index[key]] = -1.0
        prog.add_atom(AffineAtom(f"pos:{':'.join(key)}", n, pos, 0.0))

    for key in srv_keys:
        link = _slack_link(channels, key)
        relay = q_of(key)
        s_q = q_scale[relay]
        X_l = X_ref[key]
        r = q_ref[relay] - link.target
        hg = link.height_gap_sq
        # squared-distance stage: d^2(q) <= Y_l * lead, scaled to O(1)
        Y_l = math.sqrt(X_l) if key[0] == "u" else X_l
        lead = srv_aux.get(key, srv_index[key])
        c = np.zeros(n)
        c[q_index[relay]] = -2.0 * s_q * r / Y_l
        c[lead] = 1.0
        terms = [QuadTerm(q_index[relay], s_q * np.eye(2), 1.0 / Y_l)]
        prog.add_atom(QuadAtom(f"srv2:{':'.join(key)}", n, terms, c,
                               -(float(r @ r) + hg) / Y_l))
        if key[0] == "u":
            # lead^2 <= slack lifts the squared stage to the quartic power
            c2 = np.zeros(n)
            c2[srv_index[key]] = 1.0
            prog.add_atom(QuadAtom(f"srv4:{':'.join(key)}", n,
                                   [QuadTerm(np.array([lead]), np.eye(1))],
                                   c2, 0.0))

    # mobility and steering cones in step units
    steering_skipped = {}
    prev2 = {"usv": ctx.q_v_prev2, "uav": ctx.q_a_prev2}
    for relay in ("usv", "uav"):
        s_q = q_scale[relay]
        center = ctx.dt * kin[relay].drift_velocity / s_q
        prog.add_atom(SocAtom(f"speed:{relay}", n, q_index[relay],
                              np.eye(2), -center, np.zeros(n), 1.0))
        head, degenerate = _heading(prev2[relay], q_ref[relay], ctx.base_axis)
        steering_skipped[relay] = degenerate
        if not degenerate:
            cosphi = math.cos(kin[relay].max_steering_angle)
            c = np.zeros(n)
            c[q_index[relay]] = head
            prog.add_atom(SocAtom(f"steer:{relay}", n, q_index[relay],
                                  cosphi * np.eye(2), np.zeros(2), c, 0.0))

    # clearance half-planes for the surface relay
    safety_targets = [(f"obstacle{k}", ob.center, ob.radius)
                      for k, ob in enumerate(ctx.state.obstacles)]
    safety_targets += [(f"ship:{uid}", p, kin["usv"].safe_radius_ship)
                       for uid, p in ctx.state.user_positions.items()]
    s_q = q_scale["usv"]
    for label, center, radius in safety_targets:
        form = safe_distance_linearization(exp_q["usv"], center, radius)
        a = np.zeros(n)
        a[q_index["usv"]] = form.a * s_q
        b = form.b + float(form.a @ q_ref["usv"])
        norm = max(float(np.max(np.abs(a[q_index['usv']]))), abs(b), 1.0)
        prog.add_atom(AffineAtom(f"safe:{label}", n, a / norm, b / norm))

    for uid in relay_uids:
        a = np.zeros(n)
        a[eta_idx] = 1.0
        a[r_index[uid]] = -1.0
        prog.add_atom(AffineAtom(f"eta<=r:{uid}", n, a, 0.0))

    # rate bounds: lhs - Rhat_lb(u) + log2(I(u) + 1) <= 0 in normalized slacks
    def split_terms(rx):
        des = _desired_beam(rx)
        const_des = const_int = 0.0
        srv, num, den = {}, {}, {}
        for tx in _audible(config, rx):
            lc = _receiver_channel(channels, rx, tx)
            for tg, w in expansion.W.beams_from(tx):
                desired = (tx, tg) == des
                if lc.slack_kind is None:
                    p = _power(lc.value, w) / noise
                    const_des += p if desired else 0.0
                    const_int += 0.0 if desired else p
                else:
                    key = (lc.slack_kind, tx, rx if rx in config.user_ids()
                           else rx[:-len("_backhaul")])
                    c = lc.amp_const * _power(lc.mix, w) / noise
                    if desired:
                        srv[key] = srv.get(key, 0.0) + c
                    else:
                        num[key] = num.get(key, 0.0) + c
                        den[key] = den.get(key, 0.0) + c
        return const_des, const_int, srv, num, den

    def rate_atom(name, lhs_idx, rx):
        const_des, const_int, srv, num, den = split_terms(rx)
        contribs = {("int", *k): (c, X_ref[k]) for k, c in num.items()}
        contribs.update({("srv", *k): (c, X_ref[k]) for k, c in srv.items()})
        hat = rate_hat_lower_bound(const_des + const_int + 1.0, contribs)
        a_out = np.zeros(n)
        for i in np.atleast_1d(lhs_idx):
            a_out[i] = 1.0
        b_out = -hat.b0
        for rk, Bk in hat.B.items():
            key = rk[1:]
            col = srv_index[key] if rk[0] == "srv" else slack_index[key]
            a_out[col] += Bk * X_ref[key]
            b_out -= Bk * X_ref[key]
        kappa = const_int + 1.0 + sum(c / X_ref[k] for k, c in den.items())
        b_out += math.log2(kappa)
        qidx = [slack_index[k] for k in den]
        qcoef = [(c / X_ref[k]) / kappa for k, c in den.items()]
        prog.add_atom(QuotientLogAtom(name, n, a_out, b_out, qidx, qcoef,
                                      (const_int + 1.0) / kappa))

    for uid in config.user_ids("tbs") + config.user_ids("sat"):
        rate_atom(f"rate:{uid}", eta_idx, uid)
    for uid in relay_uids:
        rate_atom(f"rate:{uid}", r_index[uid], uid)
    for relay in ("usv", "uav"):
        served = np.array([r_index[uid] for uid in config.user_ids(relay)])
        rate_atom(f"causality:{relay}", served, relay + "_backhaul")

    return TrajectoryLayout(prog, eta_idx, r_index, q_index, q_ref, q_scale,
                            slack_index, X_ref, steering_skipped,
                            srv_index, srv_aux)


def initial_trajectory_point(layout: TrajectoryLayout,
                             expansion: ExpansionPoint,
                             config: ScenarioConfig,
                             gap: float = 0.02) -> np.ndarray:
    """Start at the expansion positions with slacks just inside their caps."""
    prog = layout.program
    x = np.zeros(prog.n)
    exp_q = {"usv": expansion.q_v, "uav": expansion.q_a}
    for relay, idx in layout.q_index.items():
        x[idx] = (exp_q[relay] - layout.q_ref[relay]) / layout.q_scale[relay]
    for key, si in layout.slack_index.items():
        x[si] = 1.0 - gap
    for key, si in (layout.srv_index or {}).items():
        if key in (layout.srv_aux or {}):
            x[layout.srv_aux[key]] = 1.0 + gap
            x[si] = (1.0 + gap) ** 2 + gap
        else:
            x[si] = 1.0 + gap

    def atom(name):
        return next(a for a in prog.atoms if a.name == name)

    margin = lambda v: gap * (1.0 + abs(v))

    def bound_from(name, lhs_free):
        # rate atoms are lhs + rest(x); the admissible lhs is -rest(x)
        a = atom(name)
        saved = x[lhs_free].copy()
        x[lhs_free] = 0.0
        rest = a.value(x)
        x[lhs_free] = saved
        return -rest

    r_val = {}
    for relay in ("usv", "uav"):
        share = bound_from(f"causality:{relay}",
                           np.array([layout.r_index[u]
                                     for u in config.user_ids(relay)])) \
            / config.user_counts[relay]
        for uid in config.user_ids(relay):
            b = min(bound_from(f"rate:{uid}", np.array([layout.r_index[uid]])),
                    share)
            r_val[uid] = b - margin(b)
            x[layout.r_index[uid]] = r_val[uid]
    direct = [bound_from(f"rate:{uid}", np.array([layout.eta]))
              for uid in config.user_ids("tbs") + config.user_ids("sat")]
    eta = min(min(direct), min(r_val.values()))
    x[layout.eta] = eta - margin(eta)
    _assert_interior(prog, x, "trajectory start")
    return x
