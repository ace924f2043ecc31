"""Per-slot channel synthesis for all links of the four-segment network.

Conventions: vector channels are tx-side, h in C^{N_tx}, received scalar is
h^H w; matrix channels are stored (N_tx, N_rx) so the relay receives H^H w.
Array axes all point along +x; the steering angle of a link at a node is
measured from that axis to the 3-D line of sight toward the other endpoint.
Every random draw comes from an RNG stream keyed by (seed, slot, link id), so
evaluation order never affects results.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j1, jv

from .scenario import GROUPS, ScenarioConfig, WorldState

# transmitters audible at each user group; relays only hear the TBS
INTERFERENCE_MAP = {
    "tbs": ("tbs", "usv", "uav", "sat"),
    "usv": ("usv", "uav", "sat"),
    "uav": ("uav", "usv", "sat"),
    "sat": ("sat", "uav", "usv"),
}


def _link_stream(seed, slot_key, link_id):
    return np.random.default_rng([seed, slot_key, zlib.crc32(link_id.encode())])


@dataclass
class RicianDraw:
    seed: int
    slot_key: int            # 0 freezes small-scale fading across slots

    def rng(self, link_id: str) -> np.random.Generator:
        return _link_stream(self.seed, self.slot_key, link_id)

    def nlos(self, link_id: str, shape) -> np.ndarray:
        g = self.rng(link_id)
        return (g.standard_normal(shape) + 1j * g.standard_normal(shape)) \
            / math.sqrt(2.0)

    def normal_db(self, link_id: str, mean_db: float, std_db: float) -> float:
        return mean_db + std_db * float(self.rng(link_id + ":rain").standard_normal())


@dataclass
class LinkChannel:
    tx: str
    rx: str
    value: np.ndarray        # (N_tx,) or (N_tx, N_rx)
    amplitude: float
    mix: np.ndarray          # value = amplitude * mix
    los: np.ndarray
    nlos: np.ndarray
    mode: str
    # trajectory-surrogate annotations: power = amp_const*|mix^H w|^2 / x with
    # x = (|q - target|^2 + height_gap_sq)^exp, q the mobile endpoint
    slack_kind: str | None = None        # "u" (exp 2) or "l" (exp 1)
    target: np.ndarray | None = None
    height_gap_sq: float = 0.0
    amp_const: float = 0.0

    @property
    def expected_norm_sq(self) -> float:
        return self.amplitude ** 2 * self.value.size


@dataclass
class ChannelSet:
    mode: str
    user_links: dict         # uid -> {tx group -> LinkChannel}
    relay_links: dict        # "usv"/"uav" -> LinkChannel from the TBS

    def all_links(self):
        for uid in self.user_links:
            for lc in self.user_links[uid].values():
                yield lc
        for lc in self.relay_links.values():
            yield lc


def steering_vector(count: int, spacing: float, wavelength: float,
                    angle: float) -> np.ndarray:
    if count < 1:
        raise ValueError("antenna count must be >= 1")
    m = np.arange(count)
    return np.exp(-2j * math.pi * spacing / wavelength * m * math.cos(angle))


def _steer_cos(count, spacing, wavelength, cos_angle):
    m = np.arange(count)
    return np.exp(-2j * math.pi * spacing / wavelength * m * cos_angle)


def _mix(los, nlos, K):
    return math.sqrt(K / (K + 1.0)) * los + math.sqrt(1.0 / (K + 1.0)) * nlos


def _los_product(tx_steer, rx_steer):
    if rx_steer is None:
        return tx_steer
    return np.outer(tx_steer, rx_steer.conj())


def _dist3(tx_pos, rx_pos, tx_height, rx_height):
    dx = np.asarray(rx_pos, float) - np.asarray(tx_pos, float)
    return math.sqrt(float(dx @ dx) + (tx_height - rx_height) ** 2)


def two_ray_channel(tx_height, rx_height, tx_pos, rx_pos, wavelength,
                    tx_steer, K, draw: RicianDraw, link_id: str,
                    mode: str = "exact", rx_steer=None) -> LinkChannel:
    """Sea-surface reflection channel; exact sine amplitude or its long-range
    two-ray approximation h_tx*h_rx/d^2."""
    d = _dist3(tx_pos, rx_pos, tx_height, rx_height)
    if d <= 0:
        raise ValueError(f"{link_id}: coincident endpoints")
    if mode == "exact":
        arg = 2.0 * math.pi * tx_height * rx_height / (wavelength * d)
        amp = wavelength / (2.0 * math.pi * d) * math.sin(arg)
    elif mode == "approximate":
        amp = tx_height * rx_height / d ** 2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    los = _los_product(tx_steer, rx_steer)
    nlos = draw.nlos(link_id, los.shape)
    mix = _mix(los, nlos, K)
    return LinkChannel(tx="", rx="", value=amp * mix, amplitude=amp, mix=mix,
                       los=los, nlos=nlos, mode=mode)


def uav_channel(tx_height, rx_height, tx_pos, rx_pos, rho, tx_steer, K,
                draw: RicianDraw, link_id: str, rx_steer=None) -> LinkChannel:
    """Air link: reference gain over 3-D distance, Rician mixed."""
    p = _dist3(tx_pos, rx_pos, tx_height, rx_height)
    if p <= 0:
        raise ValueError(f"{link_id}: coincident endpoints")
    amp = rho / p
    los = _los_product(tx_steer, rx_steer)
    nlos = draw.nlos(link_id, los.shape)
    mix = _mix(los, nlos, K)
    return LinkChannel(tx="", rx="", value=amp * mix, amplitude=amp, mix=mix,
                       los=los, nlos=nlos, mode="air")


def satellite_beam_gain(off_boresight_angle, aperture, wavelength,
                        max_gain) -> float:
    """Circular-aperture beam pattern through first/third Bessel functions."""
    phi = math.pi * aperture * math.sin(off_boresight_angle) / wavelength
    if phi == 0.0:
        return max_gain ** 2
    bracket = max_gain * (j1(phi) / (2.0 * phi) + 36.0 * jv(3, phi) / phi ** 3)
    return float(bracket ** 2)


def satellite_channel(user_pos, config: ScenarioConfig,
                      draw: RicianDraw, link_id: str) -> LinkChannel:
    """Downlink from the fixed satellite: free-space loss at h_s, beam-pattern
    gain at the user's off-nadir angle, lognormal rain attenuation."""
    h_s = config.heights["sat"]
    lam = config.carrier_wavelength
    offset = float(np.linalg.norm(np.asarray(user_pos, float)
                                  - config.sat_ground_point))
    theta = math.atan2(offset, h_s)
    omega = satellite_beam_gain(theta, config.sat_beam["aperture_diameter"],
                                lam, config.sat_beam["max_gain"])
    beta_db = draw.normal_db(link_id, config.rain_fading["mean_db"],
                             config.rain_fading["std_db"])
    beta = 10.0 ** (beta_db / 10.0)
    amp = lam / (4.0 * math.pi * h_s) \
        * math.sqrt(config.rx_antenna_gain * omega / beta)
    los = _steer_cos(config.antenna_counts["sat"], config.antenna_spacing,
                     lam, math.cos(theta))
    nlos = draw.nlos(link_id, los.shape)
    mix = _mix(los, nlos, config.rician_factor)
    return LinkChannel(tx="sat", rx="", value=amp * mix, amplitude=amp,
                       mix=mix, los=los, nlos=nlos, mode="sat")


def perturb_csi(channel: np.ndarray, gamma: float, rng: np.random.Generator,
                expected_norm_sq: float | None = None) -> np.ndarray:
    """Add a bounded estimation error: uniform in the ball of radius
    gamma*sqrt(E|h|^2)."""
    if gamma == 0.0:
        return channel
    if expected_norm_sq is None:
        expected_norm_sq = float(np.vdot(channel, channel).real)
    delta = gamma * math.sqrt(expected_norm_sq)
    n = channel.size
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    z /= np.linalg.norm(z)
    radius = delta * float(rng.random()) ** (1.0 / (2 * n))
    return channel + (radius * z).reshape(channel.shape)


def _link_cosines(tx_pos3, rx_pos3):
    d = rx_pos3 - tx_pos3
    n = float(np.linalg.norm(d))
    return d[0] / n, -d[0] / n


def assemble_channels(state: WorldState, config: ScenarioConfig,
                      draw: RicianDraw, mode: str = "approximate") -> ChannelSet:
    lam = config.carrier_wavelength
    b = config.antenna_spacing
    K = config.rician_factor
    h = config.heights
    N = config.antenna_counts
    rho = config.uav_ref_gain
    pos3 = {
        "tbs": np.array([*state.tbs_position, h["tbs"]]),
        "usv": np.array([*state.usv_position, h["usv"]]),
        "uav": np.array([*state.uav_position, h["uav"]]),
    }

    def steer(group, cos_angle):
        return _steer_cos(N[group], b, lam, cos_angle)

    def make(tx, rx_name, rx_pos2, rx_height, rx_group=None):
        link_id = f"{tx}->{rx_name}"
        if tx == "sat":
            lc = satellite_channel(rx_pos2, config, draw, link_id)
        else:
            txp = pos3[tx]
            rxp = np.array([*rx_pos2, rx_height])
            cos_tx, cos_rx = _link_cosines(txp, rxp)
            a_tx = steer(tx, cos_tx)
            a_rx = steer(rx_group, cos_rx) if rx_group else None
            if tx == "uav":
                lc = uav_channel(txp[2], rx_height, txp[:2], rx_pos2, rho,
                                 a_tx, K, draw, link_id, rx_steer=a_rx)
                lc.slack_kind, lc.amp_const = "l", rho ** 2
            else:
                lc = two_ray_channel(txp[2], rx_height, txp[:2], rx_pos2, lam,
                                     a_tx, K, draw, link_id, mode=mode,
                                     rx_steer=a_rx)
                if tx == "usv":
                    lc.slack_kind = "u"
                    lc.amp_const = (txp[2] * rx_height) ** 2
            if tx == "tbs" and rx_name in ("usv", "uav"):
                # backhaul: the mobile endpoint is the receiving relay
                lc.slack_kind = "u" if rx_name == "usv" else "l"
                lc.amp_const = (txp[2] * rx_height) ** 2 if rx_name == "usv" \
                    else rho ** 2
                lc.target = state.tbs_position.copy()
                lc.height_gap_sq = (txp[2] - rx_height) ** 2
            elif lc.slack_kind is not None:
                lc.target = np.asarray(rx_pos2, float).copy()
                lc.height_gap_sq = (txp[2] - rx_height) ** 2
        lc.tx, lc.rx = tx, rx_name
        return lc

    user_links = {}
    for g in GROUPS:
        for k in range(config.user_counts[g]):
            uid = f"{g}{k}"
            p = state.user_positions[uid]
            user_links[uid] = {tx: make(tx, uid, p, h["user"], None)
                               for tx in INTERFERENCE_MAP[g]}
    relay_links = {
        "usv": make("tbs", "usv", state.usv_position, h["usv"], "usv"),
        "uav": make("tbs", "uav", state.uav_position, h["uav"], "uav"),
    }
    return ChannelSet(mode=mode, user_links=user_links, relay_links=relay_links)


def perturb_channels(cset: ChannelSet, gamma: float,
                     draw: RicianDraw) -> ChannelSet:
    """Estimated-CSI copy of a channel set: every link value moved inside its
    bounded error ball; decomposition fields kept from the true set."""
    if gamma == 0.0:
        return cset
    import copy
    out = copy.deepcopy(cset)
    for lc in out.all_links():
        rng = draw.rng(f"{lc.tx}->{lc.rx}:csi")
        lc.value = perturb_csi(lc.value, gamma, rng, lc.expected_norm_sq)
    return out


def dump_channels_csv(cset: ChannelSet, fh) -> None:
    """Flat dump: one row per complex entry, row-major over (tx_ant, rx_ant)."""
    fh.write("rx,tx,mode,n_tx,n_rx,index,re,im\n")
    for lc in cset.all_links():
        v = np.atleast_2d(lc.value.T).T    # (N_tx,) -> (N_tx, 1)
        n_tx, n_rx = v.shape
        flat = v.ravel()
        for i, z in enumerate(flat):
            fh.write(f"{lc.rx},{lc.tx},{lc.mode},{n_tx},{n_rx},{i},"
                     f"{z.real!r},{z.imag!r}\n")
