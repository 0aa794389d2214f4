"""Per-channel IEEE 802.11 DCF timing and loss model.

The functions here treat a channel in isolation: a single contender whose
medium is busy only with its own exchanges. The event-driven network model
in :mod:`prpsim.network` reuses them for channels that have no neighbours
and reimplements the same rules with carrier sensing for the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .core import US, RngStream

BAND_24 = "2.4GHz"
BAND_5 = "5GHz"

OFDM_RATES = (6, 9, 12, 18, 24, 36, 48, 54)
PREAMBLE_NS = 20 * US
SYMBOL_NS = 4 * US
CW_MAX = 1023

DATA_OVERHEAD = 28
ACK_OVERHEAD = 14


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def band_of(channel_number: int) -> str:
    if 1 <= channel_number <= 13:
        return BAND_24
    if 36 <= channel_number <= 165:
        return BAND_5
    raise ConfigError("channel_number", f"{channel_number} is neither a 2.4 GHz (1-13) nor a 5 GHz (36-165) channel")


def center_mhz(channel_number: int) -> int:
    if band_of(channel_number) == BAND_24:
        return 2407 + 5 * channel_number
    return 5000 + 5 * channel_number


def frame_airtime(payload_bytes: int, mac_overhead_bytes: int, bitrate_mbps: float) -> int:
    """OFDM (802.11a/g) frame duration in ns.

    20 us of preamble and SIGNAL, then 4 us symbols carrying the 16-bit
    SERVICE field, the MPDU and 6 tail bits.
    """
    if payload_bytes < 0 or mac_overhead_bytes < 0:
        raise ValueError("frame sizes must be non-negative")
    if bitrate_mbps not in OFDM_RATES:
        raise ValueError(f"unsupported OFDM bit rate {bitrate_mbps} Mbit/s (expected one of {OFDM_RATES})")
    bits_per_symbol = int(4 * bitrate_mbps)
    bits = 16 + 8 * (payload_bytes + mac_overhead_bytes) + 6
    return PREAMBLE_NS + SYMBOL_NS * math.ceil(bits / bits_per_symbol)


@dataclass(frozen=True)
class LossModel:
    """Frame loss process for one channel.

    Data frames follow ``kind``; ACK frames are lost independently with
    ``p_ack_loss``.
    """

    kind: str = "bernoulli"
    p_loss: float = 0.0
    p_ack_loss: float = 0.0
    p_gb: float = 0.0
    p_bg: float = 1.0
    p_loss_good: float = 0.0
    p_loss_bad: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bernoulli", "gilbert-elliott"):
            raise ConfigError("loss_model.kind", f"unknown loss model {self.kind!r}")
        for name in ("p_loss", "p_ack_loss", "p_gb", "p_bg", "p_loss_good", "p_loss_bad"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"loss_model.{name}", f"probability {value} outside [0, 1]")


class LossProcess:
    """Stateful per-frame loss draws for one frame class (data or ACK)."""

    __slots__ = ("model", "rng", "ack", "bad")

    def __init__(self, model: LossModel, rng: RngStream, ack: bool = False):
        self.model = model
        self.rng = rng
        self.ack = ack
        self.bad = False

    def lost(self) -> bool:
        m = self.model
        if self.ack:
            return m.p_ack_loss > 0.0 and self.rng.random() < m.p_ack_loss
        if m.kind == "bernoulli":
            return m.p_loss > 0.0 and self.rng.random() < m.p_loss
        if self.bad:
            if self.rng.random() < m.p_bg:
                self.bad = False
        elif self.rng.random() < m.p_gb:
            self.bad = True
        p = m.p_loss_bad if self.bad else m.p_loss_good
        return self.rng.random() < p


@dataclass(frozen=True)
class ChannelConfig:
    channel_number: int
    band: Optional[str] = None
    bitrate: float = 54
    ack_bitrate: float = 24
    slot: int = 9 * US
    sifs: Optional[int] = None
    cw_min: int = 15
    retry_limit: int = 7
    loss_model: LossModel = field(default_factory=LossModel)
    id: Optional[str] = None
    mac_overhead: int = DATA_OVERHEAD

    def __post_init__(self):
        band = band_of(self.channel_number)
        if self.band is not None and self.band != band:
            raise ConfigError("band", f"channel {self.channel_number} belongs to {band}, not {self.band}")
        object.__setattr__(self, "band", band)
        if self.sifs is None:
            object.__setattr__(self, "sifs", 16 * US if band == BAND_5 else 10 * US)
        if self.id is None:
            object.__setattr__(self, "id", f"c{self.channel_number}")
        for name in ("bitrate", "ack_bitrate"):
            if getattr(self, name) not in OFDM_RATES:
                raise ConfigError(name, f"unsupported OFDM bit rate {getattr(self, name)}")
        if self.slot <= 0 or self.sifs <= 0:
            raise ConfigError("slot", "slot and sifs must be positive")
        if self.cw_min < 0 or self.retry_limit < 0:
            raise ConfigError("cw_min", "cw_min and retry_limit must be non-negative")
        # derived timings, looked up once per frame on the hot path
        object.__setattr__(self, "_difs", self.sifs + 2 * self.slot)
        object.__setattr__(self, "_ack_air", frame_airtime(0, ACK_OVERHEAD, self.ack_bitrate))
        object.__setattr__(self, "_air", {})
        object.__setattr__(self, "_cw", tuple(min((2 ** r) * (self.cw_min + 1) - 1, CW_MAX)
                                              for r in range(self.retry_limit + 1)))

    @property
    def difs(self) -> int:
        return self._difs

    @property
    def ack_airtime(self) -> int:
        return self._ack_air

    def airtime(self, payload: int) -> int:
        air = self._air.get(payload)
        if air is None:
            air = self._air[payload] = frame_airtime(payload, self.mac_overhead, self.bitrate)
        return air

    def contention_window(self, retry: int) -> int:
        if retry < len(self._cw):
            return self._cw[retry]
        return min((2 ** retry) * (self.cw_min + 1) - 1, CW_MAX)

    def with_loss(self, **kwargs) -> ChannelConfig:
        return replace(self, loss_model=replace(self.loss_model, **kwargs))


@dataclass(frozen=True)
class ApConfig:
    mode: str = "two-aps"
    forward_delay_base: int = 150 * US
    dual_band_extra: int = 40 * US

    def __post_init__(self):
        if self.mode not in ("two-aps", "one-dual-band-ap"):
            raise ConfigError("ap.mode", f"unknown AP mode {self.mode!r}")
        if self.forward_delay_base < 0 or self.dual_band_extra < 0:
            raise ConfigError("ap.forward_delay_base", "forwarding delays must be non-negative")


def ap_forward(t_rx_at_ap: int, ap_config: ApConfig, band: str, stall_delay: int = 0) -> int:
    """Time the frame received at ``t_rx_at_ap`` leaves the AP's wired port."""
    extra = ap_config.dual_band_extra if ap_config.mode == "one-dual-band-ap" and band == BAND_5 else 0
    return t_rx_at_ap + ap_config.forward_delay_base + extra + stall_delay


@dataclass(slots=True)
class Frame:
    seq: int
    channel: str
    t_gen: int
    payload: int = 50
    set_tag: str = "-"
    multicast: bool = False


@dataclass(slots=True)
class TxRecord:
    """Outcome of one packet copy on one channel; ``None`` marks ABSENT."""

    seq: int
    channel: str
    t_gen: int
    t_air_start: Optional[int] = None
    t_air_end: Optional[int] = None
    t_ack: Optional[int] = None
    t_eth: Optional[int] = None
    retries: int = 0
    data_lost: bool = False
    ack_lost: bool = False
    set_tag: str = "-"


class BlackoutLookup:
    """Interface for interval sets the MAC must avoid (see ``impairments``)."""

    def first_overlap(self, a: int, b: int) -> Optional[tuple[int, int]]:  # pragma: no cover - protocol
        raise NotImplementedError


class ChannelState:
    """Mutable state of a single-contender channel."""

    def __init__(
        self,
        config: ChannelConfig,
        backoff_rng: RngStream,
        data_loss: LossProcess,
        ack_loss: Optional[LossProcess] = None,
        forward: Optional[Callable[[int], int]] = None,
        blackouts: Optional[BlackoutLookup] = None,
        rx_blackouts: Optional[BlackoutLookup] = None,
    ):
        self.config = config
        self.backoff_rng = backoff_rng
        self.data_loss = data_loss
        self.ack_loss = ack_loss
        self.forward = forward
        self.blackouts = blackouts
        self.rx_blackouts = rx_blackouts
        self.busy_until = 0

    @classmethod
    def from_streams(cls, config: ChannelConfig, rng: Callable[[str], RngStream], **kwargs) -> ChannelState:
        """Build with the conventional stream labels ``<id>.backoff`` etc."""
        cid = config.id
        return cls(
            config,
            rng(f"{cid}.backoff"),
            LossProcess(config.loss_model, rng(f"{cid}.loss.data")),
            LossProcess(config.loss_model, rng(f"{cid}.loss.ack"), ack=True),
            **kwargs,
        )


def plan_access(config: ChannelConfig, backoff_rng: RngStream, ref: int, cw: int,
                blackouts: Optional[BlackoutLookup] = None) -> tuple[int, int]:
    """Start of transmission for a countdown beginning at ``ref``.

    A blackout overlapping ``[ref, start)`` freezes the adapter; the
    countdown restarts at the blackout's end with a fresh draw.
    """
    while True:
        k = backoff_rng.randint(cw + 1)
        start = ref + config.difs + k * config.slot
        if blackouts is None:
            return start, k
        hit = blackouts.first_overlap(ref, start)
        if hit is None:
            return start, k
        ref = max(ref, hit[1])


def dcf_attempt(state: ChannelState, t_request: int, cw: Optional[int] = None) -> tuple[int, int]:
    """Channel access: DIFS plus ``k`` slots after the medium is sensed idle.

    Returns ``(t_air_start, k)``.
    """
    cfg = state.config
    ref = max(t_request, state.busy_until)
    return plan_access(cfg, state.backoff_rng, ref, cfg.cw_min if cw is None else cw, state.blackouts)


def unicast_exchange(frame: Frame, state: ChannelState, t_request: Optional[int] = None) -> TxRecord:
    """Acknowledged transmission with up to ``retry_limit`` retransmissions."""
    cfg = state.config
    t = frame.t_gen if t_request is None else t_request
    airtime = cfg.airtime(frame.payload)
    ack_gap = cfg.sifs + cfg.ack_airtime
    rec = TxRecord(frame.seq, frame.channel, frame.t_gen, set_tag=frame.set_tag)
    delivered = False
    data_loss, ack_loss = state.data_loss, state.ack_loss
    for attempt in range(cfg.retry_limit + 1):
        start, _ = dcf_attempt(state, t, cfg.contention_window(attempt))
        end = start + airtime
        ack_end = end + ack_gap
        state.busy_until = ack_end
        data_ok = not data_loss.lost()
        if data_ok and not delivered:
            delivered = True
            rec.t_eth = state.forward(end) if state.forward else end
        if data_ok and not (ack_loss is not None and ack_loss.lost()):
            rec.t_ack = ack_end
            break
        t = ack_end
    rec.t_air_start, rec.t_air_end, rec.retries = start, end, attempt
    rec.data_lost = not delivered
    rec.ack_lost = delivered and rec.t_ack is None
    return rec


def multicast_delivery(
    frame: Frame, state: ChannelState, t_request: Optional[int] = None, pinned: bool = False
) -> TxRecord:
    """Unconfirmed single-shot transmission.

    ``pinned`` frames skip DIFS and backoff (DTIM release bursts go out
    back-to-back after the beacon).
    """
    cfg = state.config
    t = frame.t_gen if t_request is None else t_request
    if pinned:
        start = max(t, state.busy_until)
    else:
        start, _ = dcf_attempt(state, t)
    end = start + cfg.airtime(frame.payload)
    state.busy_until = end
    rec = TxRecord(frame.seq, frame.channel, frame.t_gen, t_air_start=start, t_air_end=end, set_tag=frame.set_tag)
    lost = state.data_loss.lost()
    if state.rx_blackouts is not None and state.rx_blackouts.first_overlap(start, end) is not None:
        lost = True
    rec.data_lost = lost
    if not lost:
        rec.t_eth = end
    return rec


def link_latency(rec: TxRecord, config: ChannelConfig) -> Optional[int]:
    """d' recovered from the ACK timestamp by removing SIFS and the ACK duration."""
    if rec.t_ack is None:
        return None
    return rec.t_ack - config.sifs - config.ack_airtime - rec.t_gen
