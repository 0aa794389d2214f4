"""Scenario description, YAML loading and validation.

Field names follow the scenario schema (``Tc``, ``channel_number``,
``retry_limit``, ``impairments.dtim`` ...). Durations accept integers (ns)
or strings with a unit such as ``"102.4ms"`` or ``"6h"``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import parse_duration
from .impairments import AciConfig, ApStallConfig, DtimConfig, NmConfig
from .mac import ApConfig, ChannelConfig, ConfigError, LossModel
from .traffic import AciExperimentConfig, BurstLoadConfig, StreamConfig

TIME_FIELDS = {
    "Tc", "t_beac", "beacon_offset", "scan_period", "probe_dwell", "probe_gap", "first_scan", "period",
    "max_stall", "phase_offset_per_ap", "jitter", "lead", "intra_gap", "mean_gap", "duration", "start_phase",
    "slot", "sifs", "forward_delay_base", "dual_band_extra",
}
ENGINES = ("auto", "event")


@dataclass(frozen=True)
class Impairments:
    dtim: DtimConfig = field(default_factory=DtimConfig)
    nm: NmConfig = field(default_factory=NmConfig)
    ap_stall: ApStallConfig = field(default_factory=ApStallConfig)
    aci: AciConfig = field(default_factory=AciConfig)


@dataclass(frozen=True)
class Scenario:
    name: str
    channels: tuple
    seed: int = 0
    duration: Optional[int] = None
    ap: ApConfig = field(default_factory=ApConfig)
    impairments: Impairments = field(default_factory=Impairments)
    streams: tuple = ()
    loads: tuple = ()
    aci_experiment: Optional[AciExperimentConfig] = None
    engine: str = "auto"

    def channel(self, cid: str) -> ChannelConfig:
        for c in self.channels:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **kwargs) -> Scenario:
        return dataclasses.replace(self, **kwargs)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _fields(cls, data: Any, path: str) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
        if key in TIME_FIELDS and value is not None:
            try:
                value = parse_duration(value)
            except ValueError as e:
                raise ConfigError(f"{path}.{key}", str(e)) from None
        out[key] = value
    return out


def _make(cls, kwargs: dict, path: str):
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{path}.{e.path.rsplit('.', 1)[-1]}", e.message) from None
    except (TypeError, ValueError) as e:
        raise ConfigError(path, str(e)) from None


def _channel(data: Any, path: str) -> ChannelConfig:
    kw = _fields(ChannelConfig, data, path)
    if "channel_number" not in kw:
        raise ConfigError(f"{path}.channel_number", "missing")
    if "loss_model" in kw:
        kw["loss_model"] = _make(LossModel, _fields(LossModel, kw["loss_model"], f"{path}.loss_model"),
                                 f"{path}.loss_model")
    return _make(ChannelConfig, kw, path)


def _impairments(data: Any) -> Impairments:
    kw = _fields(Impairments, data, "impairments")
    parts = {"dtim": DtimConfig, "nm": NmConfig, "ap_stall": ApStallConfig, "aci": AciConfig}
    out = {}
    for key, cls in parts.items():
        path = f"impairments.{key}"
        out[key] = _make(cls, _fields(cls, kw.get(key), path), path)
    return Impairments(**out)


class _ChannelRefs:
    def __init__(self, channels):
        self.by_id = {c.id: c.id for c in channels}
        numbers: dict = {}
        for c in channels:
            numbers.setdefault(c.channel_number, []).append(c.id)
        self.by_number = {n: ids[0] for n, ids in numbers.items() if len(ids) == 1}

    def resolve(self, ref, path: str, owner: str) -> str:
        if isinstance(ref, str) and ref in self.by_id:
            return ref
        key = ref
        if isinstance(ref, str) and ref.isdigit():
            key = int(ref)
        if isinstance(key, int) and not isinstance(key, bool) and key in self.by_number:
            return self.by_number[key]
        raise ConfigError(path, f"{owner} references unknown channel {ref!r}")


def scenario_from_dict(data: Any, seed: Optional[int] = None, duration=None) -> Scenario:
    """Validate a parsed config mapping; ``seed``/``duration`` override it."""
    kw = _fields(Scenario, data, "scenario")
    if "name" not in kw:
        kw["name"] = "scenario"
    raw_channels = kw.get("channels")
    if not raw_channels or not isinstance(raw_channels, list):
        raise ConfigError("channels", "at least one channel is required")
    channels = tuple(_channel(c, f"channels[{i}]") for i, c in enumerate(raw_channels))
    ids = [c.id for c in channels]
    for i, cid in enumerate(ids):
        if ids.index(cid) != i:
            raise ConfigError(f"channels[{i}].id", f"duplicate channel id {cid!r}")
    kw["channels"] = channels
    refs = _ChannelRefs(channels)
    kw["ap"] = _make(ApConfig, _fields(ApConfig, kw.get("ap"), "ap"), "ap")
    kw["impairments"] = _impairments(kw.get("impairments"))

    streams = []
    carried: dict = {}
    for i, raw in enumerate(kw.get("streams") or []):
        path = f"streams[{i}]"
        skw = _fields(StreamConfig, raw, path)
        skw.setdefault("name", f"s{i}")
        for req in ("kind", "channels", "Tc"):
            if req not in skw:
                raise ConfigError(f"{path}.{req}", "missing")
        chans = skw["channels"]
        if not isinstance(chans, list):
            chans = [chans]
        skw["channels"] = tuple(refs.resolve(c, f"{path}.channels", f"stream {skw['name']!r}") for c in chans)
        st = _make(StreamConfig, skw, path)
        if st.name in [s.name for s in streams]:
            raise ConfigError(f"{path}.name", f"duplicate stream name {st.name!r}")
        for cid in st.channels:
            if cid in carried:
                raise ConfigError(f"{path}.channels", f"channel {cid!r} already carries stream {carried[cid]!r}")
            carried[cid] = st.name
        streams.append(st)
    kw["streams"] = tuple(streams)

    loads = []
    for i, raw in enumerate(kw.get("loads") or []):
        path = f"loads[{i}]"
        lkw = _fields(BurstLoadConfig, raw, path)
        if "channel" not in lkw:
            raise ConfigError(f"{path}.channel", "missing")
        lkw["channel"] = refs.resolve(lkw["channel"], f"{path}.channel", "load")
        loads.append(_make(BurstLoadConfig, lkw, path))
    kw["loads"] = tuple(loads)

    if kw.get("aci_experiment") is not None:
        path = "aci_experiment"
        akw = _fields(AciExperimentConfig, kw["aci_experiment"], path)
        for key in ("m_channel", "i_channel"):
            if key not in akw:
                raise ConfigError(f"{path}.{key}", "missing")
            akw[key] = refs.resolve(akw[key], f"{path}.{key}", "aci_experiment")
            if akw[key] in carried:
                raise ConfigError(f"{path}.{key}", f"channel {akw[key]!r} already carries stream {carried[akw[key]]!r}")
        if akw["m_channel"] == akw["i_channel"]:
            raise ConfigError(f"{path}.i_channel", "interfering channel must differ from the measured one")
        if "aci" in [s.name for s in streams]:
            raise ConfigError("streams", "stream name 'aci' is reserved for the ACI experiment")
        kw["aci_experiment"] = _make(AciExperimentConfig, akw, path)

    if seed is not None:
        kw["seed"] = seed
    if duration is not None:
        try:
            kw["duration"] = parse_duration(duration)
        except ValueError as e:
            raise ConfigError("duration", str(e)) from None
    if not isinstance(kw.get("seed", 0), int) or isinstance(kw.get("seed", 0), bool):
        raise ConfigError("seed", "seed must be an integer")
    if kw.get("duration") is not None and kw["duration"] <= 0:
        raise ConfigError("duration", "duration must be positive")
    if kw.get("engine", "auto") not in ENGINES:
        raise ConfigError("engine", f"expected one of {ENGINES}")
    if not kw["streams"] and not kw["loads"] and kw.get("aci_experiment") is None:
        raise ConfigError("streams", "scenario defines no traffic")
    if kw["loads"] and kw.get("duration") is None:
        raise ConfigError("duration", "interfering loads need a scenario duration")
    sc = Scenario(**kw)
    for st in sc.streams:
        if st.count is None and st.duration is None and sc.duration is None:
            raise ConfigError(f"streams.{st.name}", "stream needs a count, a duration or a scenario duration")
    return sc


def load_config(path, seed: Optional[int] = None, duration=None) -> Scenario:
    """Load a YAML scenario or a run manifest (JSON) written by ``run``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"not valid YAML: {e}") from None
    if isinstance(data, dict) and "resolved_config" in data:
        data = data["resolved_config"]
    return scenario_from_dict(data, seed=seed, duration=duration)
