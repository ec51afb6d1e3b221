"""Pluggable AQM disciplines, registered under string keys."""
from ..model import ConfigError, ScenarioConfig, ms
from .base import (Aqm, DropFlagTable, EgressVerdict, IngressVerdict, QueueMetadata,
                   taildrop_decide)
from .codel import Codel, CodelState, codel_decide, codel_inv_sqrt_approx, control_law
from .ired import (Ired, IredGhost, IredMode, IredState, ewma_update, ired_egress_decide,
                   ired_ghost_decide, ired_ingress_act)
from .pi2 import DualPi2, Pi2, Pi2State, pi2_decide, pi2_timer_update, pi2_update_rule

AQM_KEYS = ("ired-delay", "ired-depth", "ired-ghost", "codel", "pi2", "dualpi2", "taildrop")

# registered key -> runs with a separate L4S queue
_TOPOLOGY = {
    "ired-delay": True,
    "ired-depth": True,
    "ired-ghost": True,
    "codel": False,
    "pi2": False,
    "dualpi2": True,
    "taildrop": False,
}

COST_KIND = {
    "ired-delay": "ired",
    "ired-depth": "ired",
    "ired-ghost": "ired-g",
    "codel": "codel",
    "pi2": "pi2",
    "dualpi2": "pi2",
    "taildrop": None,
}


def check_aqm_key(key: str) -> str:
    if key not in _TOPOLOGY:
        raise ConfigError(f"unknown AQM {key!r}; registered keys: {', '.join(AQM_KEYS)}")
    return key


def uses_dual_queue(key: str) -> bool:
    return _TOPOLOGY[check_aqm_key(key)]


def depth_min_threshold(cfg: ScenarioConfig) -> int:
    """Bytes the port drains in one target delay at line rate."""
    s = cfg.aqm_settings
    if s.ired_min_depth_bytes is not None:
        return s.ired_min_depth_bytes
    return int(cfg.bandwidth_bps * s.target_delay_ms / 8000)


def make_aqm(key: str, cfg: ScenarioConfig, rng=None) -> Aqm:
    """Build one per-port AQM instance for ``cfg``."""
    check_aqm_key(key)
    s = cfg.aqm_settings
    target = ms(s.target_delay_ms)
    classic_only = s.ired_sampling == "classic"
    if key == "ired-delay":
        return Ired(IredState.with_min(target, IredMode.DELAY, s.ired_max_factor, classic_only))
    if key == "ired-depth":
        aqm = Ired(IredState.with_min(depth_min_threshold(cfg), IredMode.DEPTH,
                                      s.ired_max_factor, classic_only))
        aqm.key = key
        return aqm
    if key == "ired-ghost":
        if not cfg.ghost:
            raise ConfigError("ired-ghost requires ghost mode to be enabled in the scenario")
        return IredGhost(IredState.with_min(depth_min_threshold(cfg), IredMode.DEPTH,
                                            s.ired_max_factor), rng)
    if key == "codel":
        return Codel(target, ms(s.codel_interval_ms), s.codel_sqrt, cfg.mtu_bytes)
    if key in ("pi2", "dualpi2"):
        state = Pi2State(target, ms(s.pi2_interval_ms), s.pi2_alpha, s.pi2_beta, s.coupling_k)
        return Pi2(state) if key == "pi2" else DualPi2(state)
    return Aqm()
