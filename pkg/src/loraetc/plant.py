"""Three-tank water network under sample-and-hold valve control.

Levels evolve as ``dxi/dt = A xi + B u - outflow + w`` with ``A = 0`` in both
pump modes, so a zero-order hold over a step is exact: the level moves by
``(B u - outflow + w) * dt``. ``u`` is the vector of valve openings in
degrees after saturation and 10-degree quantisation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .airtime import ConfigurationError
from .link import SimulationError

VALVE_MAX_DEG = 180.0
VALVE_STEP_DEG = 10.0


class Mode(str, enum.Enum):
    WEAK = "weak"
    POWERFUL = "powerful"


B_WEAK = 1e-5 * np.array(
    [
        [0.1436, -0.0170, -0.0164],
        [-0.0098, 0.1060, -0.0100],
        [-0.0139, -0.0139, 0.1492],
    ]
)
B_POWERFUL = 1e-5 * np.array(
    [
        [0.7666, -0.0493, -0.0457],
        [-0.0274, 0.5848, -0.0279],
        [-0.0393, -0.0432, 0.1492],
    ]
)
K_WEAK = np.array(
    [
        [99950.0, 3029.0, 872.0],
        [-3014.0, 99940.0, -1679.0],
        [-922.0, 1652.0, 99982.0],
    ]
)
K_POWERFUL = np.array(
    [
        [9998.5, 167.1, 41.0],
        [-166.6, 9997.9, -116.0],
        [-43.0, 115.3, 9999.2],
    ]
)

# Network demand drawn from each tank (m/s). The night-time assistant pump
# cannot cover tank 1's demand even with its valve fully open, which is what
# drives the periodic hand-over to the powerful pump.
OUTFLOW_WEAK = np.array([4.0e-4, 1.0e-4, 1.0e-4])
OUTFLOW_POWERFUL = np.array([6.0e-4, 1.5e-4, 0.4e-4])
# In-valve opening at powerful-mode equilibrium
ALPHA_POWERFUL = np.array([90.0, 90.0, 90.0])

DEFAULT_SETPOINT = (0.045, 0.045, 0.045)
DEFAULT_INITIAL_LEVELS = (0.04, 0.04, 0.04)


@dataclass(frozen=True)
class LinearMode:
    name: Mode
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    outflow: np.ndarray = None
    valve_bias: np.ndarray = None

    def __post_init__(self):
        n, m = self.B.shape
        if self.A.shape != (n, n):
            raise ConfigurationError(f"{self.name.value}: A must be {n}x{n}, got {self.A.shape}")
        if self.K.shape != (m, n):
            raise ConfigurationError(f"{self.name.value}: K must be {m}x{n}, got {self.K.shape}")
        if self.outflow is None:
            object.__setattr__(self, "outflow", np.zeros(n))
        if self.valve_bias is None:
            object.__setattr__(self, "valve_bias", np.zeros(m))
        if self.outflow.shape != (n,) or self.valve_bias.shape != (m,):
            raise ConfigurationError(f"{self.name.value}: outflow/valve_bias have wrong length")

    @property
    def n_states(self) -> int:
        return self.B.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]


def weak_mode(**overrides) -> LinearMode:
    params = dict(
        A=np.zeros((3, 3)), B=B_WEAK, K=K_WEAK, outflow=OUTFLOW_WEAK, valve_bias=np.zeros(3)
    )
    params.update({k: np.asarray(v, dtype=float) for k, v in overrides.items()})
    return LinearMode(Mode.WEAK, **params)


def powerful_mode(**overrides) -> LinearMode:
    params = dict(
        A=np.zeros((3, 3)), B=B_POWERFUL, K=K_POWERFUL, outflow=OUTFLOW_POWERFUL,
        valve_bias=ALPHA_POWERFUL,
    )
    params.update({k: np.asarray(v, dtype=float) for k, v in overrides.items()})
    return LinearMode(Mode.POWERFUL, **params)


@dataclass(frozen=True)
class TriggerConfig:
    eta: float = 0.003
    h_ms: int = 1
    h_low: float = 0.03
    safe_band: tuple[float, float] = (0.03, 0.06)
    # "plant": pump hand-over acts on the true levels xi(t);
    # "controller": on the controller's event-sampled composite state
    mode_switch_source: str = "plant"

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("eta must be > 0")
        if self.h_ms <= 0:
            raise ConfigurationError("h_ms must be > 0")
        lo, hi = self.safe_band
        if not lo < hi:
            raise ConfigurationError("safe_band must satisfy low < high")
        if self.mode_switch_source not in ("plant", "controller"):
            raise ConfigurationError("mode_switch_source must be 'plant' or 'controller'")


@dataclass(frozen=True)
class Disturbance:
    """Constant level rate on one tank while active.

    The tank moves by ``magnitude_m`` every ``spread_s`` seconds; with
    ``spread_s`` unset the whole magnitude is spread over ``duration_s``.
    ``sign = -1`` drains the tank (leak or demand surge), ``+1`` fills it.
    """

    tank_index: int = 0
    magnitude_m: float = 0.01
    start_s: float = 0.0
    duration_s: float = 1.0
    sign: int = -1
    spread_s: float | None = None

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ConfigurationError("disturbance duration_s must be > 0")
        if self.sign not in (-1, 1):
            raise ConfigurationError("disturbance sign must be -1 or +1")
        if self.tank_index < 0:
            raise ConfigurationError("tank_index must be >= 0")
        if self.spread_s is not None and not self.spread_s > 0:
            raise ConfigurationError("disturbance spread_s must be > 0")

    @property
    def rate(self) -> float:
        spread = self.duration_s if self.spread_s is None else self.spread_s
        return self.sign * self.magnitude_m / spread

    def active(self, t_s: float) -> bool:
        return self.start_s <= t_s < self.start_s + self.duration_s

    def rate_vector(self, n: int, t_s: float | None = None) -> np.ndarray:
        w = np.zeros(n)
        if t_s is None or self.active(t_s):
            w[self.tank_index] = self.rate
        return w


@dataclass
class PlantState:
    xi: np.ndarray
    mode: Mode = Mode.WEAK
    held_u: np.ndarray = None
    last_sample: np.ndarray = None

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.held_u is None:
            self.held_u = np.zeros(len(self.xi))
        if self.last_sample is None:
            self.last_sample = np.full(len(self.xi), np.nan)


def level_rate(mode: LinearMode, xi, u, w=None) -> np.ndarray:
    """Time derivative of the levels for held valve vector ``u``."""
    rate = mode.A @ xi + mode.B @ u - mode.outflow
    if w is not None:
        rate = rate + w
    return rate


def integrate_step(
    state: PlantState, mode: LinearMode, dt: float, w=None, t_s: float | None = None
) -> PlantState:
    """Advance ``state`` by ``dt`` seconds with ``held_u`` and ``w`` constant."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if np.any(mode.A):
        # general zero-order hold via the augmented matrix exponential
        from scipy.linalg import expm

        n = mode.n_states
        m_aug = np.zeros((n + 1, n + 1))
        m_aug[:n, :n] = mode.A
        m_aug[:n, n] = mode.B @ state.held_u - mode.outflow + (0 if w is None else w)
        xi = (expm(m_aug * dt) @ np.append(state.xi, 1.0))[:n]
    else:
        xi = state.xi + level_rate(mode, state.xi, state.held_u, w) * dt
    if not np.all(np.isfinite(xi)):
        raise SimulationError("plant state is not finite", t_us=None if t_s is None else round(t_s * 1e6), state=xi)
    return PlantState(xi, state.mode, state.held_u.copy(), state.last_sample.copy())


def check_trigger(xi_now: float, xi_reference: float, eta: float) -> bool:
    """True when the level has moved strictly more than ``eta`` since the last event."""
    if xi_reference is None or math.isnan(xi_reference):
        return True
    return abs(xi_now - xi_reference) > eta


def apply_valve(u_raw) -> np.ndarray:
    """Saturate to [0, 180] degrees and quantise to 10 degree steps (ties toward zero)."""
    u = np.clip(np.asarray(u_raw, dtype=float), 0.0, VALVE_MAX_DEG)
    steps = np.ceil(u / VALVE_STEP_DEG - 0.5)
    return steps * VALVE_STEP_DEG + 0.0


def control_law(xi_composite, mode: LinearMode, setpoint) -> np.ndarray:
    """Raw valve command ``valve_bias + K (setpoint - xi)`` before the valve model."""
    xi_composite = np.asarray(xi_composite, dtype=float)
    setpoint = np.asarray(setpoint, dtype=float)
    if xi_composite.shape != (mode.n_states,) or setpoint.shape != (mode.n_states,):
        raise ConfigurationError(
            f"state has shape {xi_composite.shape}, mode expects ({mode.n_states},)"
        )
    return mode.valve_bias + mode.K @ (setpoint - xi_composite)


def controller_update(xi_composite, mode: LinearMode, setpoint) -> np.ndarray:
    return apply_valve(control_law(xi_composite, mode, setpoint))


def evaluate_mode_switch(
    current: Mode,
    xi,
    trigger: TriggerConfig,
    powerful: LinearMode,
    setpoint,
) -> Mode:
    """Pump hand-over rule.

    Powerful -> weak once the powerful-mode valves would sum to less than
    180 degrees; weak -> powerful as soon as any level is at or below ``h_low``.
    """
    xi = np.asarray(xi, dtype=float)
    if current is Mode.POWERFUL:
        if valve_sum(xi, powerful, setpoint) < VALVE_MAX_DEG:
            return Mode.WEAK
        return Mode.POWERFUL
    if np.any(xi <= trigger.h_low):
        return Mode.POWERFUL
    return Mode.WEAK


def valve_sum(xi, powerful: LinearMode, setpoint) -> float:
    return float(np.sum(controller_update(xi, powerful, setpoint)))


@dataclass(frozen=True)
class PlantConfig:
    weak: LinearMode = field(default_factory=weak_mode)
    powerful: LinearMode = field(default_factory=powerful_mode)
    setpoint: tuple[float, ...] = DEFAULT_SETPOINT
    initial_levels: tuple[float, ...] = DEFAULT_INITIAL_LEVELS
    initial_mode: Mode = Mode.WEAK

    def __post_init__(self):
        n = self.weak.n_states
        if self.powerful.n_states != n or self.powerful.n_inputs != self.weak.n_inputs:
            raise ConfigurationError("weak and powerful modes have different dimensions")
        if len(self.setpoint) != n or len(self.initial_levels) != n:
            raise ConfigurationError(f"setpoint and initial_levels need {n} entries")
        if self.weak.n_inputs != n:
            # one end-device per tank senses level j and drives valve j
            raise ConfigurationError("each tank needs exactly one valve (m == n)")

    def mode(self, name: Mode) -> LinearMode:
        return self.powerful if name is Mode.POWERFUL else self.weak
