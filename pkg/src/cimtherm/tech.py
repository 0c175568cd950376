"""Device, timing, and thermal-stack parameters plus run configuration.

All quantities are SI internally (ohm, ampere, second, metre, watt, kelvin);
data-sheet units are converted at the boundary. Temperatures are handled as
rise above ambient inside the solvers; absolute Celsius appears only in
reports.
"""
from __future__ import annotations

import configparser
import enum
import io
import math
from dataclasses import dataclass, field, fields, replace


class ConfigError(ValueError):
    """A configuration document is malformed or violates a model constraint."""


class TechKind(enum.Enum):
    STT = "stt"
    SHE = "she"


class KernelKind(enum.Enum):
    INVFX = "INVfx"
    INVSHFT = "INVshft"
    VMULMIX = "VMULmix"
    VMULNOR = "VMULnor"
    NNMIXBLK = "NNmixblk"
    NNMIXNOBLK = "NNmixnoblk"
    NNMIXREST = "NNmixrest"
    NNNORBLK = "NNnorblk"
    NNNORNOBLK = "NNnornoblk"
    NNNORREST = "NNnorrest"

    @property
    def adder(self) -> str:
        """Full-adder style used by arithmetic kernels ('mix' or 'nor')."""
        return "nor" if "nor" in self.value else "mix"

    @property
    def nn_update(self) -> str | None:
        """State-update style for network kernels: 'blk', 'noblk' or 'rest'."""
        if not self.value.startswith("NN"):
            return None
        for style in ("noblk", "blk", "rest"):
            if self.value.endswith(style):
                return style
        raise AssertionError(self.value)


@dataclass(frozen=True)
class TechnologyParams:
    """Cell-level electrical and geometric constants for one memory technology."""

    kind: TechKind
    r_p: float          # low (parallel) resistance, ohm
    r_ap: float         # high (anti-parallel) resistance, ohm
    r_she: float | None  # Hall-channel resistance, ohm; present iff kind is SHE
    i_crit: float       # switching threshold current, A
    t_sw: float         # switching time, s
    t_clk: float        # clock period, s
    cell_dx: float      # cell pitch along a row, m
    cell_dy: float      # cell pitch along a column, m
    cell_dz: float      # active-layer thickness, m

    def __post_init__(self) -> None:
        if not (self.r_ap > self.r_p > 0):
            raise ConfigError(f"resistances must satisfy r_ap > r_p > 0, got {self.r_p}, {self.r_ap}")
        if self.i_crit <= 0:
            raise ConfigError("i_crit must be positive")
        if self.t_sw <= 0 or self.t_clk <= 0:
            raise ConfigError("timing constants must be positive")
        # one clock must contain the preset pulse and the switching pulse
        if self.t_clk < 2 * self.t_sw:
            raise ConfigError(f"t_clk={self.t_clk} cannot contain preset + switch (2*t_sw={2 * self.t_sw})")
        if self.kind is TechKind.SHE:
            if self.r_she is None or self.r_she <= 0:
                raise ConfigError("SHE technology requires r_she > 0")
        elif self.r_she is not None:
            raise ConfigError("r_she is only meaningful for SHE technology")
        if min(self.cell_dx, self.cell_dy, self.cell_dz) <= 0:
            raise ConfigError("cell dimensions must be positive")

    @property
    def cell_area(self) -> float:
        """Footprint of one cell, m^2."""
        return self.cell_dx * self.cell_dy


@dataclass(frozen=True)
class ThermalStack:
    """Vertical heat-removal stack under the array plus the ambient interface."""

    bulk_si_dz: float    # die thickness, m
    tim_dz: float        # thermal interface material thickness, m
    cu_dz: float         # heatsink baseplate thickness, m
    k_si: float          # W/(m K)
    k_tim: float         # W/(m K)
    k_cu: float          # W/(m K)
    r_convective: float  # lumped heatsink-to-air resistance, K/W
    ambient_c: float = 25.0

    def __post_init__(self) -> None:
        for name in ("bulk_si_dz", "tim_dz", "cu_dz", "k_si", "k_tim", "k_cu", "r_convective"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


def builtin_technology(kind: TechKind) -> TechnologyParams:
    """Built-in device constants for the two supported technologies."""
    if kind is TechKind.STT:
        return TechnologyParams(
            kind=TechKind.STT,
            r_p=3.15e3, r_ap=7.34e3, r_she=None,
            i_crit=50e-6, t_sw=1e-9, t_clk=3e-9,
            cell_dx=0.12e-6, cell_dy=0.12e-6, cell_dz=0.12e-6,
        )
    if kind is TechKind.SHE:
        # doubled cell area relative to STT: the Hall channel stretches the
        # cell along the column direction
        return TechnologyParams(
            kind=TechKind.SHE,
            r_p=253.97e3, r_ap=507.94e3, r_she=64e3,
            i_crit=3e-6, t_sw=1e-9, t_clk=3e-9,
            cell_dx=0.12e-6, cell_dy=0.24e-6, cell_dz=0.12e-6,
        )
    raise ConfigError(f"unknown technology kind: {kind!r}")


def builtin_stack() -> ThermalStack:
    """Built-in thermal stack: 500 um die, 100 um TIM, 5 mm Cu base, 1.5 K/W to air."""
    return ThermalStack(
        bulk_si_dz=500e-6, tim_dz=100e-6, cu_dz=5e-3,
        k_si=100.0, k_tim=3.0, k_cu=400.0,
        r_convective=1.5, ambient_c=25.0,
    )


ARRAY_SIZES = {"sm": (256, 32), "md": (512, 512), "lg": (1024, 1024)}


@dataclass(frozen=True)
class KernelSpec:
    """Benchmark selector plus its problem dimensions and data seed."""

    kind: KernelKind
    bit_width: int = 4
    matrix_rows: int | None = None  # vector length for VMUL kernels; None = largest fit
    neurons: int | None = None      # network size for NN kernels; None = largest fit
    seed: int = 0

    def __post_init__(self) -> None:
        if self.bit_width < 1:
            raise ConfigError("bit_width must be >= 1")
        if self.matrix_rows is not None and self.matrix_rows < 1:
            raise ConfigError("matrix_rows must be >= 1")
        if self.neurons is not None and self.neurons < 2:
            raise ConfigError("neurons must be >= 2")


MIN_SIM_TIME = 1e-3  # thermally significant window, s


@dataclass(frozen=True)
class SimulationConfig:
    """Fully validated description of one simulation run."""

    technology: TechnologyParams
    stack: ThermalStack
    array_rows: int
    array_cols: int
    kernel: KernelSpec
    utilization: float = 1.0
    duty_cycle: float = 1.0
    sim_time: float = MIN_SIM_TIME
    coalesce_factor: int = 1
    allow_short_sim: bool = False

    def __post_init__(self) -> None:
        if self.array_rows <= 0 or self.array_cols <= 0:
            raise ConfigError("array dimensions must be positive")
        if not 0 < self.utilization <= 1:
            raise ConfigError(f"utilization must lie in (0, 1], got {self.utilization}")
        if not 0 < self.duty_cycle <= 1:
            raise ConfigError(f"duty_cycle must lie in (0, 1], got {self.duty_cycle}")
        if self.sim_time < MIN_SIM_TIME and not self.allow_short_sim:
            raise ConfigError(
                f"sim_time={self.sim_time} below {MIN_SIM_TIME}; set allow_short_sim to override")
        if self.sim_time <= 0:
            raise ConfigError("sim_time must be positive")
        if self.coalesce_factor < 1:
            raise ConfigError("coalesce_factor must be >= 1")
        if self.array_rows % self.coalesce_factor or self.array_cols % self.coalesce_factor:
            raise ConfigError(
                f"coalesce_factor={self.coalesce_factor} must divide rows and cols "
                f"({self.array_rows}x{self.array_cols})")
        if math.ceil(self.utilization * self.array_cols) < 1:
            raise ConfigError("utilization selects no active lane")


# --- configuration document handling ------------------------------------
#
# Flat INI document; unknown sections or keys are hard errors. Keys carry
# unit suffixes. See config_template() for the commented reference form.

_TECH_KEYS = {
    "kind": None,
    "r_p_ohm": "r_p", "r_ap_ohm": "r_ap", "r_she_ohm": "r_she",
    "i_crit_a": "i_crit", "t_sw_s": "t_sw", "t_clk_s": "t_clk",
    "cell_dx_m": "cell_dx", "cell_dy_m": "cell_dy", "cell_dz_m": "cell_dz",
}
_STACK_KEYS = {
    "bulk_si_dz_m": "bulk_si_dz", "tim_dz_m": "tim_dz", "cu_dz_m": "cu_dz",
    "k_si_w_mk": "k_si", "k_tim_w_mk": "k_tim", "k_cu_w_mk": "k_cu",
    "r_convective_k_w": "r_convective", "ambient_c": "ambient_c",
}
_KERNEL_KEYS = {"name", "bit_width", "matrix_rows", "neurons", "seed"}
_ARRAY_KEYS = {"rows", "cols", "size"}
_RUN_KEYS = {"utilization", "duty_cycle", "sim_time_s", "allow_short_sim"}
_THERMAL_KEYS = {"coalesce"} | set(_STACK_KEYS)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def load_config(text: str) -> SimulationConfig:
    """Parse and validate a configuration document."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration document: {exc}") from exc

    known_sections = {"technology", "array", "kernel", "thermal", "run"}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")

    def section(name: str) -> dict[str, str]:
        return dict(parser[name]) if parser.has_section(name) else {}

    tech_sec = section("technology")
    for key in tech_sec:
        if key not in _TECH_KEYS:
            raise ConfigError(f"unknown key '{key}' in [technology]")
    if "kind" not in tech_sec:
        raise ConfigError("[technology] must name a kind (stt or she)")
    try:
        kind = TechKind(tech_sec["kind"].strip().lower())
    except ValueError:
        raise ConfigError(f"unknown technology kind {tech_sec['kind']!r}") from None
    tech = builtin_technology(kind)
    overrides = {}
    for key, attr in _TECH_KEYS.items():
        if attr and key in tech_sec:
            overrides[attr] = float(tech_sec[key])
    if overrides:
        tech = replace(tech, **overrides)

    arr_sec = section("array")
    for key in arr_sec:
        if key not in _ARRAY_KEYS:
            raise ConfigError(f"unknown key '{key}' in [array]")
    if "size" in arr_sec:
        name = arr_sec["size"].strip().lower()
        if name not in ARRAY_SIZES:
            raise ConfigError(f"unknown array size {name!r}; expected one of {sorted(ARRAY_SIZES)}")
        rows, cols = ARRAY_SIZES[name]
    elif "rows" in arr_sec and "cols" in arr_sec:
        rows, cols = int(arr_sec["rows"]), int(arr_sec["cols"])
    else:
        raise ConfigError("[array] must give size= or rows= and cols=")

    ker_sec = section("kernel")
    for key in ker_sec:
        if key not in _KERNEL_KEYS:
            raise ConfigError(f"unknown key '{key}' in [kernel]")
    if "name" not in ker_sec:
        raise ConfigError("[kernel] must name a kernel")
    try:
        kernel_kind = KernelKind(ker_sec["name"].strip())
    except ValueError:
        raise ConfigError(f"unknown kernel {ker_sec['name']!r}") from None
    kernel = KernelSpec(
        kind=kernel_kind,
        bit_width=int(ker_sec.get("bit_width", 4)),
        matrix_rows=int(ker_sec["matrix_rows"]) if "matrix_rows" in ker_sec else None,
        neurons=int(ker_sec["neurons"]) if "neurons" in ker_sec else None,
        seed=int(ker_sec.get("seed", 0)),
    )

    th_sec = section("thermal")
    for key in th_sec:
        if key not in _THERMAL_KEYS:
            raise ConfigError(f"unknown key '{key}' in [thermal]")
    stack = builtin_stack()
    stack_overrides = {attr: float(th_sec[key]) for key, attr in _STACK_KEYS.items() if key in th_sec}
    if stack_overrides:
        stack = replace(stack, **stack_overrides)
    coalesce = int(th_sec.get("coalesce", 1))

    run_sec = section("run")
    for key in run_sec:
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key '{key}' in [run]")

    return SimulationConfig(
        technology=tech,
        stack=stack,
        array_rows=rows,
        array_cols=cols,
        kernel=kernel,
        utilization=float(run_sec.get("utilization", 1.0)),
        duty_cycle=float(run_sec.get("duty_cycle", 1.0)),
        sim_time=float(run_sec.get("sim_time_s", MIN_SIM_TIME)),
        coalesce_factor=coalesce,
        allow_short_sim=_parse_bool(run_sec.get("allow_short_sim", "false")),
    )


def dump_config(config: SimulationConfig) -> str:
    """Serialize a configuration so load_config() reproduces it exactly."""
    parser = configparser.ConfigParser()
    tech = config.technology
    parser["technology"] = {
        "kind": tech.kind.value,
        "r_p_ohm": repr(tech.r_p),
        "r_ap_ohm": repr(tech.r_ap),
        **({"r_she_ohm": repr(tech.r_she)} if tech.r_she is not None else {}),
        "i_crit_a": repr(tech.i_crit),
        "t_sw_s": repr(tech.t_sw),
        "t_clk_s": repr(tech.t_clk),
        "cell_dx_m": repr(tech.cell_dx),
        "cell_dy_m": repr(tech.cell_dy),
        "cell_dz_m": repr(tech.cell_dz),
    }
    parser["array"] = {"rows": str(config.array_rows), "cols": str(config.array_cols)}
    kernel = config.kernel
    parser["kernel"] = {
        "name": kernel.kind.value,
        "bit_width": str(kernel.bit_width),
        **({"matrix_rows": str(kernel.matrix_rows)} if kernel.matrix_rows is not None else {}),
        **({"neurons": str(kernel.neurons)} if kernel.neurons is not None else {}),
        "seed": str(kernel.seed),
    }
    stack = config.stack
    parser["thermal"] = {
        "coalesce": str(config.coalesce_factor),
        "bulk_si_dz_m": repr(stack.bulk_si_dz),
        "tim_dz_m": repr(stack.tim_dz),
        "cu_dz_m": repr(stack.cu_dz),
        "k_si_w_mk": repr(stack.k_si),
        "k_tim_w_mk": repr(stack.k_tim),
        "k_cu_w_mk": repr(stack.k_cu),
        "r_convective_k_w": repr(stack.r_convective),
        "ambient_c": repr(stack.ambient_c),
    }
    parser["run"] = {
        "utilization": repr(config.utilization),
        "duty_cycle": repr(config.duty_cycle),
        "sim_time_s": repr(config.sim_time),
        "allow_short_sim": str(config.allow_short_sim).lower(),
    }
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def config_template() -> str:
    """Commented reference configuration document."""
    return """\
# Simulation configuration. Unknown keys are rejected.

[technology]
kind = stt              # stt | she
# Optional overrides (SI units):
# r_p_ohm = 3150.0      # low-state cell resistance, ohm
# r_ap_ohm = 7340.0     # high-state cell resistance, ohm
# r_she_ohm = 64000.0   # Hall-channel resistance, ohm (she only)
# i_crit_a = 5e-05      # switching threshold current, A
# t_sw_s = 1e-09        # switching pulse width, s
# t_clk_s = 3e-09       # clock period, s (>= 2 * t_sw)
# cell_dx_m = 1.2e-07   # cell pitch along a row, m
# cell_dy_m = 1.2e-07   # cell pitch along a column, m
# cell_dz_m = 1.2e-07   # active layer thickness, m

[array]
size = sm               # sm (256x32) | md (512x512) | lg (1024x1024),
                        # or explicit rows = / cols =

[kernel]
name = INVfx            # INVfx INVshft VMULmix VMULnor NNmixblk NNmixnoblk
                        # NNmixrest NNnorblk NNnornoblk NNnorrest
bit_width = 4           # operand width, bits
# matrix_rows = 8       # vector length for VMUL (default: largest fit)
# neurons = 16          # network size for NN (default: largest fit)
seed = 0                # data seed

[thermal]
coalesce = 1            # supernode edge length in cells; must divide rows and cols
# bulk_si_dz_m = 0.0005     # die thickness, m
# tim_dz_m = 0.0001         # interface material thickness, m
# cu_dz_m = 0.005           # baseplate thickness, m
# k_si_w_mk = 100.0         # silicon conductivity, W/(m K)
# k_tim_w_mk = 3.0          # interface material conductivity, W/(m K)
# k_cu_w_mk = 400.0         # baseplate conductivity, W/(m K)
# r_convective_k_w = 1.5    # lumped heatsink-to-air resistance, K/W
# ambient_c = 25.0          # ambient temperature, degC

[run]
utilization = 1.0       # fraction of lanes computing, (0, 1]
duty_cycle = 1.0        # fraction of non-idle cycles, (0, 1]
sim_time_s = 1e-3       # simulated window, s (>= 1e-3 unless allow_short_sim)
# allow_short_sim = false
"""
