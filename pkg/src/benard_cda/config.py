"""Line-oriented scenario files.

Format: ``key = value`` per line, ``#`` starts a comment, optional
``[section]`` headers group keys. A key placed under a section must belong
to it; keys above the first header may be any known key.

=================  ============  ==================================  ==============
key                section       meaning                             default
=================  ============  ==================================  ==============
name               scenario      label used in outputs               file stem
Ra, Pr, dt         solver        Rayleigh, Prandtl, time step        mandatory
nsteps             solver        number of steps                     mandatory
nx, ny             grid          cells in x and y                    200, 100
Lx, Ly             grid          domain size                         2.0, 1.0
stride             observations  coarse sampling stride s            mandatory
time_every         observations  observations every k steps          1
variables          observations  temperature and/or velocity         both
hold_mode          observations  hold_last or only_at_arrival        hold_last
mechanism          nudging       cda or na                           mandatory
preset             nudging       small, medium or large              (see below)
mu_theta, mu_u     nudging       CDA relaxation coefficients         0
alpha_theta,       nudging       NA coefficients                     0
alpha_u
interpolant        nudging       piecewise_constant, nearest,        piecewise_constant
                                 linear, cubic, spline
epsilon            noise         relative noise amplitude            0 (no noise)
seed               noise         unsigned 64-bit noise seed          0
reference_ic       initial       reference, zero or shear            reference
assimilated_ic     initial       reference, zero or shear            zero
shear_amplitude    initial       shear profile amplitude             0.5
shear_wavenumber   initial       shear profile wavenumber            2*pi/20
shear_band         initial       y-band of the shear, "lo, hi"       0.4, 0.6
snapshot_steps     output        comma-separated steps, or none      nsteps
decay_window       output        decay-fit window "ta, tb"           2, 20
=================  ============  ==================================  ==============

Either ``preset`` or at least one explicit coefficient must be given, not
both. With a preset, ``variables`` selects which coefficients are set.
"""
from __future__ import annotations

import math
import re
from pathlib import Path

from .assimilation import HoldMode, Interpolant, Mechanism, NoiseModel, NudgeSpec, ObservationPolicy
from .errors import ConfigurationError
from .experiments import InitialCondition, ScenarioConfig
from .grid import GridSpec
from .solver import SolverParams

SECTIONS = {
    "scenario": ("name",),
    "solver": ("Ra", "Pr", "dt", "nsteps"),
    "grid": ("nx", "ny", "Lx", "Ly"),
    "observations": ("stride", "time_every", "variables", "hold_mode"),
    "nudging": ("mechanism", "preset", "mu_theta", "mu_u", "alpha_theta", "alpha_u", "interpolant"),
    "noise": ("epsilon", "seed"),
    "initial": ("reference_ic", "assimilated_ic", "shear_amplitude", "shear_wavenumber",
                "shear_band"),
    "output": ("snapshot_steps", "decay_window"),
}
KEY_SECTION = {k: s for s, keys in SECTIONS.items() for k in keys}
MANDATORY = ("Ra", "Pr", "dt", "nsteps", "stride", "mechanism")
COEFFICIENTS = ("mu_theta", "mu_u", "alpha_theta", "alpha_u")

_HEADER = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
_PAIR = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


def read_pairs(text: str) -> dict:
    """``{key: (raw_value, line_number)}`` from config text."""
    pairs = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigurationError(f"unknown section [{section}]", line=lineno)
            continue
        m = _PAIR.match(line)
        if not m:
            raise ConfigurationError(f"cannot parse {raw.strip()!r}; expected 'key = value'",
                                     line=lineno)
        key, value = m.group(1), m.group(2).strip()
        if key not in KEY_SECTION:
            raise ConfigurationError("unknown key", key=key, line=lineno)
        if section is not None and KEY_SECTION[key] != section:
            raise ConfigurationError(
                f"belongs in section [{KEY_SECTION[key]}], not [{section}]", key=key, line=lineno)
        if key in pairs:
            raise ConfigurationError(f"duplicate key (first set on line {pairs[key][1]})",
                                     key=key, line=lineno)
        if value == "":
            raise ConfigurationError("empty value", key=key, line=lineno)
        pairs[key] = (value, lineno)
    return pairs


class _Reader:
    def __init__(self, pairs):
        self.pairs = pairs

    def line(self, key):
        return self.pairs[key][1] if key in self.pairs else None

    def has(self, key):
        return key in self.pairs

    def _convert(self, key, fn, what):
        value, line = self.pairs[key]
        try:
            return fn(value)
        except (ValueError, OverflowError):
            raise ConfigurationError(f"invalid {what} {value!r}", key=key, line=line) from None

    def number(self, key, default=None):
        if key not in self.pairs:
            return default
        out = self._convert(key, float, "number")
        if not math.isfinite(out):
            raise ConfigurationError("value must be finite", key=key, line=self.line(key))
        return out

    def integer(self, key, default=None):
        if key not in self.pairs:
            return default

        def parse(v):
            try:
                return int(v)
            except ValueError:
                f = float(v)  # allow forms like 3e3
                if not f.is_integer():
                    raise
                return int(f)

        return self._convert(key, parse, "integer")

    def text(self, key, default=None):
        return self.pairs[key][0] if key in self.pairs else default

    def items(self, key, fn, default=None):
        if key not in self.pairs:
            return default
        return self._convert(key, lambda v: tuple(fn(x.strip()) for x in v.split(",") if x.strip()),
                             "list")

    def choice(self, key, enum_cls, default=None):
        if key not in self.pairs:
            return default
        value, line = self.pairs[key]
        try:
            return enum_cls(value.lower())
        except ValueError:
            options = ", ".join(e.value for e in enum_cls)
            raise ConfigurationError(f"invalid value {value!r}; expected one of {options}",
                                     key=key, line=line) from None


def build_config(pairs: dict, default_name: str = "scenario") -> ScenarioConfig:
    r = _Reader(pairs)
    for key in MANDATORY:
        if not r.has(key):
            raise ConfigurationError("mandatory key missing", key=key)
    try:
        return _build(r, default_name)
    except ConfigurationError as exc:
        if exc.line is None and exc.key is not None and r.has(exc.key):
            raise ConfigurationError(exc.detail, key=exc.key, line=r.line(exc.key)) from None
        raise


def _build(r: _Reader, default_name: str) -> ScenarioConfig:
    grid = GridSpec(r.integer("nx", 200), r.integer("ny", 100), r.number("Lx", 2.0), r.number("Ly", 1.0))
    params = SolverParams(r.number("Ra"), r.number("Pr"), r.number("dt"))
    nsteps = r.integer("nsteps")

    variables = r.items("variables", str.lower, ("temperature", "velocity"))
    policy = ObservationPolicy(r.integer("stride"), r.integer("time_every", 1), frozenset(variables),
                               r.choice("hold_mode", HoldMode, HoldMode.HOLD_LAST))
    policy.validate(grid)

    mechanism = r.choice("mechanism", Mechanism)
    interpolant = r.choice("interpolant", Interpolant, Interpolant.PIECEWISE_CONSTANT)
    explicit = [k for k in COEFFICIENTS if r.has(k)]
    if r.has("preset"):
        if explicit:
            raise ConfigurationError("give either a preset or explicit coefficients, not both",
                                     key=explicit[0], line=r.line(explicit[0]))
        spec = NudgeSpec.from_preset(mechanism, r.text("preset").lower(), variables, interpolant)
    elif explicit:
        spec = NudgeSpec(mechanism, *(r.number(k, 0.0) for k in COEFFICIENTS), interpolant)
    else:
        raise ConfigurationError("either 'preset' or explicit coefficients are required",
                                 key="preset")

    noise = NoiseModel(r.number("epsilon", 0.0), r.integer("seed", 0))

    band = r.items("shear_band", float, (0.4, 0.6))
    if len(band) != 2:
        raise ConfigurationError("expected two numbers 'lo, hi'", key="shear_band",
                                 line=r.line("shear_band"))
    shear = dict(amplitude=r.number("shear_amplitude", 0.5),
                 wavenumber=r.number("shear_wavenumber", 2 * math.pi / 20), band=band)
    ics = {}
    for key, default in (("reference_ic", "reference"), ("assimilated_ic", "zero")):
        try:
            ics[key] = InitialCondition(r.text(key, default).lower(), **shear)
        except ConfigurationError as exc:
            raise ConfigurationError(exc.detail, key=key, line=r.line(key)) from None
    ref_ic, asm_ic = ics["reference_ic"], ics["assimilated_ic"]

    if (r.text("snapshot_steps") or "").lower() == "none":
        snaps = ()
    else:
        snaps = r.items("snapshot_steps", int, (nsteps,))
    window = r.items("decay_window", float, (2.0, 20.0))
    if len(window) != 2:
        raise ConfigurationError("expected two numbers 'ta, tb'", key="decay_window",
                                 line=r.line("decay_window"))
    return ScenarioConfig(
        name=r.text("name", default_name), grid=grid, params=params,
        reference_ic=ref_ic, assimilated_ic=asm_ic, policy=policy, spec=spec, noise=noise,
        nsteps=nsteps, snapshot_steps=snaps, decay_window=window)


def parse_config_text(text: str, default_name: str = "scenario") -> ScenarioConfig:
    return build_config(read_pairs(text), default_name)


def parse_config(path) -> ScenarioConfig:
    """Read and validate a scenario file; errors carry the offending line."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} does not exist") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, default_name=path.stem)


def format_config(config: ScenarioConfig) -> str:
    """Inverse of ``parse_config`` for configs built from explicit coefficients."""
    g, p, pol, sp, nz = config.grid, config.params, config.policy, config.spec, config.noise
    ic = config.reference_ic
    lines = [
        "[scenario]", f"name = {config.name}",
        "[solver]", f"Ra = {p.Ra!r}", f"Pr = {p.Pr!r}", f"dt = {p.dt!r}", f"nsteps = {config.nsteps}",
        "[grid]", f"nx = {g.nx}", f"ny = {g.ny}", f"Lx = {g.Lx!r}", f"Ly = {g.Ly!r}",
        "[observations]", f"stride = {pol.stride}", f"time_every = {pol.time_every}",
        f"variables = {', '.join(sorted(pol.variables))}", f"hold_mode = {pol.hold_mode.value}",
        "[nudging]", f"mechanism = {sp.mechanism.value}",
        *(f"{k} = {getattr(sp, k)!r}" for k in COEFFICIENTS),
        f"interpolant = {sp.interpolant.value}",
        "[noise]", f"epsilon = {nz.epsilon!r}", f"seed = {nz.seed}",
        "[initial]", f"reference_ic = {ic.kind}", f"assimilated_ic = {config.assimilated_ic.kind}",
        f"shear_amplitude = {ic.amplitude!r}", f"shear_wavenumber = {ic.wavenumber!r}",
        f"shear_band = {ic.band[0]!r}, {ic.band[1]!r}",
        "[output]",
    ]
    snaps = ", ".join(str(s) for s in config.snapshot_steps) or "none"
    lines.append(f"snapshot_steps = {snaps}")
    lines.append(f"decay_window = {config.decay_window[0]!r}, {config.decay_window[1]!r}")
    return "\n".join(lines) + "\n"
