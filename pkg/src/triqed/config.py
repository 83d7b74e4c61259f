"""Scenario configuration: INI files, defaults, and CLI overrides.

A scenario file is standard INI text (``configparser`` dialect, ``#`` or
``;`` comments).  Every key is optional; omitted keys take the defaults
shown below.  Unknown sections or keys are hard errors so that typos never
silently fall back to defaults.

::

    [model]
    g_a = 1.0            # atom-cavity coupling (sets the time unit)
    g_c = 1.0            # field-cavity coupling
    k_tilde = 0.0        # cavity photon loss rate, units of g_a
    gamma_tilde = 0.0    # atomic spontaneous emission rate, units of g_a
    tau_off = 2.221441   # drive switch-off time (default pi/sqrt(2))

    [input]
    kind = w             # w | ghz | mixed | custom
    p = 0.5              # GHZ weight, mixed kind only
    amplitudes = 1, 0, 0, 0, 0, 0, 0, 1   # 8 complex numbers, custom only

    [grid]
    tau_start = 0.0
    tau_end = 12.0
    dt = 0.001           # integrator step
    sample_dt = 0.01     # uniform output spacing ...
    sample_times = 1.0, 2.0   # ... or an explicit list (not both)

    [solver]
    kind = factorized    # exact | factorized | mcwf
    n_traj = 2000        # trajectory count, mcwf only
    base_seed = 0        # trajectory i uses seed base_seed + i
    workers = 1          # process count for trajectory chunks

    [output]
    path = run.csv
    observables = E_a, p_e     # column subset; default = all columns
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from dataclasses import dataclass

from .dynamics import TimeGrid
from .model import InputStateSpec, ModelParams

__all__ = [
    "OBSERVABLE_COLUMNS",
    "ScenarioConfig",
    "SolverKind",
    "load_config",
]


class SolverKind(enum.Enum):
    """Which propagation backend a scenario runs on."""

    EXACT = "exact"
    FACTORIZED = "factorized"
    MCWF = "mcwf"

    @classmethod
    def parse(cls, text: str) -> "SolverKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown solver {text!r} (choices: {choices})") from None


#: Every column run_scenario can emit, in output order (tau always leads).
OBSERVABLE_COLUMNS = (
    "N_c",
    "N_f",
    "p_e",
    "E_a",
    "E_c",
    "E_f",
    "F_a_raw",
    "F_a_best",
    "F_c_raw",
    "F_c_best",
    "mu_a",
    "mu_c",
    "wG",
    "wW1",
    "wW2",
    "class_label",
    "n_aa",
    "n_cc",
    "n_ff",
    "n_ca",
    "n_fa",
    "n_fc",
)

_SECTION_KEYS = {
    "model": ("g_a", "g_c", "k_tilde", "gamma_tilde", "tau_off"),
    "input": ("kind", "p", "amplitudes"),
    "grid": ("tau_start", "tau_end", "dt", "sample_dt", "sample_times"),
    "solver": ("kind", "n_traj", "base_seed", "workers"),
    "output": ("path", "observables"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved inputs for one run_scenario call."""

    model: ModelParams = ModelParams()
    input_spec: InputStateSpec = InputStateSpec.w()
    grid: TimeGrid = None  # type: ignore[assignment]  # resolved in __post_init__
    solver: SolverKind = SolverKind.FACTORIZED
    n_traj: int = 2000
    base_seed: int = 0
    workers: int = 1
    observables: tuple[str, ...] = OBSERVABLE_COLUMNS
    output_path: str | None = None

    def __post_init__(self):
        if self.grid is None:
            object.__setattr__(self, "grid", TimeGrid.uniform(12.0, 0.01))
        unknown = [name for name in self.observables if name not in OBSERVABLE_COLUMNS]
        if unknown:
            raise ValueError(f"unknown observables: {unknown}")
        ordered = tuple(c for c in OBSERVABLE_COLUMNS if c in set(self.observables))
        object.__setattr__(self, "observables", ordered)
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.base_seed < 0:
            raise ValueError("base_seed must be nonnegative")

    def with_overrides(
        self,
        solver: str | SolverKind | None = None,
        n_traj: int | None = None,
        base_seed: int | None = None,
        dt: float | None = None,
        workers: int | None = None,
        output_path: str | None = None,
    ) -> "ScenarioConfig":
        """Apply command-line flag overrides on top of this config."""
        cfg = self
        if solver is not None:
            kind = solver if isinstance(solver, SolverKind) else SolverKind.parse(solver)
            cfg = dataclasses.replace(cfg, solver=kind)
        if n_traj is not None:
            cfg = dataclasses.replace(cfg, n_traj=n_traj)
        if base_seed is not None:
            cfg = dataclasses.replace(cfg, base_seed=base_seed)
        if workers is not None:
            cfg = dataclasses.replace(cfg, workers=workers)
        if dt is not None:
            cfg = dataclasses.replace(cfg, grid=dataclasses.replace(cfg.grid, dt=dt))
        if output_path is not None:
            cfg = dataclasses.replace(cfg, output_path=output_path)
        return cfg


def _check_known_keys(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ValueError(f"unknown config section [{section}]")
        allowed = _SECTION_KEYS[section]
        for key in parser[section]:
            if key not in allowed:
                raise ValueError(
                    f"unknown key {key!r} in section [{section}] "
                    f"(allowed: {', '.join(allowed)})"
                )


def _parse_float_list(text: str) -> tuple[float, ...]:
    items = [tok.strip() for tok in text.replace(";", ",").split(",") if tok.strip()]
    return tuple(float(tok) for tok in items)


def _parse_complex_list(text: str) -> tuple[complex, ...]:
    items = [tok.strip() for tok in text.split(",") if tok.strip()]
    return tuple(complex(tok.replace(" ", "")) for tok in items)


def _build_input(section) -> InputStateSpec:
    kind = section.get("kind", "w").strip().lower()
    if kind == "w":
        return InputStateSpec.w()
    if kind == "ghz":
        return InputStateSpec.ghz()
    if kind == "mixed":
        if "p" not in section:
            raise ValueError("input kind 'mixed' requires key 'p'")
        return InputStateSpec.mixed(section.getfloat("p"))
    if kind == "custom":
        if "amplitudes" not in section:
            raise ValueError("input kind 'custom' requires key 'amplitudes'")
        return InputStateSpec.custom(_parse_complex_list(section["amplitudes"]))
    raise ValueError(f"unknown input kind {kind!r} (choices: w, ghz, mixed, custom)")


def _build_grid(section) -> TimeGrid:
    tau_start = section.getfloat("tau_start", 0.0)
    tau_end = section.getfloat("tau_end", 12.0)
    dt = section.getfloat("dt", 1e-3)
    if "sample_times" in section and "sample_dt" in section:
        raise ValueError("give either sample_dt or sample_times, not both")
    if "sample_times" in section:
        return TimeGrid(tau_start, tau_end, dt, _parse_float_list(section["sample_times"]))
    sample_dt = section.getfloat("sample_dt", 0.01)
    return TimeGrid.uniform(tau_end, sample_dt, dt, tau_start)


def load_config(path: str) -> ScenarioConfig:
    """Parse an INI scenario file; unknown sections/keys raise ValueError."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh, source=path)
    _check_known_keys(parser)

    def section(name):
        return parser[name] if parser.has_section(name) else parser["DEFAULT"]

    model_sec = section("model")
    model = ModelParams(
        g_a=model_sec.getfloat("g_a", 1.0),
        g_c=model_sec.getfloat("g_c", 1.0),
        k_tilde=model_sec.getfloat("k_tilde", 0.0),
        gamma_tilde=model_sec.getfloat("gamma_tilde", 0.0),
        tau_off=model_sec.getfloat("tau_off", math.pi / math.sqrt(2.0)),
    )
    input_spec = _build_input(section("input"))
    grid = _build_grid(section("grid"))
    solver_sec = section("solver")
    solver = SolverKind.parse(solver_sec.get("kind", "factorized"))
    out_sec = section("output")
    observables = OBSERVABLE_COLUMNS
    if "observables" in out_sec:
        observables = tuple(
            tok.strip() for tok in out_sec["observables"].split(",") if tok.strip()
        )
    return ScenarioConfig(
        model=model,
        input_spec=input_spec,
        grid=grid,
        solver=solver,
        n_traj=solver_sec.getint("n_traj", 2000),
        base_seed=solver_sec.getint("base_seed", 0),
        workers=solver_sec.getint("workers", 1),
        observables=observables,
        output_path=out_sec.get("path", None),
    )
