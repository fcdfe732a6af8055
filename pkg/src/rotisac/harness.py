"""Experiment harness: seeded sweep studies over power, array size, user
count, or rotation range, with paired-seed baseline comparisons, Monte-Carlo
summaries, and deterministic CSV/JSON persistence.

Rows are reproducible byte for byte (timing column aside): every
(sweep value, realization) pair samples one scenario from ``seed_base +
realization index`` and every requested architecture is solved on that same
scenario, so comparisons across architectures are paired.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy as np

from .ao import ARCHITECTURES, AoConfig, evaluate_baseline
from .channel import Scenario, ScenarioConfig, sample_scenario, scenario_to_json
from .metrics import beampattern_mse, sum_rate
from .precoder import PrecoderConfig
from .ris import RisConfig
from .rotation import RotationConfig

log = logging.getLogger("rotisac")

SWEEP_VARIABLES = ("power_dbm", "antennas_my", "users_k", "rotation_range_deg")

CSV_COLUMNS = (
    "sweep_value",
    "architecture",
    "seed",
    "sum_rate",
    "mse",
    "feasible",
    "outer_iterations",
    "wall_time_seconds",
    "scenario_hash",
)


@dataclass
class ResultRow:
    sweep_value: float
    architecture: str
    seed: int
    sum_rate: float
    mse: float
    feasible: bool
    outer_iterations: int
    wall_time_seconds: float
    scenario_hash: str


@dataclass
class ExperimentSpec:
    sweep_variable: str
    sweep_values: list
    architectures: list = field(default_factory=lambda: list(ARCHITECTURES))
    num_realizations: int = 1
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: AoConfig = field(default_factory=AoConfig)
    seed_base: int = 0
    output: str = "results.csv"

    def validate(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(
                f"sweep_variable must be one of {SWEEP_VARIABLES}, got {self.sweep_variable!r}"
            )
        if not self.sweep_values:
            raise ValueError("sweep_values must be non-empty")
        if self.num_realizations < 1:
            raise ValueError("num_realizations must be >= 1")
        if not self.architectures:
            raise ValueError("architectures must be non-empty")
        for arch in self.architectures:
            if arch not in ARCHITECTURES:
                raise ValueError(f"unknown architecture {arch!r}")


def apply_sweep_value(config: ScenarioConfig, variable: str, value) -> ScenarioConfig:
    """Derived scenario config for one sweep point."""
    if variable == "power_dbm":
        return dataclasses.replace(config, power_budget_dbm=float(value))
    if variable == "antennas_my":
        return dataclasses.replace(config, bs_cols=int(value))
    if variable == "users_k":
        return dataclasses.replace(config, num_users=int(value))
    if variable == "rotation_range_deg":
        return dataclasses.replace(config, bs_rotation_range_deg=float(value))
    raise ValueError(f"unknown sweep variable {variable!r}")


def scenario_hash(scenario: Scenario) -> str:
    return hashlib.sha256(scenario_to_json(scenario).encode()).hexdigest()[:12]


def _run_task(task):
    """One (sweep value, seed, architecture) solve; must stay module-level
    for the multiprocessing pool."""
    value_index, value, seed_index, arch_index, spec = task
    config = apply_sweep_value(spec.scenario, spec.sweep_variable, value)
    seed = spec.seed_base + seed_index
    architecture = spec.architectures[arch_index]
    scenario = sample_scenario(config, seed)
    digest = scenario_hash(scenario)
    start = time.perf_counter()
    try:
        state = evaluate_baseline(scenario, spec.solver, architecture)
        eval_scenario = scenario
        if architecture.endswith("no-ris"):
            eval_scenario = scenario.without_ris_user_links()
        row = ResultRow(
            sweep_value=float(value),
            architecture=architecture,
            seed=seed,
            sum_rate=sum_rate(eval_scenario, state),
            mse=beampattern_mse(eval_scenario, state),
            feasible=bool(state.feasible),
            outer_iterations=int(state.outer_iterations),
            wall_time_seconds=time.perf_counter() - start,
            scenario_hash=digest,
        )
    except Exception as exc:  # failed solve: record, keep the run going
        log.warning("solve failed (value=%s seed=%s arch=%s): %s", value, seed, architecture, exc)
        row = ResultRow(
            sweep_value=float(value),
            architecture=architecture,
            seed=seed,
            sum_rate=0.0,
            mse=float("inf"),
            feasible=False,
            outer_iterations=0,
            wall_time_seconds=time.perf_counter() - start,
            scenario_hash=digest,
        )
    return (value_index, seed_index, arch_index), row


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[ResultRow]:
    """Execute the full sweep; rows come back in deterministic order
    (sweep value, realization, architecture) regardless of ``jobs``."""
    spec.validate()
    tasks = [
        (vi, value, si, ai, spec)
        for vi, value in enumerate(spec.sweep_values)
        for si in range(spec.num_realizations)
        for ai in range(len(spec.architectures))
    ]
    log.info("running %d solves (%d values x %d seeds x %d architectures)",
             len(tasks), len(spec.sweep_values), spec.num_realizations,
             len(spec.architectures))
    if jobs <= 1:
        keyed = [_run_task(t) for t in tasks]
    else:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            keyed = list(pool.imap_unordered(_run_task, tasks))
    keyed.sort(key=lambda kr: kr[0])
    return [row for _, row in keyed]


def summarize(rows: list[ResultRow]):
    """Per (sweep value, architecture) sample means and standard errors of
    rate and MSE, as a list of dicts in deterministic order."""
    if not rows:
        raise ValueError("summarize requires at least one row")
    groups: dict = {}
    order = []
    for row in rows:
        key = (row.sweep_value, row.architecture)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for key in order:
        members = groups[key]
        rates = np.array([m.sum_rate for m in members])
        mses = np.array([m.mse for m in members])
        n = len(members)
        out.append(
            {
                "sweep_value": key[0],
                "architecture": key[1],
                "count": n,
                "sum_rate_mean": float(rates.mean()),
                "sum_rate_se": float(rates.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
                "mse_mean": float(mses.mean()),
                "mse_se": float(mses.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
                "num_feasible": int(sum(m.feasible for m in members)),
            }
        )
    return out


# ---------------------------------------------------------------------------
# CSV / JSON persistence
# ---------------------------------------------------------------------------


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        buf.write(
            ",".join(_format_value(getattr(row, col)) for col in CSV_COLUMNS) + "\n"
        )
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rec = dict(zip(CSV_COLUMNS, parts))
        rows.append(
            ResultRow(
                sweep_value=float(rec["sweep_value"]),
                architecture=rec["architecture"],
                seed=int(rec["seed"]),
                sum_rate=float(rec["sum_rate"]),
                mse=float(rec["mse"]),
                feasible=rec["feasible"] == "true",
                outer_iterations=int(rec["outer_iterations"]),
                wall_time_seconds=float(rec["wall_time_seconds"]),
                scenario_hash=rec["scenario_hash"],
            )
        )
    return rows


def rows_to_json(rows: list[ResultRow]) -> str:
    return json.dumps([dataclasses.asdict(r) for r in rows], indent=1)


def strip_timing(csv_text: str) -> str:
    """Drop the wall-time column (the only nondeterministic one)."""
    out_lines = []
    idx = CSV_COLUMNS.index("wall_time_seconds")
    for line in csv_text.strip().splitlines():
        parts = line.split(",")
        del parts[idx]
        out_lines.append(",".join(parts))
    return "\n".join(out_lines) + "\n"


# ---------------------------------------------------------------------------
# Experiment spec (de)serialization
# ---------------------------------------------------------------------------


def _dataclass_from_dict(cls, data: dict, label: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {label} fields: {sorted(unknown)}")
    return cls(**data)


def ao_config_from_dict(data: dict) -> AoConfig:
    data = dict(data)
    sub = {}
    for name, cls in (("precoder", PrecoderConfig), ("ris", RisConfig), ("rotation", RotationConfig)):
        if name in data:
            sub[name] = _dataclass_from_dict(cls, data.pop(name), name)
    base = _dataclass_from_dict(AoConfig, data, "solver")
    for name, value in sub.items():
        setattr(base, name, value)
    return base


def ao_config_to_dict(config: AoConfig) -> dict:
    out = dataclasses.asdict(config)
    return out


def spec_from_dict(data: dict) -> ExperimentSpec:
    data = dict(data)
    scenario = _dataclass_from_dict(ScenarioConfig, data.pop("scenario", {}), "scenario")
    solver = ao_config_from_dict(data.pop("solver", {}))
    names = {f.name for f in dataclasses.fields(ExperimentSpec)} - {"scenario", "solver"}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
    return ExperimentSpec(scenario=scenario, solver=solver, **data)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "sweep_variable": spec.sweep_variable,
        "sweep_values": list(spec.sweep_values),
        "architectures": list(spec.architectures),
        "num_realizations": spec.num_realizations,
        "seed_base": spec.seed_base,
        "output": spec.output,
        "scenario": dataclasses.asdict(spec.scenario),
        "solver": ao_config_to_dict(spec.solver),
    }


def spec_from_json(text: str) -> ExperimentSpec:
    return spec_from_dict(json.loads(text))


def spec_to_json(spec: ExperimentSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=1)


# ---------------------------------------------------------------------------
# Predefined sweep families
# ---------------------------------------------------------------------------


def default_experiments() -> dict[str, ExperimentSpec]:
    """The six predefined sweep studies (qualitative reproduction scale).

    fig2/fig3: rate vs transmit power (isotropic / directional elements);
    fig4/fig5: rate vs BS antenna count for a 1 x My array, three users;
    fig6: rate vs user count for a 2 x 4 array at 22 dBm;
    fig7: rate vs BS rotation range (directional); the companion 45-degree
    RIS-range family is produced by editing ``ris_rotation_range_deg``.
    """
    power_values = [10.0, 15.0, 20.0, 25.0, 30.0]
    iso = dict(bs_directivity_exponent=0.0, ris_directivity_exponent=0.0)
    direc = dict(bs_directivity_exponent=2.0, ris_directivity_exponent=2.0)
    specs = {
        "fig2_power_isotropic": ExperimentSpec(
            sweep_variable="power_dbm",
            sweep_values=power_values,
            scenario=ScenarioConfig(**iso),
            num_realizations=30,
            output="fig2_power_isotropic.csv",
        ),
        "fig3_power_directional": ExperimentSpec(
            sweep_variable="power_dbm",
            sweep_values=power_values,
            scenario=ScenarioConfig(**direc),
            num_realizations=30,
            output="fig3_power_directional.csv",
        ),
        "fig4_antennas_isotropic": ExperimentSpec(
            sweep_variable="antennas_my",
            sweep_values=[2, 4, 6, 8],
            scenario=ScenarioConfig(bs_rows=1, num_users=3, **iso),
            num_realizations=30,
            output="fig4_antennas_isotropic.csv",
        ),
        "fig5_antennas_directional": ExperimentSpec(
            sweep_variable="antennas_my",
            sweep_values=[2, 4, 6, 8],
            scenario=ScenarioConfig(bs_rows=1, num_users=3, **direc),
            num_realizations=30,
            output="fig5_antennas_directional.csv",
        ),
        "fig6_users_directional": ExperimentSpec(
            sweep_variable="users_k",
            sweep_values=[1, 2, 3, 4],
            scenario=ScenarioConfig(bs_rows=2, bs_cols=4, power_budget_dbm=22.0, **direc),
            num_realizations=30,
            output="fig6_users_directional.csv",
        ),
        "fig7_rotation_range": ExperimentSpec(
            sweep_variable="rotation_range_deg",
            sweep_values=[15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            architectures=["rot-bs+rot-ris", "rot-bs+fix-ris", "rot-bs+no-ris"],
            scenario=ScenarioConfig(**direc),
            num_realizations=30,
            output="fig7_rotation_range.csv",
        ),
    }
    return specs
