"""Experiment configuration and run manifests.

Configs are plain JSON with nested sections.  Loading is strict: unknown keys
at any level are errors, and each scenario validates the numeric ranges it
depends on before anything runs.  A RunManifest records what a run produced
(config snapshot and hash, version, timestamps, per-file checksums, seed
ledger) so outputs can be audited and replays compared.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__ as _version

SCENARIO_NAMES = (
    "esl-gap",
    "rank-decay",
    "threshold-sweep",
    "composition-check",
    "proxy-probe",
)

UNIT_CONVENTION = (
    "entropy in nats; per-step sigma dimensionless; runs compared against the "
    "transport floor W2^2/2 over a unit time horizon (n_steps * step_size <= 1)"
)


class ConfigError(ValueError):
    """Configuration rejected before any computation started."""


def _build(cls, payload: dict, context: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{context}: expected an object, got {type(payload).__name__}")
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    return cls(**payload)


@dataclass(frozen=True)
class RuleConfig:
    kind: str = "gradient_descent"
    step_size: float = 0.1
    noise_scale: float = 0.0
    weight_decay: float = 0.0


@dataclass(frozen=True)
class PairConfig:
    spectrum_b_on_a: tuple = (1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    a_spectrum: tuple | None = None
    rotation_seed: int = 7
    offset_scale: float = 0.0
    tilt: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spectrum_b_on_a", tuple(float(x) for x in self.spectrum_b_on_a))
        if self.a_spectrum is not None:
            object.__setattr__(self, "a_spectrum", tuple(float(x) for x in self.a_spectrum))


@dataclass(frozen=True)
class SweepConfig:
    m_b_targets: tuple = (0, 1, 2, 3, 4, 5, 6, 7, 8)
    usable_targets: tuple = (0, 1, 2, 3, 4, 5, 6, 7, 8)
    collapse_strength: float = 0.9
    settle_steps: int = 200
    phase2_step_limit: int = 2000
    offset_scale: float = 1.0
    tilt: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "m_b_targets", tuple(int(x) for x in self.m_b_targets))
        object.__setattr__(self, "usable_targets", tuple(int(x) for x in self.usable_targets))


@dataclass(frozen=True)
class ThermoConfig:
    temperature: float = 0.5
    start_mean: tuple = (2.0, -1.5)
    start_cov_scale: float = 0.02
    hessian_spectrum: tuple = (2.0, 0.5)
    n_geodesic_steps: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "start_mean", tuple(float(x) for x in self.start_mean))
        object.__setattr__(self, "hessian_spectrum", tuple(float(x) for x in self.hessian_spectrum))


@dataclass(frozen=True)
class ProbeConfig:
    checkpoint_every: int = 20
    n_probe_samples: int = 256
    probe_noise: float = 0.0


@dataclass(frozen=True)
class ThresholdConfig:
    tau_sigma: float = 1e-3
    epsilon_a: float = 1e-6
    epsilon_b: float = 1e-4
    epsilon_low: float = 1e-6
    epsilon_high: float = 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "composition-check"
    dim: int = 16
    k_a: int = 8
    n_steps: int = 2000
    n_realizations: int = 64
    n_trials: int = 1000
    master_seed: int = 2024
    output_dir: str = "runs"
    rule: RuleConfig = field(default_factory=RuleConfig)
    pair: PairConfig = field(default_factory=PairConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    thermo: ThermoConfig = field(default_factory=ThermoConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        # tuples are a construction detail; the file format uses lists
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        if not isinstance(payload, dict):
            raise ConfigError("config: expected a JSON object at top level")
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - allowed
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        kwargs = dict(payload)
        for name, sub in [
            ("rule", RuleConfig),
            ("pair", PairConfig),
            ("sweep", SweepConfig),
            ("thermo", ThermoConfig),
            ("probe", ProbeConfig),
            ("thresholds", ThresholdConfig),
        ]:
            if name in kwargs:
                kwargs[name] = _build(sub, kwargs[name], name)
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.scenario not in SCENARIO_NAMES:
            raise ConfigError(
                f"scenario: {self.scenario!r} not one of {list(SCENARIO_NAMES)}"
            )
        if self.dim < 2:
            raise ConfigError("dim: must be >= 2")
        if not 0 < self.k_a < self.dim:
            raise ConfigError("k_a: must satisfy 0 < k_a < dim")
        if self.n_steps < 1 or self.n_realizations < 1 or self.n_trials < 1:
            raise ConfigError("n_steps, n_realizations, n_trials: must be >= 1")
        if self.master_seed < 0:
            raise ConfigError("master_seed: must be >= 0")
        r = self.rule
        if r.kind not in ("gradient_descent", "noisy_gradient", "langevin"):
            raise ConfigError(f"rule.kind: unknown kind {r.kind!r}")
        if r.step_size <= 0:
            raise ConfigError("rule.step_size: must be > 0")
        if r.noise_scale < 0 or r.weight_decay < 0:
            raise ConfigError("rule: noise_scale and weight_decay must be >= 0")
        if r.weight_decay > 0 and r.kind != "gradient_descent":
            raise ConfigError("rule.weight_decay: only valid with gradient_descent")
        if len(self.pair.spectrum_b_on_a) != self.k_a:
            raise ConfigError(
                f"pair.spectrum_b_on_a: length {len(self.pair.spectrum_b_on_a)} != k_a {self.k_a}"
            )
        if self.pair.a_spectrum is not None and len(self.pair.a_spectrum) != self.dim - self.k_a:
            raise ConfigError("pair.a_spectrum: length must be dim - k_a")
        lam_max = self._stiffest_curvature()
        if r.step_size * (lam_max + r.weight_decay) >= 2.0:
            raise ConfigError(
                f"rule.step_size: eta * lambda_max = "
                f"{r.step_size * (lam_max + r.weight_decay):.4f} >= 2 (unstable)"
            )
        getattr(self, f"_validate_{self.scenario.replace('-', '_')}")()

    def _stiffest_curvature(self) -> float:
        spectra = []
        if self.pair.a_spectrum is not None:
            spectra.extend(self.pair.a_spectrum)
        else:
            spectra.append(2.0)
        spectra.extend(abs(x) for x in self.pair.spectrum_b_on_a)
        if self.scenario == "esl-gap":
            spectra.extend(self.thermo.hessian_spectrum)
        return max(spectra)

    def _validate_esl_gap(self) -> None:
        t = self.thermo
        if self.rule.kind != "langevin":
            raise ConfigError("esl-gap: rule.kind must be langevin")
        if self.rule.noise_scale <= 0 or t.temperature <= 0:
            raise ConfigError("esl-gap: needs a positive temperature")
        if abs(self.rule.noise_scale - t.temperature) > 1e-12:
            raise ConfigError("esl-gap: rule.noise_scale must equal thermo.temperature")
        if len(t.start_mean) != len(t.hessian_spectrum):
            raise ConfigError("esl-gap: start_mean and hessian_spectrum lengths differ")
        if min(t.hessian_spectrum) <= 0:
            raise ConfigError("esl-gap: hessian_spectrum must be positive definite")
        if t.start_cov_scale <= 0:
            raise ConfigError("esl-gap: start_cov_scale must be > 0")
        if t.n_geodesic_steps < 2:
            raise ConfigError("esl-gap: n_geodesic_steps must be >= 2")
        horizon = self.n_steps * self.rule.step_size
        if horizon > 1.0 + 1e-12:
            raise ConfigError(
                f"esl-gap: n_steps * step_size = {horizon:.4f} exceeds the unit-time "
                "horizon the transport floor is stated for"
            )

    def _validate_rank_decay(self) -> None:
        if self.rule.kind != "gradient_descent":
            raise ConfigError("rank-decay: rule.kind must be gradient_descent")

    def _validate_threshold_sweep(self) -> None:
        s = self.sweep
        if not s.m_b_targets or not s.usable_targets:
            raise ConfigError("threshold-sweep: sweep grids must be nonempty")
        if any(not 0 <= m <= self.k_a for m in s.m_b_targets):
            raise ConfigError("threshold-sweep: m_b_targets must lie in [0, k_a]")
        if any(not 0 <= u <= self.k_a for u in s.usable_targets):
            raise ConfigError("threshold-sweep: usable_targets must lie in [0, k_a]")
        if max(s.m_b_targets) > self.dim - self.k_a and s.tilt != 0.0:
            raise ConfigError(
                "threshold-sweep: tilted demands need m_b_targets <= dim - k_a"
            )
        if not 0 < s.collapse_strength * self.rule.step_size < 1:
            raise ConfigError(
                "threshold-sweep: eta * collapse_strength must be in (0, 1) for "
                "monotone contraction"
            )
        if s.settle_steps < 1 or s.phase2_step_limit < 1:
            raise ConfigError("threshold-sweep: step counts must be >= 1")

    def _validate_composition_check(self) -> None:
        pass

    def _validate_proxy_probe(self) -> None:
        if self.rule.kind != "gradient_descent" or self.rule.weight_decay <= 0:
            raise ConfigError("proxy-probe: needs gradient_descent with weight_decay > 0")
        if self.probe.checkpoint_every < 1 or self.probe.checkpoint_every > self.n_steps:
            raise ConfigError("probe.checkpoint_every: must be in [1, n_steps]")
        if self.probe.n_probe_samples < 2:
            raise ConfigError("probe.n_probe_samples: must be >= 2")
        if self.probe.probe_noise < 0:
            raise ConfigError("probe.probe_noise: must be >= 0")


def default_config(scenario: str) -> ExperimentConfig:
    """Per-scenario defaults matching the documented desk-scale experiments."""
    if scenario == "esl-gap":
        cfg = ExperimentConfig(
            scenario=scenario,
            dim=2,
            k_a=1,
            n_steps=20,
            n_realizations=1,
            rule=RuleConfig(kind="langevin", step_size=0.05, noise_scale=0.5),
            pair=PairConfig(spectrum_b_on_a=(1.0,)),
        )
    elif scenario == "rank-decay":
        cfg = ExperimentConfig(
            scenario=scenario,
            n_steps=1400,
            rule=RuleConfig(kind="gradient_descent", step_size=0.1, weight_decay=0.1),
        )
    elif scenario == "threshold-sweep":
        cfg = ExperimentConfig(
            scenario=scenario,
            pair=PairConfig(
                spectrum_b_on_a=(1.0,) * 8, offset_scale=1.0, tilt=1.0
            ),
        )
    elif scenario == "composition-check":
        cfg = ExperimentConfig(scenario=scenario)
    elif scenario == "proxy-probe":
        # weight decay close to the task curvatures keeps the whole run inside
        # float's resolvable dynamic range, so the probe's shape is not an
        # artifact of roundoff leaking the preserved directions
        cfg = ExperimentConfig(
            scenario=scenario,
            n_steps=270,
            rule=RuleConfig(kind="gradient_descent", step_size=0.1, weight_decay=0.5),
            probe=ProbeConfig(checkpoint_every=4),
        )
    else:
        raise ConfigError(f"scenario: {scenario!r} not one of {list(SCENARIO_NAMES)}")
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(payload)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Audit envelope for one run.  Timestamps make the manifest itself
    vary between runs; determinism claims cover the data files, whose
    checksums recorded here must match across replays."""

    config: dict
    config_sha256: str
    artifact_version: str
    started_at: str
    finished_at: str = ""
    files: dict = field(default_factory=dict)
    seed_ledger: dict = field(default_factory=dict)
    unit_convention: str = UNIT_CONVENTION

    @classmethod
    def start(cls, cfg: ExperimentConfig) -> "RunManifest":
        return cls(
            config=cfg.to_dict(),
            config_sha256=config_hash(cfg),
            artifact_version=_version,
            started_at=datetime.now(timezone.utc).isoformat(),
            seed_ledger={
                "master_seed": cfg.master_seed,
                "streams": {
                    "step_noise": 0,
                    "init": 1,
                    "task": 2,
                    "probe": 3,
                    "oracle": 4,
                },
            },
        )

    def record(self, path) -> None:
        self.files[Path(path).name] = file_sha256(path)

    def finish(self, path) -> None:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        Path(path).write_text(
            json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def format_float(x) -> str:
    """Shortest round-trip decimal form, used for every CSV float so that
    replays are byte-identical."""
    if isinstance(x, str):
        if "," in x or '"' in x or "\n" in x:
            raise ValueError(f"write_csv: field {x!r} needs quoting, which the byte-stable format avoids")
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
