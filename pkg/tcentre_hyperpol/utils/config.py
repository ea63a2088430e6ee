"""Configuration management for tcentre-hyperpol."""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from tcentre_hyperpol.analyzers.fitkit import FitOptions
from tcentre_hyperpol.core.exceptions import ValidationError
from tcentre_hyperpol.core.lineshape import DEFAULT_G_E
from tcentre_hyperpol.core.pipeline import DEBYE_WALLER_XI, GAMMA1_MHZ
from tcentre_hyperpol.core.spinham import (
    MU_B_MHZ_PER_GAUSS,
    Doublet,
    HoleModel,
    StrainConfig,
)

CONFIG_ENV_VAR = "HYPERPOL_CONFIG"
SECTIONS = frozenset({"constants", "strain", "holes", "fit"})


@dataclass
class PhysicalConstants:
    """Physical constants."""

    g_e: float = DEFAULT_G_E
    mu_b_mhz_per_gauss: float = MU_B_MHZ_PER_GAUSS
    xi: float = DEBYE_WALLER_XI
    gamma1_mhz: float = GAMMA1_MHZ

    def validate(self) -> None:
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValidationError(f"constant {name} must be positive, got {value}")


@dataclass
class HoleSettings:
    """Hole g-factor model defaults."""

    g1: float = 1.505
    g2: float = -0.138
    doublet: str = Doublet.LOWER.value


@dataclass
class RunConfig:
    """Main configuration for tcentre-hyperpol."""

    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    strain: StrainConfig = field(default_factory=StrainConfig)
    holes: HoleSettings = field(default_factory=HoleSettings)
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        self.constants.validate()
        Doublet(self.holes.doublet)

    @classmethod
    def from_env(cls) -> "RunConfig":
        """Load the file named by HYPERPOL_CONFIG (also read from .env), or defaults."""
        load_dotenv()
        path = os.getenv(CONFIG_ENV_VAR)
        if path:
            return cls.from_file(path)
        return cls()

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "RunConfig":
        data = data or {}
        unknown = sorted(set(data) - SECTIONS)
        if unknown:
            raise ValidationError(f"unknown configuration section(s): {', '.join(map(str, unknown))}")
        try:
            fit = dict(data.get("fit", {}))
            if "gamma_bounds_mhz" in fit:
                fit["gamma_bounds_mhz"] = tuple(fit["gamma_bounds_mhz"])
            return cls(
                constants=PhysicalConstants(**data.get("constants", {})),
                strain=StrainConfig(**data.get("strain", {})),
                holes=HoleSettings(**data.get("holes", {})),
                fit=FitOptions(**fit),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid configuration: {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """Load configuration from a JSON (or YAML) document."""
        config_path = Path(path)
        if not config_path.exists():
            raise ValidationError(f"config file not found: {path}")

        text = config_path.read_text(encoding="utf-8")
        try:
            data = json.loads(text) if text.strip() else None
        except json.JSONDecodeError:
            # YAML 1.1 reads exponent-only floats such as 1e-05 as strings
            try:
                data = yaml.safe_load(text)
            except yaml.YAMLError as exc:
                raise ValidationError(f"config file {path} is not valid JSON/YAML: {exc}") from exc

        if data is not None and not isinstance(data, dict):
            raise ValidationError(f"config file {path} must hold a mapping")
        return cls.from_dict(data)

    def hole_model(self) -> HoleModel:
        return HoleModel(
            strain=self.strain,
            g1=self.holes.g1,
            g2=self.holes.g2,
            doublet=self.holes.doublet,
            mu_b_mhz_per_gauss=self.constants.mu_b_mhz_per_gauss,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary."""
        fit = asdict(self.fit)
        fit["gamma_bounds_mhz"] = list(self.fit.gamma_bounds_mhz)
        return {
            "constants": asdict(self.constants),
            "strain": asdict(self.strain),
            "holes": asdict(self.holes),
            "fit": fit,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
