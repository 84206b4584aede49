"""Run configuration: flat ``key = value`` files overridable from the command line."""

import dataclasses
from dataclasses import dataclass

from .exceptions import UsageError


@dataclass
class RunConfig:
    height: int = 128
    augment_height: int = 0  # 0 keeps the source height
    n_g: int = 8
    n_l: int = 3
    eps: float = 1e-2
    q: float = 0.1
    correction: str = "paper"
    mask_mode: str = "literal"
    seed: int = 0
    interpolation: str = "bilinear"
    pole_margin: float = 0.05
    bands: int = 1
    method: str = "least-squares"
    step: str = "auto"
    iters: int = 500
    tol: float = 1e-12
    padding: str = "wrap"
    correspondence: str = "identity"

    @property
    def width(self):
        return 2 * self.height

    @property
    def step_value(self):
        return None if self.step == "auto" else float(self.step)

    def validate(self):
        if self.height < 1:
            raise UsageError("height must be positive")
        if self.augment_height < 0:
            raise UsageError("augment_height must be >= 0")
        # divisibility by n_g is checked against the feature height at fit time
        if self.n_g < 1:
            raise UsageError("n_g must be positive")
        if self.n_l < 0:
            raise UsageError("n_l must be >= 0")
        if self.eps < 0:
            raise UsageError("eps must be >= 0")
        if not 0 < self.q <= 1:
            raise UsageError("q must be in (0, 1]")
        if not 0 <= self.pole_margin < 0.5:
            raise UsageError("pole_margin must be in [0, 0.5)")
        if self.bands < 1:
            raise UsageError("bands must be >= 1")
        if self.iters < 0 or self.tol < 0:
            raise UsageError("iters and tol must be >= 0")
        choices = {
            "correction": ("paper", "geometric"),
            "mask_mode": ("literal", "fb-consistency"),
            "interpolation": ("bilinear", "nearest"),
            "method": ("least-squares", "gradient-descent"),
            "padding": ("zero", "wrap"),
            "correspondence": ("identity", "omega"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise UsageError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.step != "auto":
            try:
                if float(self.step) <= 0:
                    raise ValueError
            except ValueError:
                raise UsageError(f"step must be 'auto' or a positive number, got {self.step!r}") from None
        return self

    def update(self, values):
        types = {f.name: f.type for f in dataclasses.fields(self)}
        for key, raw in values.items():
            if key not in types:
                raise UsageError(f"unknown config key {key!r}")
            try:
                setattr(self, key, types[key](raw))
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
        return self

    def dump(self):
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def load_config(path=None, overrides=None):
    cfg = RunConfig()
    if path is not None:
        with open(path) as fh:
            cfg.update(parse_config_text(fh.read()))
    if overrides:
        cfg.update(overrides)
    return cfg.validate()
