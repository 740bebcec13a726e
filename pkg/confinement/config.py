# confinement/config.py

"""
Run configuration. Defaults come from settings.CHEMOTAXIS; a config file or
the command line overrides them. The text form is

    [grid]
    chi = 0.5
    nx = 400

with `#` comments, one section per module. Floats are written with repr so
that parsing the text back gives the same RunConfig.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from django.conf import settings

from .exceptions import ConfigError

SECTIONS = {
    'grid': ('chi', 'n_half', 'rule', 'nx', 'L', 'box_L'),
    'dispersion': ('root_tol',),
    'milne': ('epsilon', 'epsilon0', 'continuation_steps', 'fixed_point_tol', 'eigen_tol',
              'max_iter', 'eigen_max_iter'),
    'kinetic': ('t_end', 'cfl', 'scheme', 'ic'),
    'hypo': ('hypo_nx', 'hypo_n_half', 'hypo_L', 'entropy_epsilon'),
    'macro': ('variant',),
    'run': ('output_dir', 'seed', 'n_jobs'),
}

MACRO_CHOICES = ('modified-entropy-limit', 'weak-bias', 'cattaneo', 'all')


@dataclass(frozen=True)
class RunConfig:
    chi: float = 0.5
    n_half: int = 16
    rule: str = 'gauss'
    nx: int = 400
    L: float = 0.0
    box_L: float = 6.0
    root_tol: float = 1e-13
    epsilon: float = 0.0
    epsilon0: float = 0.5
    continuation_steps: int = 6
    fixed_point_tol: float = 1e-11
    eigen_tol: float = 1e-10
    max_iter: int = 20000
    eigen_max_iter: int = 200
    t_end: float = 200.0
    cfl: float = 0.9
    scheme: str = 'strang'
    ic: str = 'uniform'
    hypo_nx: int = 60
    hypo_n_half: int = 6
    hypo_L: float = 4.0
    entropy_epsilon: float = 0.1
    variant: str = 'weak-bias'
    output_dir: str = 'runs'
    seed: int = 20240101
    n_jobs: int = 1

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_settings(cls, **overrides):
        values = dict(getattr(settings, 'CHEMOTAXIS', {}))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**_coerce(values))

    @classmethod
    def from_text(cls, text, base=None):
        base = cls.from_settings() if base is None else base
        values = dataclasses.asdict(base)
        section = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if line.startswith('[') and line.endswith(']'):
                section = line[1:-1].strip()
                if section not in SECTIONS:
                    raise ConfigError(f"line {lineno}: unknown section [{section}]")
                continue
            if '=' not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split('=', 1))
            if section is None:
                raise ConfigError(f"line {lineno}: {key!r} appears before any [section]")
            if key not in SECTIONS[section]:
                raise ConfigError(f"line {lineno}: {key!r} does not belong in [{section}]")
            values[key] = value
        return cls(**_coerce(values))

    def to_text(self):
        lines = []
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                value = getattr(self, key)
                lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
            lines.append('')
        return '\n'.join(lines)

    def config_hash(self):
        return hashlib.sha256(self.to_text().encode('utf-8')).hexdigest()[:12]

    def replace(self, **changes):
        return dataclasses.replace(self, **_coerce({k: v for k, v in changes.items() if v is not None}))

    def validate(self):
        from .grids import RULES
        from .kinetic import INITIAL_CONDITIONS, SCHEMES

        checks = [
            (0.0 < self.chi < 1.0, f"chi must lie in (0, 1), got {self.chi}"),
            (self.n_half >= 1 and self.hypo_n_half >= 1, "n_half must be at least 1"),
            (self.rule in RULES, f"rule must be one of {RULES}, got {self.rule!r}"),
            (self.nx >= 4 and self.hypo_nx >= 4, "meshes need at least 4 cells"),
            (self.L >= 0.0, f"L must be non-negative (0 derives it from beta), got {self.L}"),
            (self.box_L > 0.0 and self.hypo_L > 0.0, "box half-widths must be positive"),
            (self.epsilon >= 0.0 and self.epsilon0 > 0.0, "absorption parameters must be non-negative"),
            (self.continuation_steps >= 0, "continuation_steps must be non-negative"),
            (min(self.root_tol, self.fixed_point_tol, self.eigen_tol) > 0.0, "tolerances must be positive"),
            (self.max_iter >= 1 and self.eigen_max_iter >= 1, "iteration limits must be positive"),
            (self.t_end > 0.0, f"t_end must be positive, got {self.t_end}"),
            (0.0 < self.cfl <= 1.0, f"cfl must lie in (0, 1], got {self.cfl}"),
            (self.scheme in SCHEMES, f"scheme must be one of {SCHEMES}, got {self.scheme!r}"),
            (self.ic in INITIAL_CONDITIONS, f"ic must be one of {INITIAL_CONDITIONS}, got {self.ic!r}"),
            (0.0 < self.entropy_epsilon < 1.0, "entropy_epsilon must lie in (0, 1)"),
            (self.variant in MACRO_CHOICES, f"variant must be one of {MACRO_CHOICES}, got {self.variant!r}"),
            (self.n_jobs != 0, "n_jobs must be non-zero"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)


def _coerce(values):
    """ Cast text or loose values to the field types; unknown keys are an error. """
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    out = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"unknown configuration key {key!r}")
        kind = type(fields[key].default)
        try:
            if kind is int and isinstance(value, str):
                out[key] = int(value)
            elif kind is int and isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            else:
                out[key] = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} = {value!r} is not a valid {kind.__name__}") from None
    return out


def load_config(path=None, **overrides):
    """ Settings defaults, then the file at `path`, then explicit overrides. """
    base = RunConfig.from_settings()
    if path:
        try:
            with open(path, encoding='utf-8') as handle:
                base = RunConfig.from_text(handle.read(), base=base)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return base.replace(**overrides)
