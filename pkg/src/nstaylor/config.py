"""Run configuration: flat ``section.key = value`` text.

Example::

    # Taylor-Green with the exact backend
    problem.initial = taylor_green
    problem.nu = 0.1
    problem.order = 10
    problem.backend = trigpoly
    output.dir = out/tg

Blank lines and ``#`` comments are ignored. ``problem.mode`` and
``forcing.mode`` may repeat; every other key may appear at most once. Unknown
keys are rejected before anything is computed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

OUTPUT_DIR_ENV = "NSTAYLOR_OUTPUT_DIR"

INITIAL_PRESETS = ("taylor_green", "abc", "zero", "modes")
BACKENDS = ("trigpoly", "grid")
DEALIAS_RULES = ("two_thirds", "exact_padding")
_COMPONENTS = {"u": 0, "v": 1, "w": 2, "x": 0, "y": 1, "z": 2, "0": 0, "1": 1, "2": 2}
_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

# key -> (parser name, default); None marks a required key
SCHEMA = {
    "problem.initial": ("initial", None),
    "problem.nu": ("nonneg_float", None),
    "problem.order": ("pos_int", None),
    "problem.backend": ("backend", "trigpoly"),
    "problem.abc": ("triple", (1.0, 1.0, 1.0)),
    "grid.n": ("grid_n", 32),
    "grid.dealias": ("dealias", "exact_padding"),
    "output.dir": ("str", "nstaylor-out"),
    "output.dumps": ("bool", True),
    "output.timing": ("bool", False),
    "tolerances.tol_div": ("pos_float", None),
    "tolerances.tol_div0": ("pos_float", None),
    "tolerances.eps_prune": ("nonneg_float", None),
    "tolerances.tol_mean": ("pos_float", None),
}
REPEATABLE = ("problem.mode", "forcing.mode")


@dataclass(frozen=True)
class ModeTerm:
    """One complex Fourier term ``c e^{i k.x}`` of a velocity component."""

    k: tuple[int, int, int]
    component: int
    value: complex


@dataclass(frozen=True)
class ForcingTerm:
    order: int
    mode: ModeTerm


@dataclass
class RunConfig:
    initial: str
    nu: float
    order: int
    backend: str = "trigpoly"
    abc: tuple[float, float, float] = (1.0, 1.0, 1.0)
    modes: list[ModeTerm] = field(default_factory=list)
    forcing: list[ForcingTerm] = field(default_factory=list)
    grid_n: int = 32
    dealias: str = "exact_padding"
    output_dir: str = "nstaylor-out"
    dumps: bool = True
    timing: bool = False
    tol_div: float | None = None
    tol_div0: float | None = None
    eps_prune: float | None = None
    tol_mean: float | None = None

    def resolved_output_dir(self, env=None) -> Path:
        env = os.environ if env is None else env
        return Path(env.get(OUTPUT_DIR_ENV) or self.output_dir)


def _parse_value(kind: str, raw: str, where: str):
    try:
        if kind == "str":
            if not raw:
                raise ValueError("empty value")
            return raw
        if kind == "bool":
            return _BOOL[raw.lower()]
        if kind in ("nonneg_float", "pos_float"):
            x = float(raw)
            if not x == x or x in (float("inf"), float("-inf")):
                raise ValueError("not finite")
            if x < 0 or (kind == "pos_float" and x == 0):
                raise ValueError("out of range")
            return x
        if kind == "pos_int":
            n = int(raw)
            if n < 1:
                raise ValueError("must be >= 1")
            return n
        if kind == "grid_n":
            n = int(raw)
            if n < 4 or n % 2:
                raise ValueError("must be an even integer >= 4")
            return n
        if kind == "triple":
            parts = [float(p) for p in raw.split()]
            if len(parts) != 3:
                raise ValueError("expected three numbers")
            return tuple(parts)
        choices = {"initial": INITIAL_PRESETS, "backend": BACKENDS, "dealias": DEALIAS_RULES}[kind]
        if raw not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}")
        return raw
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid value {raw!r} ({exc})") from None


def _parse_mode(raw: str, where: str) -> ModeTerm:
    parts = raw.split()
    if len(parts) != 6:
        raise ConfigError(f"{where}: mode needs 'kx ky kz component re im', got {raw!r}")
    try:
        k = tuple(int(p) for p in parts[:3])
        re, im = float(parts[4]), float(parts[5])
    except ValueError:
        raise ConfigError(f"{where}: malformed mode {raw!r}") from None
    comp = _COMPONENTS.get(parts[3].lower())
    if comp is None:
        raise ConfigError(f"{where}: component must be u, v or w, got {parts[3]!r}")
    if k == (0, 0, 0) and im != 0:
        raise ConfigError(f"{where}: the zero mode must be real")
    return ModeTerm(k, comp, complex(re, im))


def parse_config(text: str) -> RunConfig:
    """Validate and parse config text; raises :class:`ConfigError`."""
    single: dict[str, tuple[str, int]] = {}
    repeated: dict[str, list[tuple[str, int]]] = {k: [] for k in REPEATABLE}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key in repeated:
            repeated[key].append((value, lineno))
        elif key in SCHEMA:
            if key in single:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            single[key] = (value, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    values = {}
    for key, (kind, default) in SCHEMA.items():
        if key in single:
            raw, lineno = single[key]
            values[key] = _parse_value(kind, raw, f"line {lineno} ({key})")
        elif default is None and key.startswith("problem."):
            raise ConfigError(f"missing required key {key!r}")
        else:
            values[key] = default

    modes = [_parse_mode(v, f"line {n}") for v, n in repeated["problem.mode"]]
    if values["problem.initial"] == "modes" and not modes:
        raise ConfigError("problem.initial = modes needs at least one problem.mode line")
    if values["problem.initial"] != "modes" and modes:
        raise ConfigError("problem.mode lines require problem.initial = modes")
    _check_conjugates(modes, "problem.mode")

    forcing = []
    for raw, lineno in repeated["forcing.mode"]:
        head, _, rest = raw.partition(" ")
        try:
            order = int(head)
        except ValueError:
            raise ConfigError(f"line {lineno}: forcing needs 'order kx ky kz component re im'") from None
        if order < 0:
            raise ConfigError(f"line {lineno}: forcing order must be >= 0")
        forcing.append(ForcingTerm(order, _parse_mode(rest.strip(), f"line {lineno}")))
    for order in sorted({f.order for f in forcing}):
        _check_conjugates([f.mode for f in forcing if f.order == order], "forcing.mode")

    return RunConfig(
        initial=values["problem.initial"],
        nu=values["problem.nu"],
        order=values["problem.order"],
        backend=values["problem.backend"],
        abc=values["problem.abc"],
        modes=modes,
        forcing=forcing,
        grid_n=values["grid.n"],
        dealias=values["grid.dealias"],
        output_dir=values["output.dir"],
        dumps=values["output.dumps"],
        timing=values["output.timing"],
        tol_div=values["tolerances.tol_div"],
        tol_div0=values["tolerances.tol_div0"],
        eps_prune=values["tolerances.eps_prune"],
        tol_mean=values["tolerances.tol_mean"],
    )


def _check_conjugates(modes, key):
    # each line implies its conjugate partner, so listing both would double it
    seen = set()
    for m in modes:
        if (m.component, m.k) in seen:
            raise ConfigError(f"{key}: wavevector {m.k} listed twice for one component")
        neg = tuple(-x for x in m.k)
        if m.k != (0, 0, 0) and (m.component, neg) in seen:
            raise ConfigError(
                f"{key}: {m.k} and its conjugate {neg} both listed; conjugates are implied"
            )
        seen.add((m.component, m.k))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)
