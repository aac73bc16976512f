"""Flat key-value run configuration with dotted sections.

The format is one ``key = value`` pair per line, ``#`` comments, and dotted
section prefixes (``problem.*``, ``solver.*``, ``output.*``); values are
booleans, integers, floats, bare strings, or comma-separated numeric lists.
Nothing nests beyond that, so any language can parse it back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .problems import PROBLEM_SCHEMAS


class ConfigError(ValueError):
    """Unparseable or invalid configuration; carries a line/field diagnostic."""


_SOLVERS_STATIONARY = ("minimize", "picard")
_SOLVERS_PATH = ("path_minimize", "marching", "lambda_flow")
_PATH_PROBLEMS = ("heat_1d", "nse2d_evolution")


def _parse_scalar(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text, source="<config>"):
    """Parse the flat format into a {dotted_key: value} dict."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if "," in value:
            values[key] = [_parse_scalar(v) for v in value.split(",") if
                           v.strip()]
        else:
            values[key] = _parse_scalar(value)
    return values


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


@dataclass
class RunConfig:
    """Validated run description ready for the runner."""

    problem: str
    problem_params: dict
    solver: str
    solver_options: dict
    out_dir: str
    figures: bool
    seed: int
    cert_threshold: float
    raw: dict = field(default_factory=dict)

    @property
    def is_path_problem(self):
        return self.problem in _PATH_PROBLEMS


def validate_config(values):
    """Check a parsed mapping against the problem schemas and solver options."""
    name = values.get("problem.name")
    if not name:
        raise ConfigError("missing required key 'problem.name'")
    if name not in PROBLEM_SCHEMAS:
        raise ConfigError(f"field 'problem.name': unknown problem {name!r}; "
                          f"choose from {sorted(PROBLEM_SCHEMAS)}")
    schema = PROBLEM_SCHEMAS[name]
    params = {}
    for key, value in values.items():
        if not key.startswith("problem.") or key == "problem.name":
            continue
        field_name = key[len("problem."):]
        if field_name not in schema:
            raise ConfigError(
                f"field {key!r}: problem {name!r} takes no parameter "
                f"{field_name!r} (known: {sorted(schema)})")
        want = schema[field_name]
        try:
            if want is bool and isinstance(value, bool):
                params[field_name] = value
            elif want is bool:
                raise TypeError
            else:
                params[field_name] = want(value)
        except (TypeError, ValueError):
            raise ConfigError(f"field {key!r}: expected {want.__name__}, "
                              f"got {value!r}") from None

    solver = values.get("solver.method")
    if solver is None:
        solver = "marching" if name in _PATH_PROBLEMS else "minimize"
    allowed = _SOLVERS_PATH if name in _PATH_PROBLEMS else _SOLVERS_STATIONARY
    if solver not in allowed:
        raise ConfigError(f"field 'solver.method': {solver!r} does not apply "
                          f"to {name!r} (allowed: {allowed})")

    options = {}
    for key, value in values.items():
        if key.startswith("solver.") and key != "solver.method":
            options[key[len("solver."):]] = value
    if solver == "lambda_flow":
        schedule = options.get("lambda_schedule")
        if schedule is None:
            raise ConfigError("lambda_flow requires 'solver.lambda_schedule'")
        if not isinstance(schedule, list):
            schedule = [schedule]
        options["lambda_schedule"] = [float(v) for v in schedule]

    seed = values.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"field 'seed': expected a nonnegative integer, "
                          f"got {seed!r}")
    if "seed" in schema:
        params.setdefault("seed", seed)

    threshold = float(values.get("solver.cert_threshold", 1e-6))
    out_dir = str(values.get("output.dir", "out"))
    figures = values.get("output.figures", True)
    if not isinstance(figures, bool):
        raise ConfigError("field 'output.figures': expected true/false")

    return RunConfig(problem=name, problem_params=params, solver=solver,
                     solver_options=options, out_dir=out_dir, figures=figures,
                     seed=seed, cert_threshold=threshold, raw=dict(values))
