"""
Collection of shared structures, types, errors, and command line helpers.
"""

import enum
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, TypeAlias, TypedDict

from typer import Exit, Option

from cmvlab import __version__

BackendName: TypeAlias = Literal["exact", "float"]
"""Scalar backends. `exact` works over the Gaussian rationals, `float` over binary floats."""
ScenarioKind: TypeAlias = Literal[
    "solve", "verify-identities", "verify-kernel", "reconstruct", "olp-dump"
]
"""The kinds of scenarios a configuration document can request."""
PatternKind: TypeAlias = Literal[
    "diagonal", "almost-diagonal", "tridiagonal", "almost-tridiagonal"
]
"""Sparsity patterns of the unknown in an ad-condition system."""
VerblunskyKind: TypeAlias = Literal["zero", "constant", "list", "geometric", "random"]
"""Ways to describe a sequence of Verblunsky coefficients."""
Classification: TypeAlias = Literal["trivial", "lebesgue", "other"]
"""Outcome of a solve: only multiples of the identity, the Lebesgue family, or anything
else."""
Status: TypeAlias = Literal["ok", "error"]
Encoded: TypeAlias = str | float | list[Any]
"""A scalar as it appears in configuration and report documents. The exact backend
writes rational strings like `"3/5"`, the float backend plain numbers, and complex
values are `[re, im]` pairs."""


class Tolerance(TypedDict):
    """Zero tolerance of the float backend and the relative rank threshold."""

    tau: float
    tau_rank: float


class VerblunskyConfig(TypedDict, total=False):
    """Description of a Verblunsky sequence.

    Only the keys relevant to `kind` are read: `value` for `constant`, `values` for
    `list`, `c` and `r` for `geometric` and `length` and `seed` for `random`.
    """

    kind: VerblunskyKind
    value: Encoded
    values: list[Encoded]
    c: Encoded
    r: float
    length: int
    seed: int


class PatternConfig(TypedDict, total=False):
    """Sparsity pattern of the unknown, its truncation length `size`, and the size of
    the full Hermitian `head` block for the almost-patterns."""

    kind: PatternKind
    size: int
    head: int


class OmegaConfig(TypedDict, total=False):
    """Operator input for reconstruction and identity checks.

    `lebesgue` is the Lebesgue eigenvalue diagonal, `identity` the identity, `symbol`
    is f(C) for a Laurent polynomial given as degree -> coefficient, `operator` is the
    matrix of a differential operator given as a list of such polynomials, and `random`
    a seeded random Hermitian banded matrix with bandwidth `band`.
    """

    kind: Literal["lebesgue", "identity", "symbol", "operator", "random"]
    symbol: dict[str, Encoded]
    coefficients: list[dict[str, Encoded]]
    seed: int
    band: int


class ScenarioConfig(TypedDict, total=False):
    """One scenario document, see [`defaults`][cmvlab.misc.defaults] for the values of
    omitted keys."""

    scenario: ScenarioKind
    verblunsky: VerblunskyConfig
    backend: BackendName
    tolerance: Tolerance
    order: int
    pattern: PatternConfig
    window: int
    z: Encoded
    tail: Literal["lebesgue"] | list[Encoded] | None
    omega: OmegaConfig
    count: int
    timing: bool
    output: str | None


class ErrorInfo(TypedDict):
    type: str
    message: str


class Report(TypedDict):
    """Outcome of a single scenario.

    Everything in here is plain JSON data, so a report survives a round trip through
    `json.dumps`/`json.loads` unchanged.
    """

    scenario: ScenarioConfig
    backend: BackendName
    status: Status
    horizon: int | None
    wall_clock: float | None
    result: dict[str, Any]
    error: ErrorInfo | None


class CmvLabError(Exception):
    """Base class of all domain errors raised by this package."""


class ZeroArgument(CmvLabError):
    """A Laurent polynomial with negative degrees was evaluated at zero."""


class HorizonExhausted(CmvLabError):
    """A finite window no longer holds any trusted entry."""


class GramNotPositive(CmvLabError):
    """A truncated moment matrix failed to be positive definite."""


class NotPythagorean(CmvLabError):
    """A value requested from the exact backend needs an irrational square root."""


class NotInCentralizer(CmvLabError):
    """The operator does not commute with the CMV matrix."""


class ReconstructionMismatch(CmvLabError):
    """A recovered symbol or operator fails to reproduce its input."""


class NotConstantMultiple(CmvLabError):
    """An ad-image is not a scalar multiple of the identity."""


class WindowTooSmall(CmvLabError):
    """Not enough trusted equations for the number of unknowns."""


class RankAmbiguous(CmvLabError):
    """Singular values sit too close to the rank threshold to decide."""


class NoSolution(CmvLabError):
    """No differential operator of the requested order reproduces the input."""


class InternalMismatch(CmvLabError):
    """Two independent computations of the same quantity disagree."""


class ConfigInvalid(CmvLabError):
    """A configuration document failed validation.

    Args:
        errors: Pairs of offending field and a description of the problem.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        listing = "; ".join(f"{field}: {message}" for field, message in errors)
        super().__init__(f"invalid configuration ({listing})")


defaults: ScenarioConfig = {
    "scenario": "solve",
    "verblunsky": {"kind": "zero"},
    "backend": "exact",
    "tolerance": {"tau": 1e-10, "tau_rank": 1e-8},
    "order": 2,
    "pattern": {"kind": "diagonal", "size": 24, "head": 0},
    "window": 64,
    "z": "2",
    "tail": None,
    "omega": {"kind": "lebesgue"},
    "count": 8,
    "timing": False,
    "output": None,
}


class _Backend(str, enum.Enum):
    """Proxy of the [`BackendName`][cmvlab.misc.BackendName] type alias for typer."""

    exact = "exact"
    float = "float"


def _print_version(val: bool):
    if val:
        print(f"cmvlab version: {__version__}")
        raise Exit()


# fmt: off
help_texts = {
    "config_annotation": "Path to a JSON scenario document (a list of them for `sweep`).",
    "backend_annotation": "Scalar backend, overrides the value in the config.",
    "window_annotation": "Window size N of all band matrices, overrides the value in the config.",
    "out_annotation": "Write the report to this file instead of stdout.",
    "summary_annotation": "Print one dimension/classification line per scenario to stdout.",
    "plain_annotation": "Print plain ascii JSON instead of colored output.",
    "parallelism_annotation": "Number of worker processes for a sweep.",
    "verbose_annotation": "Increase log verbosity, can be repeated.",
    "version_annotation": "Print this package's version and exit.",
}
config_annotation: TypeAlias = Annotated[Path, Option("--config", "-c", exists=True, dir_okay=False, help=help_texts["config_annotation"])]
backend_annotation: TypeAlias = Annotated[Optional[_Backend], Option(help=help_texts["backend_annotation"])]
window_annotation: TypeAlias = Annotated[Optional[int], Option(min=4, help=help_texts["window_annotation"])]
out_annotation: TypeAlias = Annotated[Optional[Path], Option("--out", "-o", dir_okay=False, help=help_texts["out_annotation"])]
summary_annotation: TypeAlias = Annotated[bool, Option("--summary", help=help_texts["summary_annotation"])]
plain_annotation: TypeAlias = Annotated[bool, Option("--plain", help=help_texts["plain_annotation"])]
parallelism_annotation: TypeAlias = Annotated[int, Option(min=1, help=help_texts["parallelism_annotation"])]
verbose_annotation: TypeAlias = Annotated[int, Option("--verbose", "-v", count=True, help=help_texts["verbose_annotation"])]
version_annotation: TypeAlias = Annotated[Optional[bool], Option("--version", callback=_print_version, is_eager=True, help=help_texts["version_annotation"])]
# fmt: on


def merge_defaults(config: ScenarioConfig) -> ScenarioConfig:
    """Fill in every key that a scenario document left out.

    Nested mappings (`tolerance`, `pattern`) are merged key by key, so a document that
    only overrides `tau` keeps the default `tau_rank`. An empty `tolerance` mapping
    therefore yields the default tolerances.

    Args:
        config: A possibly partial scenario document.

    Returns:
        A new, complete document. The input is not modified.
    """
    merged: dict[str, Any] = {**defaults, **config}
    for key in ("tolerance", "pattern"):
        merged[key] = {**defaults[key], **(config.get(key) or {})}  # type: ignore[misc]
    return merged  # type: ignore[return-value]
