import json
import logging
import random
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import typer
from rich import print_json
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

from cmvlab.adops import (
    CmvPair,
    centralizer_symbol,
    hermitian_ad,
    hermitian_relations_check,
    symbol_matrix,
)
from cmvlab.bandop import BandMatrix, bm_identity
from cmvlab.bispectral import (
    SolvePattern,
    lebesgue_solution,
    reconstruct_operator,
    solve,
    verify_kernel_basis,
)
from cmvlab.cmv import (
    VerblunskySeq,
    compute_olp,
    gram_schmidt_oracle,
    olp_degree,
    operator_matrix,
    random_pythagorean,
)
from cmvlab.core import Backend, DiffOperator, LaurentPoly, backend_for
from cmvlab.misc import (
    CmvLabError,
    ConfigInvalid,
    Report,
    ScenarioConfig,
    ScenarioKind,
    backend_annotation,
    config_annotation,
    merge_defaults,
    out_annotation,
    parallelism_annotation,
    plain_annotation,
    summary_annotation,
    verbose_annotation,
    version_annotation,
    window_annotation,
)

logger = logging.getLogger(__name__)
_stderr = Console(stderr=True)

cli = typer.Typer(rich_markup_mode="rich")


@cli.callback()
def main(verbose: verbose_annotation = 0, version: version_annotation = None):
    """Finite-window computations for the CMV bispectral problem.

    Every command reads a JSON scenario document and writes a JSON report. Exact
    reports are reproducible byte by byte.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _single(
    kind: ScenarioKind,
    config: Path,
    backend: Any,
    window: int | None,
    out: Path | None,
    summary: bool,
    plain: bool,
):
    try:
        raw = _read(config)
        if not isinstance(raw, dict):
            raise ConfigInvalid([("<document>", "expected a single scenario object")])
        raw = {**raw, "scenario": kind}
        report = run_scenario(_override(raw, backend, window))
    except ConfigInvalid as e:
        _report_invalid(e)
        raise typer.Exit(2)
    _emit([report], out or _output_of(report), summary, plain, single=True)
    if not _succeeded(report):
        raise typer.Exit(1)


@cli.command("solve", no_args_is_help=True)
def solve_(
    config: config_annotation,
    backend: backend_annotation = None,
    window: window_annotation = None,
    out: out_annotation = None,
    summary: summary_annotation = False,
    plain: plain_annotation = False,
):
    """Solve an ad-condition for a patterned Hermitian unknown.

    Reports the dimension of the solution space, its classification (trivial, lebesgue
    or other) and a basis in sparse (i, j, value) form.
    """
    _single("solve", config, backend, window, out, summary, plain)


@cli.command(no_args_is_help=True)
def verify(
    config: config_annotation,
    backend: backend_annotation = None,
    window: window_annotation = None,
    out: out_annotation = None,
    summary: summary_annotation = False,
    plain: plain_annotation = False,
):
    """Check the algebraic identities of the ad calculus on one operator."""
    _single("verify-identities", config, backend, window, out, summary, plain)


@cli.command(no_args_is_help=True)
def kernel(
    config: config_annotation,
    backend: backend_annotation = None,
    window: window_annotation = None,
    out: out_annotation = None,
    summary: summary_annotation = False,
    plain: plain_annotation = False,
):
    """Certify the derivative basis of ker(C − zI)^n."""
    _single("verify-kernel", config, backend, window, out, summary, plain)


@cli.command(no_args_is_help=True)
def reconstruct(
    config: config_annotation,
    backend: backend_annotation = None,
    window: window_annotation = None,
    out: out_annotation = None,
    summary: summary_annotation = False,
    plain: plain_annotation = False,
):
    """Recover the differential operator D with D x = Ω x."""
    _single("reconstruct", config, backend, window, out, summary, plain)


@cli.command(no_args_is_help=True)
def olp(
    config: config_annotation,
    backend: backend_annotation = None,
    window: window_annotation = None,
    out: out_annotation = None,
    summary: summary_annotation = False,
    plain: plain_annotation = False,
):
    """Dump the orthonormal Laurent polynomials and compare them with Gram–Schmidt."""
    _single("olp-dump", config, backend, window, out, summary, plain)


@cli.command("sweep", no_args_is_help=True)
def sweep_(
    config: config_annotation,
    backend: backend_annotation = None,
    window: window_annotation = None,
    out: out_annotation = None,
    summary: summary_annotation = False,
    plain: plain_annotation = False,
    parallelism: parallelism_annotation = 1,
):
    """Run a JSON list of scenarios, possibly in parallel.

    Failing scenarios are recorded in their own report and don't stop the sweep.
    """
    try:
        raw = _read(config)
        if not isinstance(raw, list) or not raw:
            raise ConfigInvalid([("<document>", "expected a nonempty list of scenarios")])
    except ConfigInvalid as e:
        _report_invalid(e)
        raise typer.Exit(2)
    configs = [_override(c, backend, window) if isinstance(c, dict) else c for c in raw]
    reports = sweep(configs, parallelism)
    _emit(reports, out, summary, plain, single=False)
    if not all(_succeeded(report) for report in reports):
        raise typer.Exit(1)


def _read(path: Path) -> Any:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigInvalid([("<document>", f"not valid JSON: {e}")]) from None


def _override(raw: dict, backend: Any, window: int | None) -> dict:
    raw = dict(raw)
    if backend is not None:
        raw["backend"] = backend.value
    if window is not None:
        raw["window"] = window
    return raw


def _report_invalid(error: ConfigInvalid):
    for field, message in error.errors:
        _stderr.print(f"[bold red]config error[/] {escape(field)}: {escape(message)}")


def _output_of(report: Report) -> Path | None:
    output = report["scenario"].get("output")
    return Path(output) if output else None


def _succeeded(report: Report) -> bool:
    return report["status"] == "ok" and report["result"].get("passed", True) is not False


def _emit(reports: list[Report], out: Path | None, summary: bool, plain: bool, single: bool):
    data: Any = reports[0] if single else reports
    text = json.dumps(data, ensure_ascii=plain, indent=2)
    if out is not None:
        out.write_text(text + "\n")
    if summary:
        for report in reports:
            typer.echo(_summary_line(report))
    elif out is None:
        if plain:
            typer.echo(text)
        else:
            print_json(text)


def _summary_line(report: Report) -> str:
    scenario = report["scenario"].get("scenario", "?")
    if report["status"] == "error":
        assert report["error"] is not None
        return f"{scenario}: error {report['error']['type']}: {report['error']['message']}"
    result = report["result"]
    if "dimension" in result:
        return f"{scenario}: dimension={result['dimension']} classification={result['classification']}"
    if "passed" in result:
        return f"{scenario}: passed={str(result['passed']).lower()}"
    if "coefficients" in result:
        return f"{scenario}: order={result['order']}"
    return f"{scenario}: ok"


def validate(raw: Any) -> ScenarioConfig:
    """Merge defaults into a scenario document and check every field.

    All problems are collected before anything is raised, and the returned document is
    what the report echoes.

    Raises:
        ConfigInvalid: With one (field, message) pair per problem.
    """
    if not isinstance(raw, dict):
        raise ConfigInvalid([("<document>", "a scenario must be a JSON object")])
    config = merge_defaults(raw)  # type: ignore[arg-type]
    errors: list[tuple[str, str]] = []

    def integer(key: str, value: Any, minimum: int) -> bool:
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            errors.append((key, f"expected an integer ≥ {minimum}, got {value!r}"))
            return False
        return True

    if config["scenario"] not in ("solve", "verify-identities", "verify-kernel", "reconstruct", "olp-dump"):
        errors.append(("scenario", f"unknown scenario {config['scenario']!r}"))
    if config["backend"] not in ("exact", "float"):
        errors.append(("backend", f"expected 'exact' or 'float', got {config['backend']!r}"))
    tolerance = config["tolerance"]
    for key in ("tau", "tau_rank"):
        value = tolerance.get(key)  # type: ignore[misc]
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
            errors.append((f"tolerance.{key}", f"expected a positive number, got {value!r}"))
    minimum_order = 0 if config["scenario"] == "reconstruct" else 1
    integer("order", config["order"], minimum_order)
    window_ok = integer("window", config["window"], 4)
    integer("count", config["count"], 1)
    if not isinstance(config["timing"], bool):
        errors.append(("timing", f"expected true or false, got {config['timing']!r}"))

    pattern = config["pattern"]
    try:
        solve_pattern = SolvePattern(pattern.get("kind"), pattern.get("size"), pattern.get("head", 0))  # type: ignore[arg-type]
    except (TypeError, ValueError) as e:
        errors.append(("pattern", str(e)))
    else:
        if window_ok and config["scenario"] == "solve" and solve_pattern.size > config["window"]:
            errors.append(("pattern.size", f"M={solve_pattern.size} exceeds the window {config['window']}"))

    if not errors:
        backend = backend_for(config["backend"], config["tolerance"]["tau"])
        try:
            alpha = build_verblunsky(config, backend)
        except (TypeError, ValueError, KeyError, CmvLabError) as e:
            errors.append(("verblunsky", str(e)))
        else:
            if config["verblunsky"].get("kind") == "random":
                config["verblunsky"] = {
                    **config["verblunsky"],
                    "values": [backend.encode(alpha.alpha(k)) for k in range(len(alpha.params))],
                }
            if config["scenario"] == "verify-kernel":
                try:
                    if not backend.decode(config["z"]):
                        errors.append(("z", "z must be nonzero"))
                except (TypeError, ValueError) as e:
                    errors.append(("z", str(e)))
                try:
                    _tail(config, backend)
                except (TypeError, ValueError) as e:
                    errors.append(("tail", str(e)))
            if config["scenario"] in ("verify-identities", "reconstruct"):
                try:
                    build_omega(config, alpha, backend)
                except (TypeError, ValueError, KeyError, CmvLabError) as e:
                    errors.append(("omega", str(e)))
    if errors:
        raise ConfigInvalid(errors)
    return config


def build_verblunsky(config: ScenarioConfig, backend: Backend) -> VerblunskySeq:
    options = config["verblunsky"]
    match options.get("kind"):
        case "zero":
            return VerblunskySeq.zero(backend)
        case "constant":
            return VerblunskySeq.constant(options["value"], backend)
        case "list":
            return VerblunskySeq.from_list(options["values"], backend)
        case "geometric":
            return VerblunskySeq.geometric(options["c"], options["r"], backend)
        case "random":
            return random_pythagorean(options["length"], options["seed"], backend)
        case kind:
            raise ValueError(f"Unknown Verblunsky sequence {kind=}.")


def _laurent(raw: dict[str, Any], backend: Backend) -> LaurentPoly:
    return LaurentPoly({int(d): backend.decode(c) for d, c in raw.items()}, tau=backend.tau)


def _random_hermitian(size: int, band: int, seed: int, backend: Backend) -> BandMatrix:
    rng = random.Random(seed)
    entries = {}
    for i in range(size):
        entries[i, i] = backend.scalar(Fraction(rng.randint(-6, 6), rng.randint(1, 4)))
        for j in range(i + 1, min(i + band + 1, size)):
            value = backend.scalar(
                [Fraction(rng.randint(-6, 6), rng.randint(1, 4)), Fraction(rng.randint(-6, 6), rng.randint(1, 4))]
            )
            entries[i, j], entries[j, i] = value, value.conjugate()
    return BandMatrix.from_entries(size, entries, backend=backend)


def build_omega(config: ScenarioConfig, alpha: VerblunskySeq, backend: Backend) -> BandMatrix:
    """The operator described by the `omega` field."""
    options = config["omega"]
    window = config["window"]
    match options.get("kind"):
        case "lebesgue":
            return lebesgue_solution(window, backend)
        case "identity":
            return bm_identity(window, backend)
        case "symbol":
            return symbol_matrix(CmvPair.build(alpha, window), _laurent(options["symbol"], backend))
        case "operator":
            D = DiffOperator(_laurent(c, backend) for c in options["coefficients"])
            return operator_matrix(D, alpha, window)
        case "random":
            return _random_hermitian(window, options.get("band", 1), options.get("seed", 0), backend)
        case kind:
            raise ValueError(f"Unknown operator {kind=}.")


def _tail(config: ScenarioConfig, backend: Backend) -> list | None:
    tail = config["tail"]
    if tail is None:
        return None
    if tail == "lebesgue":
        return [backend.scalar(olp_degree(j)) for j in range(config["window"])]
    if not isinstance(tail, list):
        raise ValueError(f"tail must be 'lebesgue' or a list, got {tail!r}")
    return [backend.decode(v) for v in tail]


def _triplets(matrix: BandMatrix, limit: int) -> list[list[Any]]:
    encode = matrix.backend.encode
    return [
        [i, j, encode(v)]
        for i, j, v in sorted(matrix.trusted())
        if i <= j < limit and v
    ]


def _encode_poly(f: LaurentPoly, backend: Backend) -> dict[str, Any]:
    return {str(d): backend.encode(c) for d, c in f}


def _run_solve(config: ScenarioConfig, alpha: VerblunskySeq, backend: Backend):
    pattern = config["pattern"]
    result = solve(
        alpha,
        config["order"],
        SolvePattern(pattern["kind"], pattern["size"], pattern.get("head", 0)),
        config["window"],
        config["tolerance"]["tau_rank"],
    )
    return {
        "order": result.order,
        "dimension": result.dimension,
        "classification": result.classification,
        "kernel_dimension": result.kernel_dimension,
        "basis": [_triplets(m, result.pattern.size) for m in result.basis],
    }, result.horizon


def _run_identities(config: ScenarioConfig, alpha: VerblunskySeq, backend: Backend):
    P = CmvPair.build(alpha, config["window"])
    omega = build_omega(config, alpha, backend)
    checks = hermitian_relations_check(P, omega, config["order"])
    result: dict[str, Any] = {"identities": checks, "passed": all(checks.values())}
    try:
        result["symbol"] = _encode_poly(centralizer_symbol(P, omega), backend)
    except CmvLabError:
        result["symbol"] = None
    return result, hermitian_ad(P, omega, config["order"]).horizon


def _run_kernel(config: ScenarioConfig, alpha: VerblunskySeq, backend: Backend):
    report = verify_kernel_basis(
        alpha, backend.decode(config["z"]), config["order"], config["window"], _tail(config, backend)
    )

    def listing(values):
        return None if values is None else [backend.encode(v) for v in values]

    return {
        "order": report.order,
        "derivative_identities": {str(k): v for k, v in report.derivative_identities.items()},
        "binomial_expansion": report.binomial_expansion,
        "kernel_band": list(report.kernel_band),
        "product_band": list(report.product_band),
        "gamma": listing(report.gamma),
        "gamma_expected": listing(report.gamma_expected),
        "gamma_matches": report.gamma_matches,
        "gamma_nonzero": report.gamma_nonzero,
        "delta": listing(report.delta),
        "delta_expected": listing(report.delta_expected),
        "delta_matches": report.delta_matches,
        "passed": report.passed,
    }, report.horizon


def _run_reconstruct(config: ScenarioConfig, alpha: VerblunskySeq, backend: Backend):
    omega = build_omega(config, alpha, backend)
    D = reconstruct_operator(alpha, omega, config["order"], config["window"])
    return {
        "order": D.order,
        "coefficients": [_encode_poly(c, backend) for c in D.coeffs],
    }, omega.horizon


def _run_olp(config: ScenarioConfig, alpha: VerblunskySeq, backend: Backend):
    count = config["count"]
    olp = compute_olp(alpha, count)
    oracle = gram_schmidt_oracle(alpha, count)
    if backend.name == "exact":
        agrees = all(a == b for a, b in zip(olp.x, oracle.x))
    else:
        agrees = all(a.isclose(b, 1e3 * backend.tau) for a, b in zip(olp.x, oracle.x))
    return {
        "x": [_encode_poly(x, backend) for x in olp.x],
        "chi": [_encode_poly(c, backend) for c in olp.chi],
        "oracle_agrees": agrees,
        "passed": agrees,
    }, None


_dispatch: dict[str, Callable[[ScenarioConfig, VerblunskySeq, Backend], tuple[dict, int | None]]] = {
    "solve": _run_solve,
    "verify-identities": _run_identities,
    "verify-kernel": _run_kernel,
    "reconstruct": _run_reconstruct,
    "olp-dump": _run_olp,
}


def run_scenario(config: ScenarioConfig) -> Report:
    """Programmatic equivalent of running a single scenario through the CLI.

    Args:
        config: A possibly partial scenario document, see
            [`ScenarioConfig`][cmvlab.misc.ScenarioConfig].

    Returns:
        The report. Domain errors of the scenario are recorded in it with status
        `error` instead of being raised.

    Raises:
        ConfigInvalid: If the document doesn't validate.
    """
    config = validate(config)
    backend = backend_for(config["backend"], config["tolerance"]["tau"])
    alpha = build_verblunsky(config, backend)
    logger.info("running %s with the %s backend", config["scenario"], backend.name)
    start = time.perf_counter()
    report: Report = {
        "scenario": config,
        "backend": config["backend"],
        "status": "ok",
        "horizon": None,
        "wall_clock": None,
        "result": {},
        "error": None,
    }
    try:
        report["result"], report["horizon"] = _dispatch[config["scenario"]](config, alpha, backend)
    except CmvLabError as e:
        logger.warning("%s failed: %s", config["scenario"], e)
        report["status"] = "error"
        report["error"] = {"type": type(e).__name__, "message": str(e)}
    if config["timing"]:
        report["wall_clock"] = time.perf_counter() - start
    logger.debug("finished %s in %.3fs", config["scenario"], time.perf_counter() - start)
    return report


def _run_captured(config: Any) -> Report:
    try:
        return run_scenario(config)
    except ConfigInvalid as e:
        return {
            "scenario": config if isinstance(config, dict) else {},  # type: ignore[typeddict-item]
            "backend": config.get("backend", "exact") if isinstance(config, dict) else "exact",
            "status": "error",
            "horizon": None,
            "wall_clock": None,
            "result": {},
            "error": {"type": "ConfigInvalid", "message": str(e)},
        }


def sweep(configs: list[ScenarioConfig], parallelism: int = 1) -> list[Report]:
    """Run independent scenarios, in worker processes if `parallelism` > 1.

    Every scenario's failure, configuration errors included, lands in its own report.
    The reports come back in input order.
    """
    if not configs:
        raise ValueError("A sweep needs at least one scenario.")
    if parallelism < 1:
        raise ValueError(f"Parallelism must be positive, got {parallelism=}.")
    if parallelism == 1:
        return [_run_captured(config) for config in configs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_captured, configs))
