"""Command-line client of the derivation service.

Each subcommand builds the same request model the HTTP endpoints accept
and either executes it in-process (default) or posts it to a running
server given with ``--server``.  Exit code 0 means every check passed.

The sampling/eigensolver seed comes from ``--seed``, else the
GENQUANT_SEED environment variable, else the documented default.
"""

from __future__ import annotations

import sys

import click

from . import pipeline, service
from .dsl import ParseError


def _load_source(path: str) -> str:
    try:
        return pipeline.load_source(path)
    except FileNotFoundError as exc:
        raise click.ClickException(str(exc))


def _submit(endpoint: str, request_model, server: str | None):
    """In-process call by default; HTTP when --server is given."""
    if server is None:
        handler = {
            "derive": service.handle_derive,
            "verify": service.handle_verify,
            "spectrum": service.handle_spectrum,
            "compare": service.handle_compare,
        }[endpoint]
        from fastapi import HTTPException

        try:
            return handler(request_model)
        except HTTPException as exc:
            _fail_http(exc.detail)
    import httpx

    resp = httpx.post(
        f"{server.rstrip('/')}/{endpoint}",
        json=request_model.model_dump(),
        timeout=600.0,
    )
    if resp.status_code == 400 or resp.status_code == 422:
        _fail_http(resp.json().get("detail", resp.text))
    resp.raise_for_status()
    return service.ReportResponse(**resp.json())


def _fail_http(detail):
    if isinstance(detail, dict):
        msg = detail.get("message", str(detail))
        if "line" in detail and detail.get("line") is not None:
            msg += f" (line {detail['line']}, column {detail['col']})"
    else:
        msg = str(detail)
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


def _finish(resp) -> None:
    click.echo(resp.rendered, nl=not resp.rendered.endswith("\n"))
    sys.exit(resp.exit_code)


def _grid_options(points, box, radial_points, lmax, spacing, rmin, mode):
    return service.GridOptionsModel(
        points=points,
        box=box,
        radial_points=radial_points,
        lmax=lmax,
        spacing=spacing,
        rmin=rmin,
        mode=mode,
    )


grid_params = [
    click.option("--points", default=40, show_default=True, help="nodes per axis (product grids)"),
    click.option("--box", default=7.0, show_default=True, help="domain truncation radius"),
    click.option("--radial-points", default=400, show_default=True, help="radial nodes (radial solves)"),
    click.option("--lmax", default=None, type=int, help="angular momentum cutoff (radial solves)"),
    click.option("--spacing", default="uniform", type=click.Choice(["uniform", "log"]), show_default=True),
    click.option("--rmin", default=1e-3, show_default=True, help="inner edge of log-radial grids"),
    click.option("--grid-mode", default="auto", type=click.Choice(["auto", "product", "radial"]), show_default=True),
]


def add_params(params):
    def wrap(fn):
        for p in reversed(params):
            fn = p(fn)
        return fn

    return wrap


@click.group()
def main():
    """Derive, verify, and numerically compare quantized dynamics in
    orthogonal curvilinear coordinates."""


@main.command()
@click.option("--coords", required=True, help=".gq document path or built-in name")
@click.option("--potential", default=None, help="potential expression, e.g. '0.5*r^2' or 'V(r)'")
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "latex", "json"]), show_default=True)
@click.option("--seed", default=None, type=int, envvar="GENQUANT_SEED")
@click.option("--server", default=None, help="base URL of a running service")
def derive(coords, potential, fmt, seed, server):
    """Emit the whole derivation chain for one coordinate system."""
    req = service.DeriveRequest(
        document=_load_source(coords), potential=potential, format=fmt, seed=seed
    )
    _finish(_submit("derive", req, server))


@main.command()
@click.option("--coords", required=True)
@click.option("--potential", default=None)
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "latex", "json"]), show_default=True)
@click.option("--seed", default=None, type=int, envvar="GENQUANT_SEED")
@click.option("--server", default=None)
def verify(coords, potential, fmt, seed, server):
    """Run structural, reference, and cross-route consistency checks."""
    req = service.VerifyRequest(
        document=_load_source(coords), potential=potential, format=fmt, seed=seed
    )
    _finish(_submit("verify", req, server))


@main.command()
@click.option("--coords", required=True)
@click.option("--potential", default=None)
@click.option("--levels", default=6, show_default=True, help="eigenvalues to report")
@add_params(grid_params)
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "latex", "json"]), show_default=True)
@click.option("--seed", default=None, type=int, envvar="GENQUANT_SEED")
@click.option("--server", default=None)
def spectrum(coords, potential, levels, points, box, radial_points, lmax, spacing, rmin, grid_mode, fmt, seed, server):
    """Lowest eigenvalues of one discretized system."""
    req = service.SpectrumRequest(
        document=_load_source(coords),
        potential=potential,
        levels=levels,
        grid=_grid_options(points, box, radial_points, lmax, spacing, rmin, grid_mode),
        format=fmt,
        seed=seed,
    )
    _finish(_submit("spectrum", req, server))


@main.command()
@click.option("--a", "side_a", required=True, help="first .gq document")
@click.option("--b", "side_b", required=True, help="second .gq document")
@click.option("--potential", default=None, help="shared potential (either system's coordinates)")
@click.option("--levels", default=4, show_default=True, help="degeneracy clusters to align")
@click.option("--tol", default=0.02, show_default=True, help="relative tolerance per cluster")
@add_params(grid_params)
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "latex", "json"]), show_default=True)
@click.option("--seed", default=None, type=int, envvar="GENQUANT_SEED")
@click.option("--server", default=None)
def compare(side_a, side_b, potential, levels, tol, points, box, radial_points, lmax, spacing, rmin, grid_mode, fmt, seed, server):
    """Compare spectra of the same physics in two coordinate systems."""
    grid = _grid_options(points, box, radial_points, lmax, spacing, rmin, grid_mode)
    req = service.CompareRequest(
        a=service.DocumentRef(document=_load_source(side_a)),
        b=service.DocumentRef(document=_load_source(side_b)),
        potential=potential,
        levels=levels,
        tol=tol,
        grid_a=grid,
        grid_b=grid,
        format=fmt,
        seed=seed,
    )
    _finish(_submit("compare", req, server))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("genquant.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
