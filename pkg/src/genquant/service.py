"""HTTP service exposing the derivation and verification pipelines.

Every pipeline is a stateless request/response job: a coordinate-system
document (inline source or a built-in name) plus options goes in, a
schema-versioned report comes out.  The CLI is a thin client of the same
handlers, either in-process or against a running server.
"""

from __future__ import annotations

from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, model_validator

from . import pipeline
from .dsl import ParseError, parse_document
from .numeric import ConvergenceError, GridError, SingularPotentialError

app = FastAPI(
    title="genquant",
    description=(
        "Quantization in orthogonal curvilinear coordinates: symbolic "
        "derivation, verification, and spectrum comparison."
    ),
)


class DocumentRef(BaseModel):
    """A coordinate system: inline .gq source or a built-in name."""

    document: Optional[str] = None
    system: Optional[str] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.document is None) == (self.system is None):
            raise ValueError("provide exactly one of 'document' or 'system'")
        return self

    def source(self) -> str:
        if self.document is not None:
            return self.document
        return pipeline.builtin_source(self.system)


class GridOptionsModel(BaseModel):
    points: int = Field(40, ge=2, description="nodes per axis for product grids")
    box: float = Field(7.0, gt=0, description="domain truncation radius")
    radial_points: int = Field(400, ge=8)
    lmax: Optional[int] = Field(None, ge=0)
    spacing: Literal["uniform", "log"] = "uniform"
    rmin: float = Field(1e-3, gt=0, description="inner edge for log-radial grids")
    mode: Literal["auto", "product", "radial"] = "auto"

    def to_options(self) -> pipeline.GridOptions:
        return pipeline.GridOptions(
            points=self.points,
            box=self.box,
            radial_points=self.radial_points,
            lmax=self.lmax,
            spacing=self.spacing,
            rmin=self.rmin,
            mode=self.mode,
        )


class DeriveRequest(DocumentRef):
    potential: Optional[str] = None
    format: Literal["text", "latex", "json"] = "text"
    seed: Optional[int] = None


class VerifyRequest(DocumentRef):
    potential: Optional[str] = None
    format: Literal["text", "latex", "json"] = "text"
    seed: Optional[int] = None


class SpectrumRequest(DocumentRef):
    potential: Optional[str] = None
    levels: int = Field(6, ge=1)
    grid: GridOptionsModel = GridOptionsModel()
    format: Literal["text", "latex", "json"] = "text"
    seed: Optional[int] = None


class CompareRequest(BaseModel):
    a: DocumentRef
    b: DocumentRef
    potential: Optional[str] = None
    levels: int = Field(4, ge=1)
    tol: float = Field(0.02, gt=0)
    grid_a: GridOptionsModel = GridOptionsModel()
    grid_b: GridOptionsModel = GridOptionsModel()
    format: Literal["text", "latex", "json"] = "text"
    seed: Optional[int] = None


class ReportResponse(BaseModel):
    ok: bool
    exit_code: int
    report: dict
    rendered: str


def _bad_request(exc: Exception) -> HTTPException:
    detail = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParseError):
        detail.update({"line": exc.line, "col": exc.col, "expected": exc.expected})
    return HTTPException(status_code=400, detail=detail)


def _respond(result, fmt: str) -> ReportResponse:
    ok = bool(result.passed)
    return ReportResponse(
        ok=ok,
        exit_code=0 if ok else 1,
        report=result.to_json(),
        rendered=pipeline.render_result(result, fmt),
    )


_PIPELINE_ERRORS = (
    ParseError,
    GridError,
    SingularPotentialError,
    ConvergenceError,
    ValueError,
    FileNotFoundError,
)


def handle_derive(req: DeriveRequest) -> ReportResponse:
    try:
        doc = parse_document(req.source())
        result = pipeline.run_derive(doc, req.potential, seed=req.seed)
    except _PIPELINE_ERRORS as exc:
        raise _bad_request(exc)
    return _respond(result, req.format)


def handle_verify(req: VerifyRequest) -> ReportResponse:
    try:
        doc = parse_document(req.source())
        result = pipeline.run_verify(doc, req.potential, seed=req.seed)
    except _PIPELINE_ERRORS as exc:
        raise _bad_request(exc)
    return _respond(result, req.format)


def handle_spectrum(req: SpectrumRequest) -> ReportResponse:
    try:
        doc = parse_document(req.source())
        result = pipeline.run_spectrum(
            doc, req.potential, levels=req.levels, opts=req.grid.to_options(), seed=req.seed
        )
    except _PIPELINE_ERRORS as exc:
        raise _bad_request(exc)
    return _respond(result, req.format)


def handle_compare(req: CompareRequest) -> ReportResponse:
    try:
        doc_a = parse_document(req.a.source())
        doc_b = parse_document(req.b.source())
        result = pipeline.run_compare(
            doc_a,
            doc_b,
            req.potential,
            levels=req.levels,
            tol=req.tol,
            opts_a=req.grid_a.to_options(),
            opts_b=req.grid_b.to_options(),
            seed=req.seed,
        )
    except _PIPELINE_ERRORS as exc:
        raise _bad_request(exc)
    return _respond(result, req.format)


@app.get("/health")
def health():
    return {"status": "ok"}


@app.get("/systems")
def systems():
    return {
        "systems": [
            {"name": name, "source": pipeline.builtin_source(name)}
            for name in pipeline.BUILTIN_SYSTEMS
        ]
    }


@app.post("/derive", response_model=ReportResponse)
def derive_endpoint(req: DeriveRequest):
    return handle_derive(req)


@app.post("/verify", response_model=ReportResponse)
def verify_endpoint(req: VerifyRequest):
    return handle_verify(req)


@app.post("/spectrum", response_model=ReportResponse)
def spectrum_endpoint(req: SpectrumRequest):
    return handle_spectrum(req)


@app.post("/compare", response_model=ReportResponse)
def compare_endpoint(req: CompareRequest):
    return handle_compare(req)
