"""
LangGraph end-to-end pipeline.

Nodes with conditional routing:
1. Check Norms Cache → reuse the enumerated norms when the manifest matches
2. Enumerate Norms → lattice enumeration, cached
3. Check Solve Cache → reuse the perturbed spectrum when the manifest matches
4. Solve → secular roots, cached
5. Stats → spacing report
6. Heat → heat-trace sweep
7. Trace → trace-identity check
8. Write Reports → stats.json, heat.csv, trace.json
9. END

Any node that fails sets status "failed" with an error message and the graph ends.
"""

import logging
import os
from typing import Any, Dict, List, Optional, TypedDict

from langgraph.graph import END, START, StateGraph

from app.config import RunConfig, params_hash
from app.errors import SebaError
from app.models.lattice import NormSpectrum
from app.models.reports import HeatTracePoint, SpacingReport, TraceCheckReport
from app.models.spectrum import GaussianTest, PerturbedSpectrum, ScattererPhase
from app.services import spectrum_store
from app.services.lattice import enumerate_norms
from app.services.secular import solve_spectrum
from app.services.stats import analysis_cutoff, heat_sweep, spacing_report
from app.services.trace import trace_check

logger = logging.getLogger(__name__)

NORMS_ARTIFACT = "norms"
PERTURBED_ARTIFACT = "perturbed"


class PipelineState(TypedDict):
    """State that flows through the pipeline graph."""
    # Input
    config: RunConfig

    # Cache
    norms_path: Optional[str]
    perturbed_path: Optional[str]

    # Spectra
    spec: Optional[NormSpectrum]
    pert: Optional[PerturbedSpectrum]

    # Reports
    stats_report: Optional[SpacingReport]
    heat_points: List[HeatTracePoint]
    trace_report: Optional[TraceCheckReport]
    outputs: Dict[str, str]

    # Status
    steps: List[str]
    status: str  # pending, loaded, computed, reported, failed
    error_message: Optional[str]


def _failed(step: str, exc: Exception) -> dict:
    logger.error("❌ %s failed: %s", step, exc)
    return {"status": "failed", "error_message": f"{step} failed: {exc}"}


def _cache(state: PipelineState) -> spectrum_store.SpectrumCache:
    return spectrum_store.SpectrumCache(state["config"].cache_dir)


# ============ NODE FUNCTIONS ============

def check_norms_cache_node(state: PipelineState) -> dict:
    """Node 1: Look up cached norms for these parameters."""
    config = state["config"]
    key = params_hash(config.norms_params())
    path = _cache(state).lookup(NORMS_ARTIFACT, key, spectrum_store.NORMS_SCHEMA)
    return {"norms_path": path}


def load_norms_node(state: PipelineState) -> dict:
    """Node 2a: Read cached norms."""
    try:
        spec = spectrum_store.read_norms(state["norms_path"])
        return {"spec": spec, "steps": state["steps"] + ["load_norms"]}
    except (SebaError, OSError) as e:
        return _failed("Loading cached norms", e)


def enumerate_norms_node(state: PipelineState) -> dict:
    """Node 2b: Enumerate the norms and cache them."""
    config = state["config"]
    try:
        spec = enumerate_norms(
            config.form, config.resolved_cutoff, merge_tol=config.merge_tol, memory_budget=config.memory_budget
        )
        path = _cache(state).store(
            NORMS_ARTIFACT,
            params_hash(config.norms_params()),
            spectrum_store.NORMS_SCHEMA,
            lambda target: spectrum_store.write_norms(spec, target),
        )
        return {"spec": spec, "norms_path": path, "steps": state["steps"] + ["enumerate"]}
    except SebaError as e:
        return _failed("Enumeration", e)


def check_solve_cache_node(state: PipelineState) -> dict:
    """Node 3: Look up a cached perturbed spectrum for these parameters."""
    config = state["config"]
    key = params_hash(config.solve_params())
    path = _cache(state).lookup(PERTURBED_ARTIFACT, key, spectrum_store.PERTURBED_SCHEMA)
    return {"perturbed_path": path}


def load_solution_node(state: PipelineState) -> dict:
    """Node 4a: Read the cached perturbed spectrum."""
    try:
        pert = spectrum_store.read_perturbed(state["perturbed_path"])
        return {"pert": pert, "steps": state["steps"] + ["load_solution"]}
    except (SebaError, OSError) as e:
        return _failed("Loading cached solution", e)


def solve_node(state: PipelineState) -> dict:
    """Node 4b: Solve the secular equation and cache the roots."""
    config = state["config"]
    try:
        pert = solve_spectrum(
            state["spec"],
            ScattererPhase(config.phi),
            x_max=config.resolved_x_max,
            tol=config.tol,
            tail=config.tail,
            eps_eval=config.eps_eval,
            workers=config.workers,
        )
        path = _cache(state).store(
            PERTURBED_ARTIFACT,
            params_hash(config.solve_params()),
            spectrum_store.PERTURBED_SCHEMA,
            lambda target: spectrum_store.write_perturbed(pert, target),
        )
        return {"pert": pert, "perturbed_path": path, "steps": state["steps"] + ["solve"]}
    except SebaError as e:
        return _failed("Solve", e)


def stats_node(state: PipelineState) -> dict:
    """Node 5: Spacing statistics up to stats_x, clipped to the solved range."""
    config = state["config"]
    try:
        x = analysis_cutoff(state["pert"], config.stats_x)
        report = spacing_report(
            state["spec"], state["pert"], x,
            bins=config.bins, min_levels=config.min_levels, config=config.echo(),
        )
        return {"stats_report": report, "steps": state["steps"] + ["stats"]}
    except SebaError as e:
        return _failed("Statistics", e)


def heat_node(state: PipelineState) -> dict:
    """Node 6: Heat-trace sums over the configured beta grid."""
    config = state["config"]
    try:
        points = heat_sweep(state["spec"], state["pert"], config.betas)
        return {"heat_points": points, "steps": state["steps"] + ["heat"]}
    except SebaError as e:
        return _failed("Heat sums", e)


def trace_node(state: PipelineState) -> dict:
    """Node 7: Both sides of the trace identity at the configured beta."""
    config = state["config"]
    try:
        report = trace_check(
            state["spec"],
            state["pert"],
            ScattererPhase(config.phi),
            GaussianTest(config.beta),
            sigma=config.sigma,
            quad_tol=config.quad_tol,
            config=config.echo(),
        )
        return {"trace_report": report, "steps": state["steps"] + ["trace"]}
    except SebaError as e:
        return _failed("Trace check", e)


def write_reports_node(state: PipelineState) -> dict:
    """Node 8: Write the three reports atomically."""
    config = state["config"]
    try:
        outputs = {
            "stats": os.path.join(config.out_dir, "stats.json"),
            "heat": os.path.join(config.out_dir, "heat.csv"),
            "trace": os.path.join(config.out_dir, "trace.json"),
        }
        spectrum_store.write_json(outputs["stats"], state["stats_report"].model_dump(mode="json", by_alias=True))
        spectrum_store.write_heat(state["heat_points"], outputs["heat"], config.echo())
        spectrum_store.write_json(outputs["trace"], state["trace_report"].model_dump(mode="json", by_alias=True))
        logger.info("✅ Reports written to %s", config.out_dir)
        return {"outputs": outputs, "status": "reported", "steps": state["steps"] + ["write_reports"]}
    except OSError as e:
        return _failed("Writing reports", e)


# ============ ROUTING ============

def route_after_norms_cache(state: PipelineState) -> str:
    """Reuse cached norms when the lookup found a valid artifact."""
    return "load_norms" if state.get("norms_path") else "enumerate"


def route_after_solve_cache(state: PipelineState) -> str:
    return "load_solution" if state.get("perturbed_path") else "solve"


def _continue_to(next_node: str):
    def route(state: PipelineState) -> str:
        return END if state.get("status") == "failed" else next_node
    return route


# ============ BUILD PIPELINE ============

def build_pipeline():
    """Build and compile the pipeline graph."""
    workflow = StateGraph(PipelineState)

    workflow.add_node("check_norms_cache", check_norms_cache_node)
    workflow.add_node("load_norms", load_norms_node)
    workflow.add_node("enumerate", enumerate_norms_node)
    workflow.add_node("check_solve_cache", check_solve_cache_node)
    workflow.add_node("load_solution", load_solution_node)
    workflow.add_node("solve", solve_node)
    workflow.add_node("stats", stats_node)
    workflow.add_node("heat", heat_node)
    workflow.add_node("trace", trace_node)
    workflow.add_node("write_reports", write_reports_node)

    workflow.add_edge(START, "check_norms_cache")
    workflow.add_conditional_edges("check_norms_cache", route_after_norms_cache)
    workflow.add_conditional_edges("load_norms", _continue_to("check_solve_cache"))
    workflow.add_conditional_edges("enumerate", _continue_to("check_solve_cache"))
    workflow.add_conditional_edges("check_solve_cache", route_after_solve_cache)
    workflow.add_conditional_edges("load_solution", _continue_to("stats"))
    workflow.add_conditional_edges("solve", _continue_to("stats"))
    workflow.add_conditional_edges("stats", _continue_to("heat"))
    workflow.add_conditional_edges("heat", _continue_to("trace"))
    workflow.add_conditional_edges("trace", _continue_to("write_reports"))
    workflow.add_edge("write_reports", END)

    return workflow.compile()


# Compiled pipeline singleton
pipeline = build_pipeline()


def run_pipeline(config: RunConfig) -> Dict[str, Any]:
    """Run the end-to-end pipeline and return the final state."""
    initial_state: PipelineState = {
        "config": config,
        "norms_path": None,
        "perturbed_path": None,
        "spec": None,
        "pert": None,
        "stats_report": None,
        "heat_points": [],
        "trace_report": None,
        "outputs": {},
        "steps": [],
        "status": "pending",
        "error_message": None,
    }
    return pipeline.invoke(initial_state)


def pipeline_summary(state: Dict[str, Any]) -> Dict[str, Any]:
    """JSON-safe digest of a finished pipeline state."""
    trace = state.get("trace_report")
    stats = state.get("stats_report")
    spec = state.get("spec")
    pert = state.get("pert")
    return {
        "status": state.get("status"),
        "error_message": state.get("error_message"),
        "steps": state.get("steps", []),
        "outputs": state.get("outputs", {}),
        "norms": None if spec is None else spec.to_dict(),
        "perturbed": None if pert is None else pert.to_dict(),
        "ratio": None if stats is None else stats.ratio,
        "trace_abs_error": None if trace is None else trace.abs_error,
    }
