"""Scenario files, expression parsing, bundled examples, reports and the CLI."""

from .config import ScenarioConfig, ScenarioError, load_scenario, parse_scenario
from .expr import ExprSyntaxError, UnknownSymbolError, evaluate, parse_expr, to_text
from .report import CheckRecord, Report, emit_report
from .runner import run_builtin, run_scenario
