"""Shared pytest wiring: a per-criterion summary for the acceptance gate."""

_CRITERIA = {
    "test_c01_scale_transform_identity": "scale transform identity",
    "test_c02_numeric_inversion_matches_closed_forms":
        "numeric inversion vs closed forms",
    "test_c03_scale_boundary_values": "scale boundary values",
    "test_c04_critical_rates_on_canonical_instance": "critical discount rates",
    "test_c05_call_threshold_closed_reduction": "call threshold reduction",
    "test_c06_value_bounds_and_monotonicity": "value bounds and monotonicity",
    "test_c07_boundary_fit_kinds": "boundary fit kinds",
    "test_c08_monte_carlo_agreement": "Monte Carlo agreement",
    "test_c09_saddle_point_inequalities": "saddle-point inequalities",
    "test_c10_deterministic_outputs": "deterministic outputs",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[str, str] = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                             ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            if name not in _CRITERIA:
                continue
            # a FAIL in any phase trumps a PASS elsewhere
            if results.get(name) != "FAIL":
                results[name] = verdict
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for idx, (name, label) in enumerate(_CRITERIA.items(), start=1):
        verdict = results.get(name, "NOT RUN")
        terminalreporter.write_line(f"criterion {idx:2d}  {label:<40s} {verdict}")
