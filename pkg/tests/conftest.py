def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, from the properties the tests record."""
    rows = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props:
                continue
            ok = status == "passed" and rep.when == "call"
            key = int(props["criterion"])
            if key in rows and not rows[key][0]:
                continue
            rows[key] = (ok, props.get("detail", ""))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(rows):
        ok, detail = rows[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
