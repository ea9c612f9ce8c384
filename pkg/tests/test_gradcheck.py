from disentangle.gradcheck import TOLERANCE, GradCheckRow, all_passed, format_table, run_gradcheck, worst_by_layer

LAYERS = {"conv2d", "gdn", "igdn", "channel_attention", "resblock", "fusion", "svdo", "phase (fdm+fam)"}


def test_suite_covers_every_layer_and_passes():
    rows = run_gradcheck(seed=3, shape=(1, 4, 4, 4))
    assert {r.layer for r in rows} == LAYERS
    assert all_passed(rows), format_table([r for r in rows if not r.passed])
    targets = {r.target for r in rows if r.layer == "fusion"}
    assert {"input0", "input1", "ca.fc1.weight", "ca.fc1.bias", "conv.weight"} <= targets
    assert max(worst_by_layer(rows).values()) < TOLERANCE


def test_odd_channel_count():
    rows = run_gradcheck(seed=1, shape=(1, 3, 4, 5))
    assert all_passed(rows)


def test_report_helpers():
    rows = [GradCheckRow("gdn", "input", 1e-7), GradCheckRow("gdn", "w", 2e-4), GradCheckRow("svdo", "input", 0.0)]
    assert not all_passed(rows)
    assert worst_by_layer(rows) == {"gdn": 2e-4, "svdo": 0.0}
    table = format_table(rows).splitlines()
    assert table[0].split()[:2] == ["layer", "tensor"] and len(table) == 4
    assert table[2].endswith("FAIL") and table[1].endswith("PASS")
