import json

from prager_synge.synthetic import equidistant_triangle, run_suite


def test_suite_passes_and_is_reproducible():
    a = run_suite(7, trials=500)
    b = run_suite(7, trials=500)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["all_passed"]
    assert a["angle_bound"]["min_bound_ratio"] > 1.0
    assert a["triangle"]["min_bound_ratio"] >= 1.0
    assert a["width_orthogonal"]["trials"] == 50


def test_seed_changes_the_draws():
    assert run_suite(1, trials=50)["angle_bound"] != run_suite(2, trials=50)["angle_bound"]


def test_equidistant_members_give_no_ordering():
    assert equidistant_triangle() == "no ordering"
    assert equidistant_triangle(5) == "no ordering"
