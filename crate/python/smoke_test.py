"""Smoke test for the Python bindings: decide, synthesize, verify and simulate on small instances."""

import json

import energy_mp_py as emp


def lower_bound_family():
    m = emp.Mdp.lower_bound("1/6")
    assert "s" in m.state_ids and m.d == 2
    d = emp.decide(m)
    assert d.energy("s") == 0 and d.winnable("s", 0)
    sigma = d.synthesize("s", 0)
    assert sigma is not None
    report = sigma.verify("s", 0)
    assert report["pass"] and report["energy_safe"]
    sim = sigma.simulate("s", 0, seed=1, trials=10, horizon=5000)
    assert sim["violations"] == 0
    again = emp.Strategy.from_json(m, sigma.to_json())
    assert again.verify("s", 0)["pass"]
    assert emp.min_bound(m, "s", 0)["b_min"] == 5


def losing_loop():
    text = json.dumps(
        {"d": 2, "R": 1, "states": [{"id": "q", "owner": "max"}],
         "edges": [{"src": "q", "dst": "q", "reward": [-1, 1]}]}
    )
    d = emp.decide(emp.Mdp.from_json(text))
    assert d.energy("q") is None
    try:
        d.synthesize("q", 3)
    except ValueError:
        pass
    else:
        raise AssertionError("losing query accepted")


def errors_and_bounds():
    try:
        emp.Mdp.from_json("{")
    except ValueError as e:
        assert "syntax" in str(e)
    else:
        raise AssertionError("bad JSON accepted")
    loop = emp.Mdp.from_json(json.dumps(
        {"d": 2, "R": 1, "states": [{"id": "q", "owner": "max"}],
         "edges": [{"src": "q", "dst": "q", "reward": [1, 1]}]}
    ))
    b = emp.bounds(loop)
    assert b["size_f_gain"] == 28 and int(b["b"]) == int(b["z_g"]) + 1
    r = emp.Mdp.random(7, states=3)
    assert len(r) == 3 and emp.Mdp.random(7, states=3).to_json() == r.to_json()


if __name__ == "__main__":
    lower_bound_family()
    losing_loop()
    errors_and_bounds()
    print(f"energy_mp_py {emp.__version__}: smoke test passed")
