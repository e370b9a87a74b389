"""Regenerate the shipped scenario files with their analytic bound constants.

Run from the repository root:  python3 scripts/make_fixtures.py
"""
import json
from pathlib import Path

from mcbf.scenarios import DATA_DIR, build_scenario, spec_to_dict, validate

BOX = {"kind": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]}
OBSTACLES = [{"type": "obstacle", "agent": i, "center": [0.0, 0.0], "radius": 1.0} for i in range(2)]
SIM = {"t0": 0.0, "horizon": 200, "dt": 0.01, "substeps": 20, "monitor_tol": 1e-6, "seed": 0}
DOMAIN = {"half_width": 3.0}


def planar_integrators(x0s, goals, kp):
    return [{"dynamics": "single_integrator", "dim": 2, "input_set": BOX, "x0": x0,
             "nominal": {"goal": g, "kp": kp}} for x0, g in zip(x0s, goals)]


def scenarios():
    starts, goals = [[-1.8, 0.05], [0.05, 1.8]], [[2.5, 0.0], [0.0, -2.5]]
    yield {"schema": 1, "name": "diag_coop", "agents": planar_integrators(starts, goals, 2.0),
           "adversaries": [], "safety": {"kind": "diagonal-obstacle", "entries": OBSTACLES},
           "controller": {"mode": "cooperative", "c_alpha": 1.0}, "sim": SIM, "domain": DOMAIN}
    # the adversary starts far from its obstacle, so its entry never becomes the smallest
    yield {"schema": 1, "name": "diag_adv",
           "agents": planar_integrators([starts[0], [2.5, 2.5]], goals, 2.0),
           "adversaries": [1], "safety": {"kind": "diagonal-obstacle", "entries": OBSTACLES},
           "controller": {"mode": "adversarial", "c_alpha": 1.0}, "sim": SIM, "domain": DOMAIN}
    yield {"schema": 1, "name": "coupled_2x2", "agents": planar_integrators(starts, goals, 2.0),
           "adversaries": [], "safety": {"kind": "coupled-2x2", "entries": OBSTACLES, "coupling": 0.5},
           "controller": {"mode": "cooperative", "c_alpha": 1.0}, "sim": SIM, "domain": DOMAIN}
    dbl = [{"dynamics": "double_integrator", "dim": 2, "damping": 0.5, "input_set": BOX,
            "x0": x0 + [0.0, 0.0], "nominal": {"goal": g, "kp": 2.0, "kd": 1.0}}
           for x0, g in zip([[-1.6, 0.05], [0.05, 1.6]], goals)]
    yield {"schema": 1, "name": "dbl_int_ho", "agents": dbl, "adversaries": [],
           "safety": {"kind": "diagonal-obstacle", "entries": OBSTACLES},
           "controller": {"mode": "high-order", "c_alpha": [1.0, 1.0]}, "sim": SIM, "domain": DOMAIN}


def main():
    for doc in scenarios():
        doc["bounds"] = "analytic"
        spec = validate(doc)
        sc = build_scenario(spec)
        out = spec_to_dict(spec, sc.bounds)
        path = Path(DATA_DIR) / f"{spec.name}.json"
        path.write_text(json.dumps(out, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
