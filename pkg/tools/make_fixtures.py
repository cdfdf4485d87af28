"""Regenerate the bundled knowledge-base fixtures under src/tdplan/fixtures/."""

import itertools
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "tdplan" / "fixtures"


def ramp(t_end, top, t_start=0.0):
    return {"kind": "piecewise", "knots": [[t_start, 0.0], [t_end, top]], "asymptote": top}


def action(name, pre, post, t_delay, test_wcet, action_wcet):
    return {"name": name, "pre": pre, "post": post, "t_delay": t_delay,
            "test_wcet": test_wcet, "action_wcet": action_wcet}


def member(name, post, curve, failure=False):
    out = {"name": name, "post": post, "curve": curve}
    if failure:
        out["is_failure"] = True
    return out


def write(name, doc):
    (OUT / name).write_text(json.dumps(doc, indent=2) + "\n")


# -- flight pattern, FIX3 -> FIX4 --------------------------------------------

LOSE_ALT = member("lose-altitude", {"ALT": "low"}, ramp(300, 0.03))
CRASH = member("crash", {"ALT": "low"}, ramp(60, 0.99, 20), failure=True)
TRAFFIC = member("traffic-on-final", {"TRAFFIC": "final"}, ramp(60, 0.02))
GEAR_UP = member("gear-up", {"GEAR": "up"}, ramp(1000, 0.001))


def flight_sets():
    """(pre, members) pairs for the flight dynamics, ignoring GEAR."""
    sets = []
    for loc, head, obs in itertools.product(["FIX3", "FIX5", "FIX6", "FIX4"], ["S", "W"],
                                            ["FIX5", "FIX4"]):
        pre = {"LOC": loc, "HEAD": head, "OBS": obs, "ALT": "ok", "TRAFFIC": "none"}
        members = []
        if loc == "FIX3" and head == "S":
            members.append(member("arrive-FIX5", {"LOC": "FIX5"}, ramp(60, 0.94)))
        elif loc == "FIX3" and obs == "FIX4":
            members.append(member("arrive-FIX4", {"LOC": "FIX4"}, ramp(40, 0.94)))
            members.append(TRAFFIC)
        elif loc == "FIX5":
            members.append(member("arrive-FIX6", {"LOC": "FIX6"}, ramp(60, 0.94)))
        elif loc == "FIX6" and obs == "FIX4":
            members.append(member("arrive-FIX4", {"LOC": "FIX4"}, ramp(40, 0.94)))
            members.append(TRAFFIC)
        members.append(LOSE_ALT)
        sets.append((pre, members))
    sets.append(({"ALT": "ok", "TRAFFIC": "final"}, [LOSE_ALT]))
    sets.append(({"ALT": "low"}, [CRASH]))
    return sets


def flight_doc(name, with_gear):
    sets = []
    for pre, members in flight_sets():
        if with_gear:
            sets.append({"pre": {**pre, "GEAR": "down"}, "members": members + [GEAR_UP]})
            sets.append({"pre": {**pre, "GEAR": "up"}, "members": members})
        else:
            sets.append({"pre": pre, "members": members})
    return {
        "name": name,
        "features": [
            {"name": "LOC", "values": ["FIX3", "FIX5", "FIX6", "FIX4"]},
            {"name": "HEAD", "values": ["S", "W"]},
            {"name": "OBS", "values": ["FIX5", "FIX4"]},
            {"name": "ALT", "values": ["ok", "low"]},
            {"name": "GEAR", "values": ["down", "up"]},
            {"name": "TRAFFIC", "values": ["none", "final"]},
        ],
        "initial_states": [
            {"LOC": "FIX3", "HEAD": "S", "OBS": "FIX5", "ALT": "ok", "GEAR": "down",
             "TRAFFIC": "none"}
        ],
        "goal": {"LOC": "FIX4", "HEAD": "W", "OBS": "FIX4"},
        "actions": [
            action("climb", {"ALT": "low"}, {"ALT": "ok"}, 1.0, 0.05, 0.1),
            action("set-obs-FIX4", {"OBS": "FIX5"}, {"OBS": "FIX4"}, 0.5, 0.05, 0.05),
            action("turn-left-to-W", {"HEAD": "S"}, {"HEAD": "W"}, 2.0, 0.05, 0.1),
        ],
        "temporal_sets": sets,
    }


# -- single-feature micro domain ---------------------------------------------

M1 = {
    "name": "micro_m1",
    "features": [{"name": "ALT", "values": ["ok", "low"]}],
    "initial_states": [{"ALT": "low"}],
    "goal": {"ALT": "ok"},
    "actions": [action("climb", {"ALT": "low"}, {"ALT": "ok"}, 1.0, 0.05, 0.1)],
    "temporal_sets": [
        {"pre": {"ALT": "low"},
         "members": [member("crash", {"ALT": "low"},
                            {"kind": "piecewise", "knots": [[5, 0], [10, 0.5]],
                             "asymptote": 0.5}, failure=True)]}
    ],
}


# -- low-probability branch that overloads the processor ---------------------

TORNADO = {
    "name": "tornado",
    "features": [
        {"name": "POS", "values": ["a", "b", "c"]},
        {"name": "ALT", "values": ["ok", "low"]},
        {"name": "WX", "values": ["clear", "tornado"]},
    ],
    "initial_states": [{"POS": "a", "ALT": "ok", "WX": "clear"}],
    "goal": {"POS": "c"},
    "actions": [
        action("climb", {"ALT": "low"}, {"ALT": "ok"}, 1.0, 0.05, 0.1),
        action("escape-tornado", {"WX": "tornado"}, {"WX": "clear"}, 0.5, 0.3, 0.5),
    ],
    "temporal_sets": [
        {"pre": {"POS": "a", "ALT": "ok", "WX": "clear"},
         "members": [member("fly-a-b", {"POS": "b"}, ramp(60, 0.95)),
                     member("lose-altitude", {"ALT": "low"}, ramp(300, 0.04)),
                     member("fly-into-tornado", {"WX": "tornado"}, ramp(600, 0.001))]},
        {"pre": {"POS": "b", "ALT": "ok", "WX": "clear"},
         "members": [member("fly-b-c", {"POS": "c"}, ramp(60, 0.95)),
                     member("lose-altitude", {"ALT": "low"}, ramp(300, 0.04))]},
        {"pre": {"ALT": "low", "WX": "clear"},
         "members": [member("crash", {"ALT": "low"}, ramp(60, 0.99, 20), failure=True)]},
        {"pre": {"WX": "tornado"},
         "members": [member("break-up", {"WX": "tornado"}, ramp(4, 1.0, 2), failure=True)]},
    ],
}


# -- acyclic micro domains (exhaustive-oracle checks) -------------------------

DAG_RELAY = {
    "name": "dag_relay",
    "features": [
        {"name": "STAGE", "values": ["s0", "s1", "s2", "s3"]},
        {"name": "FUEL", "values": ["full", "low"]},
    ],
    "initial_states": [{"STAGE": "s0", "FUEL": "full"}, {"STAGE": "s0", "FUEL": "low"}],
    "goal": {"STAGE": "s3"},
    "actions": [
        action("push-on", {"STAGE": "s1", "FUEL": "low"}, {"STAGE": "s2"}, 1.0, 0.05, 0.1),
        action("boost", {"STAGE": "s2"}, {"STAGE": "s3"}, 2.0, 0.1, 0.2),
    ],
    "temporal_sets": [
        {"pre": {"STAGE": "s0", "FUEL": "full"},
         "members": [member("adv-0-1", {"STAGE": "s1"}, ramp(10, 0.3)),
                     member("drain", {"FUEL": "low"}, ramp(20, 0.05))]},
        {"pre": {"STAGE": "s0", "FUEL": "low"},
         "members": [member("adv-0-1", {"STAGE": "s1"}, ramp(10, 0.3))]},
        {"pre": {"STAGE": "s1", "FUEL": "low"},
         "members": [member("stall", {"FUEL": "low"}, ramp(15, 0.5, 5), failure=True),
                     member("adv-1-2", {"STAGE": "s2"}, ramp(30, 0.4))]},
        {"pre": {"STAGE": "s1", "FUEL": "full"},
         "members": [member("adv-1-2", {"STAGE": "s2"}, ramp(30, 0.3))]},
        {"pre": {"STAGE": "s2"},
         "members": [member("adv-2-3", {"STAGE": "s3"}, ramp(20, 0.3))]},
    ],
}

DAG_FORK = {
    "name": "dag_fork",
    "features": [
        {"name": "STEP", "values": ["0", "1", "2", "3"]},
        {"name": "ROUTE", "values": ["left", "right"]},
        {"name": "LAMP", "values": ["off", "on"]},
    ],
    "initial_states": [{"STEP": "0", "ROUTE": "left", "LAMP": "off"}],
    "goal": {"STEP": "3", "LAMP": "on"},
    "actions": [
        action("lamp-on", {"LAMP": "off", "STEP": "1"}, {"LAMP": "on", "STEP": "2"}, 0.5, 0.02, 0.03),
    ],
    "temporal_sets": [
        {"pre": {"STEP": "0"},
         "members": [member("go-left", {"STEP": "1", "ROUTE": "left"}, ramp(10, 0.5)),
                     member("go-right", {"STEP": "1", "ROUTE": "right"}, ramp(10, 0.3))]},
        {"pre": {"STEP": "1", "ROUTE": "left"},
         "members": [member("step-1-2", {"STEP": "2"}, ramp(100, 0.5))]},
        {"pre": {"STEP": "1", "ROUTE": "right"},
         "members": [member("step-1-2", {"STEP": "2"},
                            {"kind": "delayed_exponential", "t0": 0.5, "lambda": 0.2,
                             "p_max": 0.6})]},
        {"pre": {"STEP": "2"},
         "members": [member("step-2-3", {"STEP": "3"}, ramp(10, 0.6))]},
    ],
}

DAG_GUARD = {
    "name": "dag_guard",
    "features": [
        {"name": "LEG", "values": ["l0", "l1", "l2"]},
        {"name": "ICE", "values": ["no", "yes"]},
        {"name": "HEAT", "values": ["off", "on"]},
    ],
    "initial_states": [{"LEG": "l0", "ICE": "no", "HEAT": "off"}],
    "goal": {"LEG": "l2"},
    "actions": [
        action("deice-and-go", {"ICE": "yes", "LEG": "l0"}, {"ICE": "no", "HEAT": "on", "LEG": "l1"},
               0.5, 0.05, 0.05),
        action("deice", {"ICE": "yes", "LEG": "l1"}, {"ICE": "no", "LEG": "l2"}, 0.5, 0.05, 0.05),
    ],
    "temporal_sets": [
        {"pre": {"LEG": "l0", "ICE": "no"},
         "members": [member("icing", {"ICE": "yes"}, ramp(50, 0.3)),
                     member("fly-0-1", {"LEG": "l1"}, ramp(50, 0.2))]},
        {"pre": {"LEG": "l0", "ICE": "yes"},
         "members": [member("ice-crash", {"ICE": "yes"},
                             {"kind": "delayed_exponential", "t0": 3.0, "lambda": 0.5,
                              "p_max": 0.7}, failure=True)]},
        {"pre": {"LEG": "l1", "ICE": "no"},
         "members": [member("icing", {"ICE": "yes"}, ramp(50, 0.15)),
                     member("fly-1-2", {"LEG": "l2"}, ramp(50, 0.1))]},
        {"pre": {"LEG": "l1", "ICE": "yes"},
         "members": [member("ice-crash", {"ICE": "yes"}, ramp(12, 0.8, 2), failure=True),
                     member("fly-1-2", {"LEG": "l2"}, ramp(50, 0.1))]},
    ],
}


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    write("flight_fix3_fix4.json", flight_doc("flight_fix3_fix4", with_gear=False))
    write("flight_gear.json", flight_doc("flight_gear", with_gear=True))
    write("micro_m1.json", M1)
    write("tornado.json", TORNADO)
    write("dag_relay.json", DAG_RELAY)
    write("dag_fork.json", DAG_FORK)
    write("dag_guard.json", DAG_GUARD)
