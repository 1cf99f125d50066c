"""Regenerates the golden transition fixtures from constants.toml.

The dynamics are re-implemented here independently of the Rust simulator.
Run from this directory: python3 generate.py
"""

import json
import math
import random

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

with open("../constants.toml", "rb") as f:
    C = tomllib.load(f)


def clip(v, lo, hi):
    return max(lo, min(hi, v))


def sign(v):
    return -1.0 if v < 0 else 1.0


def pendulum(s, a):
    c = C["pendulum"]
    x, xd, th, thd = s
    force = c["max_force"] * a[0]
    total = c["cart_mass"] + c["pole_mass"]
    if abs(th) >= c["fall_angle"]:
        xdd = force / total
    else:
        sin, cos = math.sin(th), math.cos(th)
        tmp = (force + c["pole_mass"] * c["half_length"] * thd * thd * sin) / total
        thdd = (c["gravity"] * sin - cos * tmp) / (
            c["half_length"] * (4.0 / 3.0 - c["pole_mass"] * cos * cos / total)
        )
        thd = clip(thd + c["dt"] * thdd, -c["max_pole_speed"], c["max_pole_speed"])
        th += c["dt"] * thd
        xdd = tmp - c["pole_mass"] * c["half_length"] * thdd * cos / total
    xd = clip(xd + c["dt"] * xdd, -c["max_cart_speed"], c["max_cart_speed"])
    x += c["dt"] * xd
    if abs(x) > c["x_limit"]:
        x, xd = sign(x) * c["x_limit"], 0.0
    if abs(th) >= c["fall_angle"]:
        th, thd = sign(th) * c["fall_angle"], 0.0
    reward = 1.0 if abs(th) < c["upright_angle"] else 0.0
    return [x, xd, th, thd], reward, False


def runner(direction):
    def step(s, a):
        c = C["runner"]
        v = s[1] + c["dt"] * (c["max_force"] * a[0] - c["drag"] * s[1])
        return [s[0] + c["dt"] * v, v], direction * v, False

    return step


def hopper(terminate):
    def step(s, a):
        c = C["hopper"]
        x, z, xd, zd = s
        push, thrust = a
        if z < c["leg_length"]:
            support = 1.0 + c["thrust_gain"] * thrust - c["push_cost"] * abs(push)
            spring = c["stiffness"] * (c["leg_length"] - z) * support
            xdd = c["push_force"] * push - c["drag"] * xd
            zdd = spring - c["gravity"] - c["contact_damping"] * zd
        else:
            xdd, zdd = -c["drag"] * xd, -c["gravity"]
        xd = clip(xd + c["dt"] * xdd, -c["max_speed"], c["max_speed"])
        zd = clip(zd + c["dt"] * zdd, -c["max_speed"], c["max_speed"])
        z = z + c["dt"] * zd
        if z < 0.0:
            z, zd = 0.0, 0.0
        fallen = z < c["fall_height"]
        bonus = (0.0 if terminate else -1.0) if fallen else c["alive_bonus"]
        return [x + c["dt"] * xd, z, xd, zd], xd + bonus, terminate and fallen

    return step


ENVS = {
    "pendulum": (pendulum, [2.6, 12.0, 1.7, 22.0], 1),
    "runner_forward": (runner(1.0), [5.0, 3.0], 1),
    "runner_backward": (runner(-1.0), [5.0, 3.0], 1),
    "hopper_lite_terminate": (hopper(True), [2.0, 1.2, 4.0, 6.0], 2),
    "hopper_lite_penalty": (hopper(False), [2.0, 1.2, 4.0, 6.0], 2),
}

rng = random.Random(20)
for name, (step, scale, adim) in ENVS.items():
    rows = []
    for _ in range(64):
        s = [rng.uniform(-k, k) for k in scale]
        if name.startswith("hopper"):
            s[1] = abs(s[1])
        # actions slightly beyond the bounds exercise the clipping
        a = [rng.uniform(-1.2, 1.2) for _ in range(adim)]
        ns, r, done = step(s, [clip(v, -1.0, 1.0) for v in a])
        rows.append({"state": s, "action": a, "next_state": ns, "reward": r, "terminated": done})
    with open(f"{name}.json", "w") as f:
        json.dump({"env": name, "version": C["version"], "transitions": rows}, f, indent=1)
        f.write("\n")
