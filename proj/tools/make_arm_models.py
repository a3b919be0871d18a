#!/usr/bin/env python3
"""Writes models/arm7.json and models/planar3.json.

Kinematics use modified DH (Craig): T_i = RotX(alpha_{i-1}) TransX(a_{i-1}) RotZ(theta_i + offset_i) TransZ(d_i),
with each joint row holding (a_{i-1}, alpha_{i-1}, d_i, offset_i). Collision spheres are placed along the segment
from each frame origin to the next one plus explicit hand spheres. The reference block is FK at q = 0, computed
here independently of the C++ code.
"""
import json
import math
import pathlib

import numpy as np


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def trans(x, y, z):
    t = np.eye(4)
    t[:3, 3] = [x, y, z]
    return t


def quat_wxyz(r):
    w = math.sqrt(max(0.0, 1 + r[0, 0] + r[1, 1] + r[2, 2])) / 2
    x = math.sqrt(max(0.0, 1 + r[0, 0] - r[1, 1] - r[2, 2])) / 2
    y = math.sqrt(max(0.0, 1 - r[0, 0] + r[1, 1] - r[2, 2])) / 2
    z = math.sqrt(max(0.0, 1 - r[0, 0] - r[1, 1] + r[2, 2])) / 2
    x = math.copysign(x, r[2, 1] - r[1, 2])
    y = math.copysign(y, r[0, 2] - r[2, 0])
    z = math.copysign(z, r[1, 0] - r[0, 1])
    return [w, x, y, z]


def pose_of(m):
    return {"quat_wxyz": quat_wxyz(m[:3, :3]), "t_xyz": list(m[:3, 3])}


def pose_matrix(p):
    w, x, y, z = p["quat_wxyz"]
    r = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = p["t_xyz"]
    return m


def frames(model, q):
    t = pose_matrix(model["base"])
    out = [t]
    for j, qi in zip(model["joints"], q):
        t = t @ rot_x(j["alpha"]) @ trans(j["a"], 0, 0) @ rot_z(qi + j["theta_offset"]) @ trans(0, 0, j["d"])
        out.append(t)
    return out


def add_reference(model):
    q = [0.0] * len(model["joints"])
    f = frames(model, q)
    ee = f[model["end_effector"]["link"]] @ pose_matrix(model["end_effector"])
    centers = []
    for s in model["spheres"]:
        c = f[s["link"]] @ np.array(s["center"] + [1.0])
        centers.append(list(c[:3]))
    model["reference"] = {
        "q": q,
        "link_origins": [list(m[:3, 3]) for m in f],
        "ee_position": list(ee[:3, 3]),
        "ee_quat_wxyz": quat_wxyz(ee[:3, :3]),
        "sphere_centers": centers,
    }


def segment_spheres(link, start, end, radius, count):
    start, end = np.array(start, float), np.array(end, float)
    out = []
    for k in range(count):
        t = (k + 0.5) / count
        out.append({"link": link, "center": list(start + t * (end - start)), "radius": radius})
    return out


def next_origin(joint):
    # origin of frame i+1 expressed in frame i
    return [joint["a"], -math.sin(joint["alpha"]) * joint["d"], math.cos(joint["alpha"]) * joint["d"]]


def arm7():
    pi = math.pi
    rows = [  # a, alpha, d, lower, upper, vmax, amax
        (0.0, 0.0, 0.333, -2.8973, 2.8973, 2.175, 15.0),
        (0.0, -pi / 2, 0.0, -1.7628, 1.7628, 2.175, 7.5),
        (0.0, pi / 2, 0.316, -2.8973, 2.8973, 2.175, 10.0),
        (0.0825, pi / 2, 0.0, -3.0718, -0.0698, 2.175, 12.5),
        (-0.0825, -pi / 2, 0.384, -2.8973, 2.8973, 2.61, 15.0),
        (0.0, pi / 2, 0.0, -0.0175, 3.7525, 2.61, 20.0),
        (0.088, pi / 2, 0.0, -2.8973, 2.8973, 2.61, 20.0),
    ]
    joints = [
        {"a": a, "alpha": al, "d": d, "theta_offset": 0.0, "lower": lo, "upper": hi,
         "max_velocity": v, "max_acceleration": acc}
        for a, al, d, lo, hi, v, acc in rows
    ]
    base = trans(0.0, -0.42, 0.0) @ rot_z(pi / 2)
    # tool point: flange 0.107 past frame 7, hand rotated -45 deg, fingertip center 0.1034 further
    ee = trans(0, 0, 0.107) @ rot_z(-pi / 4) @ trans(0, 0, 0.1034)
    spheres = []
    spheres += [{"link": 0, "center": [0.0, 0.0, 0.09], "radius": 0.07},
                {"link": 0, "center": [-0.06, 0.0, 0.09], "radius": 0.07}]
    # link 1: from the base top up to the shoulder
    spheres += segment_spheres(1, [0, 0, -0.19], [0, 0, -0.02], 0.065, 4)
    spheres += [{"link": 1, "center": [0.0, 0.0, 0.0], "radius": 0.07}]
    # links 2..7 along the frame-to-frame segments
    radii = {2: 0.065, 3: 0.06, 4: 0.06, 5: 0.055, 6: 0.055, 7: 0.05}
    counts = {2: 6, 3: 3, 4: 9, 5: 1, 6: 3, 7: 2}
    for i in range(2, 8):
        start = [0.0, 0.0, 0.0]
        end = next_origin(joints[i]) if i < 7 else [0.0, 0.0, 0.107]
        if np.linalg.norm(end) < 1e-12:
            spheres.append({"link": i, "center": start, "radius": radii[i]})
            continue
        spheres.append({"link": i, "center": start, "radius": radii[i]})
        spheres += segment_spheres(i, start, end, radii[i], counts[i])
    # elbow and wrist housings offset from the axis
    spheres += [{"link": 3, "center": [0.0825, 0.0, -0.05], "radius": 0.055},
                {"link": 4, "center": [0.0, 0.0, 0.05], "radius": 0.055},
                {"link": 5, "center": [0.0, 0.06, 0.0], "radius": 0.05},
                {"link": 5, "center": [0.0, 0.03, -0.08], "radius": 0.045},
                {"link": 5, "center": [0.0, 0.03, -0.16], "radius": 0.045},
                {"link": 5, "center": [0.0, 0.0, -0.24], "radius": 0.045},
                {"link": 6, "center": [0.0, 0.0, -0.05], "radius": 0.05},
                {"link": 6, "center": [0.0, 0.0, 0.05], "radius": 0.05}]
    # hand: palm across y, then two fingers, in frame 7 rotated by the hand yaw
    hand = rot_z(-pi / 4)
    def hand_point(x, y, z):
        return list((hand @ np.array([x, y, z, 1.0]))[:3])
    for y in (-0.0875, -0.0625, -0.0375, -0.0125, 0.0125, 0.0375, 0.0625, 0.0875):
        spheres.append({"link": 7, "center": hand_point(0, y, 0.107 + 0.035), "radius": 0.03})
    for y in (-0.04, 0.04):
        spheres.append({"link": 7, "center": hand_point(0, y, 0.107 + 0.075), "radius": 0.018})
    for y in (-0.04, 0.04):
        spheres.append({"link": 7, "center": hand_point(0, y, 0.107 + 0.058), "radius": 0.02})
    for y in (-0.02, 0.02):
        spheres.append({"link": 7, "center": hand_point(0, y, 0.107 + 0.09), "radius": 0.012})
    model = {
        "name": "arm7",
        "convention": "modified_dh",
        "base": pose_of(base),
        "joints": joints,
        "end_effector": dict(link=7, **pose_of(ee)),
        "spheres": spheres,
    }
    add_reference(model)
    return model


def planar3():
    joints = []
    for k in range(3):
        joints.append({"a": 0.0 if k == 0 else 0.2, "alpha": 0.0, "d": 0.0, "theta_offset": 0.0,
                       "lower": -2.6, "upper": 2.6, "max_velocity": 2.0, "max_acceleration": 10.0})
    base = trans(0.0, -0.3, 0.1)
    ee = trans(0.2, 0, 0)
    spheres = []
    for link in (1, 2, 3):
        spheres += segment_spheres(link, [0, 0, 0], [0.2, 0, 0], 0.03, 4)
    model = {
        "name": "planar3",
        "convention": "modified_dh",
        "base": pose_of(base),
        "joints": joints,
        "end_effector": dict(link=3, **pose_of(ee)),
        "spheres": spheres,
    }
    add_reference(model)
    return model


def main():
    out = pathlib.Path(__file__).resolve().parent.parent / "models"
    out.mkdir(exist_ok=True)
    for name, model in (("arm7", arm7()), ("planar3", planar3())):
        with open(out / f"{name}.json", "w") as f:
            json.dump(model, f, indent=1)
            f.write("\n")
        print(name, len(model["spheres"]), "spheres")


if __name__ == "__main__":
    main()
