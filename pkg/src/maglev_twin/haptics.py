"""Virtual environment: tool mapping, contacts, and haptic force laws.

The levitated handle maps to a spherical-tipped virtual tool below the
display screen.  Contacts against scene objects (planes, spheres, boxes)
are detected analytically; penalty normal forces with approach-only
damping, regularized Coulomb friction, and sinusoidal surface texture
produce the rendered wrench, with equal-and-opposite reactions driving
dynamic scene objects.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose
from .magnetics import Wrench

SCREEN_THICKNESS = 0.008     # m, top of the display glass
FRICTION_V_EPS = 1.0e-3      # m/s, tanh regularization speed
TEXTURE_AMPLITUDE = 2.0e-4   # m
TEXTURE_WAVELENGTH = 2.0e-3  # m
SCENE_GRAVITY = np.array([0.0, 0.0, -9.81])

_SHAPES = ("plane", "sphere", "box")


class SceneFormatError(ValueError):
    """A scene description contained unknown or malformed fields."""


@dataclass
class VirtualTool:
    """Spherical-tipped tool; the shaft is visual only."""

    tip_radius: float = 0.005
    shaft_length: float = 0.05
    extension: float = 0.0

    def __post_init__(self):
        if self.tip_radius <= 0:
            raise ValueError("tip radius must be positive")


@dataclass
class Texture:
    amplitude: float = TEXTURE_AMPLITUDE
    wavelength: float = TEXTURE_WAVELENGTH
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and self.wavelength <= 0:
            raise ValueError("texture wavelength must be positive")


@dataclass
class SceneObject:
    """Rigid scene element; ``mass = inf`` marks it static."""

    name: str
    shape: str
    pose: Pose
    mass: float = np.inf
    stiffness: float = 2000.0
    damping: float = 5.0
    friction: float = 0.0
    radius: float = 0.01            # spheres
    half_extents: np.ndarray = field(
        default_factory=lambda: np.array([0.01, 0.01, 0.01]))  # boxes
    texture: Texture = field(default_factory=Texture)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.shape not in _SHAPES:
            raise SceneFormatError(f"unknown shape {self.shape!r}")
        if self.stiffness <= 0 or self.damping < 0 or self.friction < 0:
            raise ValueError("need stiffness > 0, damping >= 0, friction >= 0")

    @property
    def dynamic(self) -> bool:
        return np.isfinite(self.mass)


@dataclass
class Scene:
    objects: list
    gravity: np.ndarray = field(default_factory=lambda: SCENE_GRAVITY.copy())

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)


@dataclass
class Contact:
    """Tool-object overlap; the normal points from the object into the tool."""

    depth: float
    normal: np.ndarray
    point: np.ndarray
    volume: float
    object_index: int


def tool_pose_from_handle(handle_pose: Pose,
                          screen_thickness: float = SCREEN_THICKNESS,
                          extension: float = 0.0) -> Pose:
    """Rigid map from handle to tool: drop by the screen glass thickness,
    then extend along the handle's own -z axis."""
    offset = handle_pose.rotation() @ np.array([0.0, 0.0, -extension])
    position = handle_pose.position + offset \
        - np.array([0.0, 0.0, screen_thickness])
    return Pose(position, handle_pose.quaternion.copy())


def spherical_cap_volume(radius: float, depth: float) -> float:
    d = min(max(depth, 0.0), 2.0 * radius)
    return np.pi * d * d * (3.0 * radius - d) / 3.0


def sphere_overlap_volume(r1: float, r2: float, distance: float) -> float:
    """Lens volume of two intersecting spheres; handles containment."""
    if distance >= r1 + r2:
        return 0.0
    if distance <= abs(r1 - r2):
        return 4.0 / 3.0 * np.pi * min(r1, r2) ** 3
    d = distance
    return (np.pi * (r1 + r2 - d) ** 2
            * (d * d + 2.0 * d * (r1 + r2) + 6.0 * r1 * r2
               - 3.0 * (r1 * r1 + r2 * r2)) / (12.0 * d))


def _sphere_contact(center: np.ndarray, radius: float, obj: SceneObject,
                    index: int) -> Contact | None:
    """Overlap of a sphere against one scene object, or None."""
    R = obj.pose.rotation()
    if obj.shape == "plane":
        n = R[:, 2]
        height = float(np.dot(center - obj.pose.position, n))
        depth = radius - height
        if depth <= 0:
            return None
        point = center - n * (height + (radius - height) * 0.5)
        return Contact(depth, n, point, spherical_cap_volume(radius, depth),
                       index)
    if obj.shape == "sphere":
        delta = center - obj.pose.position
        dist = float(np.linalg.norm(delta))
        depth = radius + obj.radius - dist
        if depth <= 0:
            return None
        n = delta / dist if dist > 1e-12 else np.array([0.0, 0.0, 1.0])
        point = obj.pose.position + n * (obj.radius - 0.5 * depth)
        return Contact(depth, n, point,
                       sphere_overlap_volume(radius, obj.radius, dist), index)
    # box: closest point in the box frame
    local = R.T @ (center - obj.pose.position)
    clamped = np.clip(local, -obj.half_extents, obj.half_extents)
    if np.any(local != clamped):
        gap = local - clamped
        dist = float(np.linalg.norm(gap))
        depth = radius - dist
        if depth <= 0:
            return None
        n = R @ (gap / dist)
        point = obj.pose.position + R @ clamped
        return Contact(depth, n, point, spherical_cap_volume(radius, depth),
                       index)
    # center inside the box: push out along the least-penetrated face
    margins = obj.half_extents - np.abs(local)
    axis = int(np.argmin(margins))
    sign = 1.0 if local[axis] >= 0 else -1.0
    n_local = np.zeros(3)
    n_local[axis] = sign
    depth = radius + float(margins[axis])
    surface = local.copy()
    surface[axis] = sign * obj.half_extents[axis]
    return Contact(depth, R @ n_local, obj.pose.position + R @ surface,
                   spherical_cap_volume(radius, min(depth, 2 * radius)), index)


def detect_contacts(tool: VirtualTool, tool_pose: Pose,
                    scene: Scene) -> list:
    """All current overlaps between the tool tip and the scene."""
    out = []
    for i, obj in enumerate(scene.objects):
        c = _sphere_contact(tool_pose.position, tool.tip_radius, obj, i)
        if c is not None:
            out.append(c)
    return out


def _texture_depth(obj: SceneObject, contact: Contact) -> float:
    """Sinusoidal height modulation along the surface tangent coordinate."""
    if not obj.texture.enabled:
        return 0.0
    n = contact.normal
    t_ref = obj.pose.rotation()[:, 0]
    tangent = t_ref - np.dot(t_ref, n) * n
    norm = np.linalg.norm(tangent)
    if norm < 1e-9:
        t_ref = obj.pose.rotation()[:, 1]
        tangent = t_ref - np.dot(t_ref, n) * n
        norm = np.linalg.norm(tangent)
    tangent /= norm
    s = float(np.dot(contact.point - obj.pose.position, tangent))
    return obj.texture.amplitude * np.sin(2.0 * np.pi * s
                                          / obj.texture.wavelength)


def contact_wrench(tool_pose: Pose, contacts: list, tool_twist: tuple,
                   scene: Scene, law: str = "depth",
                   volume_gain: float = 4.0e5,
                   v_eps: float = FRICTION_V_EPS):
    """Penalty + friction + texture wrench on the tool, with reactions.

    Returns (tool Wrench about the tool tip center, dict object_index ->
    reaction Wrench about that object's origin).  The normal law is
    k * depth by default, or volume_gain * volume^(1/3) when ``law`` is
    "volume".  Damping resists approach only; friction is Coulomb with a
    tanh(|v_t| / v_eps) regularization, so |F_t| < mu |F_n| strictly.
    """
    if law not in ("depth", "volume"):
        raise ValueError("law must be 'depth' or 'volume'")
    v_tool, w_tool = (np.asarray(tool_twist[0], dtype=float),
                      np.asarray(tool_twist[1], dtype=float))
    force = np.zeros(3)
    torque = np.zeros(3)
    reactions = {}
    for c in contacts:
        obj = scene.objects[c.object_index]
        arm = c.point - tool_pose.position
        v_point = v_tool + np.cross(w_tool, arm)
        v_rel = v_point - obj.velocity
        v_n = float(np.dot(v_rel, c.normal))
        depth_eff = c.depth + _texture_depth(obj, c)
        if depth_eff <= 0 and law == "depth":
            continue
        if law == "depth":
            fn = obj.stiffness * depth_eff
        else:
            fn = volume_gain * c.volume ** (1.0 / 3.0)
        fn += obj.damping * max(0.0, -v_n)
        f = fn * c.normal
        v_t = v_rel - v_n * c.normal
        speed_t = float(np.linalg.norm(v_t))
        if obj.friction > 0 and speed_t > 0:
            f -= (obj.friction * fn * np.tanh(speed_t / v_eps)
                  * v_t / speed_t)
        force += f
        torque += np.cross(arm, f)
        r = reactions.setdefault(c.object_index,
                                 Wrench(np.zeros(3), np.zeros(3)))
        r.force -= f
        r.torque -= np.cross(c.point - obj.pose.position, f)
    return Wrench(force, torque), reactions


def step_scene(scene: Scene, reactions: dict, dt: float) -> Scene:
    """Advance dynamic objects one step under reactions, gravity, and
    object-object penalty contacts; static objects are unchanged."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    forces = {i: reactions[i].force.copy() if i in reactions else np.zeros(3)
              for i, obj in enumerate(scene.objects) if obj.dynamic}
    # object-object contacts: spheres against everything else
    for i, obj in enumerate(scene.objects):
        if obj.shape != "sphere":
            continue
        for j, other in enumerate(scene.objects):
            if i == j or other.shape == "sphere" and j < i:
                continue
            if not (obj.dynamic or other.dynamic):
                continue
            c = _sphere_contact(obj.pose.position, obj.radius, other, j)
            if c is None:
                continue
            v_rel = obj.velocity - other.velocity
            v_n = float(np.dot(v_rel, c.normal))
            fn = other.stiffness * c.depth + other.damping * max(0.0, -v_n)
            f = fn * c.normal
            if obj.dynamic:
                forces[i] = forces.get(i, np.zeros(3)) + f
            if other.dynamic:
                forces[j] = forces.get(j, np.zeros(3)) - f
    new_objects = []
    for i, obj in enumerate(scene.objects):
        if not obj.dynamic:
            new_objects.append(obj)
            continue
        accel = forces[i] / obj.mass + scene.gravity
        v = obj.velocity + dt * accel
        pos = obj.pose.position + dt * v
        new_objects.append(replace(obj, pose=Pose(pos, obj.pose.quaternion),
                                   velocity=v))
    return Scene(new_objects, scene.gravity)


_OBJECT_FIELDS = {"name", "shape", "position", "quaternion", "mass",
                  "stiffness", "damping", "friction", "radius",
                  "half_extents", "texture", "velocity"}
_TEXTURE_FIELDS = {"amplitude", "wavelength", "enabled"}
_SCENE_FIELDS = {"gravity", "objects"}


def scene_from_dict(data: dict) -> Scene:
    """Build a scene from parsed JSON; unknown fields are rejected."""
    unknown = set(data) - _SCENE_FIELDS
    if unknown:
        raise SceneFormatError(f"unknown scene fields: {sorted(unknown)}")
    objects = []
    for entry in data.get("objects", []):
        bad = set(entry) - _OBJECT_FIELDS
        if bad:
            raise SceneFormatError(f"unknown object fields: {sorted(bad)}")
        if "shape" not in entry:
            raise SceneFormatError("object entry missing 'shape'")
        tex = entry.get("texture", {})
        bad = set(tex) - _TEXTURE_FIELDS
        if bad:
            raise SceneFormatError(f"unknown texture fields: {sorted(bad)}")
        pose = Pose(np.asarray(entry.get("position", [0.0, 0.0, 0.0]), float),
                    np.asarray(entry.get("quaternion", [1.0, 0, 0, 0]), float))
        mass = entry.get("mass", "static")
        objects.append(SceneObject(
            name=entry.get("name", f"object{len(objects)}"),
            shape=entry["shape"],
            pose=pose,
            mass=np.inf if mass in ("static", None) else float(mass),
            stiffness=float(entry.get("stiffness", 2000.0)),
            damping=float(entry.get("damping", 5.0)),
            friction=float(entry.get("friction", 0.0)),
            radius=float(entry.get("radius", 0.01)),
            half_extents=np.asarray(entry.get("half_extents",
                                              [0.01, 0.01, 0.01]), float),
            texture=Texture(float(tex.get("amplitude", TEXTURE_AMPLITUDE)),
                            float(tex.get("wavelength", TEXTURE_WAVELENGTH)),
                            bool(tex.get("enabled", False))),
            velocity=np.asarray(entry.get("velocity", [0.0, 0.0, 0.0]), float)))
    return Scene(objects, np.asarray(data.get("gravity", SCENE_GRAVITY), float))


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))
