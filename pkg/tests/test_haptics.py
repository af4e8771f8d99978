"""Tests for the virtual environment and haptic force laws.

Oracles: analytic cap/lens volumes against Monte Carlo point sampling;
Newton's third law on every contact; impulse-sum check for dynamic scene
objects; FFT of a sliding-texture log.
"""
import numpy as np
import pytest

from maglev_twin.geometry import Pose, quat_from_axis_angle
from maglev_twin.haptics import (SCREEN_THICKNESS, Contact, Scene,
                                 SceneFormatError, SceneObject, Texture,
                                 VirtualTool, contact_wrench, detect_contacts,
                                 load_scene, scene_from_dict,
                                 sphere_overlap_volume, spherical_cap_volume,
                                 step_scene, tool_pose_from_handle)

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])
STILL = (np.zeros(3), np.zeros(3))


def floor_plane(**kw):
    return SceneObject("floor", "plane", Pose(np.zeros(3), IDENTITY), **kw)


def tool_at(z, r=0.005):
    return VirtualTool(tip_radius=r), Pose(np.array([0.0, 0.0, z]), IDENTITY)


class TestToolMapping:
    def test_interaction_height_offsets_screen(self):
        handle = Pose(np.array([0.0, 0.0, 0.040]), IDENTITY)
        tool = tool_pose_from_handle(handle)
        assert tool.position[2] == pytest.approx(0.032)

    def test_zero_extension_shifts_by_screen_only(self):
        handle = Pose(np.array([0.01, -0.02, 0.025]), IDENTITY)
        tool = tool_pose_from_handle(handle, extension=0.0)
        assert np.allclose(tool.position,
                           handle.position - [0, 0, SCREEN_THICKNESS])

    def test_rotation_passes_through(self):
        q = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), 0.4)
        handle = Pose(np.array([0.0, 0.0, 0.03]), q)
        tool = tool_pose_from_handle(handle, extension=0.01)
        assert np.allclose(tool.quaternion, q)

    def test_extension_follows_handle_axis(self):
        # handle pitched 90 degrees: its -z maps to world +x
        q = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), np.pi / 2)
        handle = Pose(np.array([0.0, 0.0, 0.03]), q)
        tool = tool_pose_from_handle(handle, extension=0.01)
        assert tool.position[0] == pytest.approx(-0.01)
        assert tool.position[2] == pytest.approx(0.03 - SCREEN_THICKNESS)

    def test_tip_radius_validated(self):
        with pytest.raises(ValueError):
            VirtualTool(tip_radius=0.0)


class TestDetectContacts:
    def test_sphere_plane_cap(self):
        tool, pose = tool_at(0.004)
        scene = Scene([floor_plane()])
        (c,) = detect_contacts(tool, pose, scene)
        assert c.depth == pytest.approx(0.001)
        assert np.allclose(c.normal, [0, 0, 1])
        expected = np.pi * 0.001 ** 2 * (3 * 0.005 - 0.001) / 3
        assert c.volume == pytest.approx(expected, rel=1e-12)

    def test_no_overlap_empty(self):
        tool, pose = tool_at(0.006)
        assert detect_contacts(tool, pose, Scene([floor_plane()])) == []

    def test_concentric_spheres_full_containment(self):
        tool, pose = tool_at(0.02, r=0.004)
        ball = SceneObject("ball", "sphere",
                           Pose(np.array([0.0, 0.0, 0.02]), IDENTITY),
                           radius=0.02)
        (c,) = detect_contacts(tool, pose, Scene([ball]))
        assert c.depth == pytest.approx(0.024)
        assert c.volume == pytest.approx(4 / 3 * np.pi * 0.004 ** 3)

    def test_sphere_box_face(self):
        box = SceneObject("box", "box", Pose(np.zeros(3), IDENTITY),
                          half_extents=np.array([0.02, 0.02, 0.01]))
        tool, pose = tool_at(0.014)
        (c,) = detect_contacts(tool, pose, Scene([box]))
        assert c.depth == pytest.approx(0.001)
        assert np.allclose(c.normal, [0, 0, 1])

    def test_volumes_match_monte_carlo(self, rng):
        # 20 random sphere-plane / sphere-sphere overlaps vs point sampling
        n = 1_500_000
        for k in range(20):
            r = rng.uniform(0.003, 0.008)
            if k % 2 == 0:
                depth = rng.uniform(0.2, 0.9) * r
                obj = floor_plane()
                center = np.array([0.0, 0.0, r - depth])
                analytic = spherical_cap_volume(r, depth)

                def inside(pts):
                    return pts[:, 2] < 0.0
            else:
                r2 = rng.uniform(0.004, 0.012)
                dist = rng.uniform(abs(r2 - r) + 0.3 * min(r, r2),
                                   r + r2 - 0.2 * min(r, r2))
                obj = SceneObject("b", "sphere", Pose(np.zeros(3), IDENTITY),
                                  radius=r2)
                center = np.array([0.0, 0.0, dist])
                analytic = sphere_overlap_volume(r, r2, dist)

                def inside(pts):
                    return np.einsum("ij,ij->i", pts, pts) < r2 ** 2
            tool = VirtualTool(tip_radius=r)
            (c,) = detect_contacts(tool, Pose(center, IDENTITY), Scene([obj]))
            pts = rng.normal(size=(n, 3))
            pts /= np.linalg.norm(pts, axis=1)[:, None]
            pts *= (rng.uniform(0, 1, size=n) ** (1 / 3) * r)[:, None]
            mc = inside(pts + center).mean() * 4 / 3 * np.pi * r ** 3
            assert c.volume == pytest.approx(mc, rel=0.01)


class TestContactWrench:
    def test_penalty_magnitude(self):
        tool, pose = tool_at(0.004)
        scene = Scene([floor_plane(stiffness=2000.0, damping=0.0)])
        contacts = detect_contacts(tool, pose, scene)
        w, _ = contact_wrench(pose, contacts, STILL, scene)
        assert w.force[2] == pytest.approx(2.0)

    def test_coulomb_limit(self):
        tool, pose = tool_at(0.004)
        scene = Scene([floor_plane(stiffness=2000.0, damping=0.0,
                                   friction=0.3)])
        contacts = detect_contacts(tool, pose, scene)
        twist = (np.array([0.5, 0.0, 0.0]), np.zeros(3))  # v_t >> v_eps
        w, _ = contact_wrench(pose, contacts, twist, scene)
        assert abs(w.force[0]) == pytest.approx(0.6, rel=1e-4)
        assert w.force[0] < 0  # opposes motion

    def test_friction_cone_strict(self, rng):
        tool, pose = tool_at(0.0042)
        scene = Scene([floor_plane(stiffness=1500.0, damping=3.0,
                                   friction=0.4)])
        contacts = detect_contacts(tool, pose, scene)
        for _ in range(50):
            twist = (rng.normal(size=3) * 0.05, rng.normal(size=3) * 2.0)
            w, _ = contact_wrench(pose, contacts, twist, scene)
            fn = w.force[2]
            ft = np.linalg.norm(w.force[:2])
            assert ft <= 0.4 * fn * (1 + 1e-12)

    def test_newtons_third_law(self, rng):
        # several simultaneous contacts: forces and moments about the world
        # origin cancel exactly
        tool = VirtualTool(tip_radius=0.006)
        pose = Pose(np.array([0.0, 0.0, 0.004]), IDENTITY)
        ball = SceneObject("ball", "sphere",
                           Pose(np.array([0.007, 0.0, 0.004]), IDENTITY),
                           radius=0.004, mass=0.05, friction=0.2)
        scene = Scene([floor_plane(friction=0.3), ball])
        contacts = detect_contacts(tool, pose, scene)
        assert len(contacts) == 2
        twist = (np.array([0.03, -0.01, -0.02]), np.array([1.0, 0.5, -0.2]))
        w, reactions = contact_wrench(pose, contacts, twist, scene)
        total_f = w.force.copy()
        total_m = w.torque + np.cross(pose.position, w.force)
        for idx, r in reactions.items():
            obj = scene.objects[idx]
            total_f += r.force
            total_m += r.torque + np.cross(obj.pose.position, r.force)
        assert np.max(np.abs(total_f)) <= 1e-12
        assert np.max(np.abs(total_m)) <= 1e-12

    def test_damping_only_on_approach(self):
        tool, pose = tool_at(0.004)
        scene = Scene([floor_plane(stiffness=2000.0, damping=10.0)])
        contacts = detect_contacts(tool, pose, scene)
        toward = (np.array([0.0, 0.0, -0.1]), np.zeros(3))
        away = (np.array([0.0, 0.0, 0.1]), np.zeros(3))
        f_in, _ = contact_wrench(pose, contacts, toward, scene)
        f_out, _ = contact_wrench(pose, contacts, away, scene)
        assert f_in.force[2] == pytest.approx(2.0 + 1.0)
        assert f_out.force[2] == pytest.approx(2.0)  # no sticky pull

    def test_no_energy_extraction_over_cycle(self):
        # sinusoidal penetration cycle at zero tangential speed, texture off:
        # the contact does non-negative net work against the tool
        tool = VirtualTool(tip_radius=0.005)
        scene = Scene([floor_plane(stiffness=2500.0, damping=4.0)])
        dt = 5e-4
        work_on_tool = 0.0
        steps = 4000  # two full cycles
        for k in range(steps):
            t = k * dt
            z = 0.0045 + 0.001 * np.cos(2 * np.pi * t)
            vz = -0.001 * 2 * np.pi * np.sin(2 * np.pi * t)
            pose = Pose(np.array([0.0, 0.0, z]), IDENTITY)
            contacts = detect_contacts(tool, pose, scene)
            w, _ = contact_wrench(pose, contacts,
                                  (np.array([0.0, 0.0, vz]), np.zeros(3)),
                                  scene)
            work_on_tool += w.force[2] * vz * dt
        assert work_on_tool <= 1e-9

    def test_texture_modulates_at_sliding_frequency(self):
        # 20 mm/s over a 2 mm wavelength: normal force oscillates at 10 Hz
        tool = VirtualTool(tip_radius=0.005)
        plane = floor_plane(stiffness=2000.0, damping=0.0,
                            texture=Texture(2e-4, 2e-3, True))
        scene = Scene([plane])
        dt = 5e-4
        n = 4000
        log = np.empty(n)
        for k in range(n):
            x = 0.02 * k * dt
            pose = Pose(np.array([x, 0.0, 0.004]), IDENTITY)
            contacts = detect_contacts(tool, pose, scene)
            w, _ = contact_wrench(pose, contacts,
                                  (np.array([0.02, 0.0, 0.0]), np.zeros(3)),
                                  scene)
            log[k] = w.force[2]
        spectrum = np.abs(np.fft.rfft(log - log.mean()))
        freqs = np.fft.rfftfreq(n, dt)
        assert freqs[np.argmax(spectrum)] == pytest.approx(10.0, abs=0.3)

    def test_volume_law_available(self):
        tool, pose = tool_at(0.004)
        scene = Scene([floor_plane()])
        contacts = detect_contacts(tool, pose, scene)
        w, _ = contact_wrench(pose, contacts, STILL, scene, law="volume",
                              volume_gain=1e5)
        assert w.force[2] == pytest.approx(1e5 * contacts[0].volume ** (1 / 3))
        with pytest.raises(ValueError):
            contact_wrench(pose, contacts, STILL, scene, law="area")


class TestStepScene:
    def test_no_forces_no_gravity_unchanged(self):
        ball = SceneObject("ball", "sphere",
                           Pose(np.array([0.0, 0.0, 0.05]), IDENTITY),
                           radius=0.01, mass=0.05)
        scene = Scene([ball], gravity=np.zeros(3))
        stepped = step_scene(scene, {}, 5e-4)
        assert np.array_equal(stepped.objects[0].pose.position,
                              ball.pose.position)
        assert np.array_equal(stepped.objects[0].velocity, ball.velocity)

    def test_static_objects_never_move(self):
        scene = Scene([floor_plane()])
        stepped = step_scene(scene, {}, 5e-4)
        assert stepped.objects[0] is scene.objects[0]

    def test_resting_ball_equilibrium_penetration(self):
        # steady-state depth of a supported ball equals m g / k
        ball = SceneObject("ball", "sphere",
                           Pose(np.array([0.0, 0.0, 0.0099]), IDENTITY),
                           radius=0.01, mass=0.02)
        scene = Scene([ball, floor_plane(stiffness=3000.0, damping=20.0)])
        for _ in range(6000):
            scene = step_scene(scene, {}, 5e-4)
        depth = 0.01 - scene.objects[0].pose.position[2]
        assert depth == pytest.approx(0.02 * 9.81 / 3000.0, abs=1e-6)

    def test_impulse_oracle_for_pushed_ball(self):
        # gravity off: final velocity equals the summed impulse / mass
        tool = VirtualTool(tip_radius=0.005)
        ball = SceneObject("ball", "sphere",
                           Pose(np.array([0.009, 0.0, 0.0]), IDENTITY),
                           radius=0.005, mass=0.04, stiffness=1500.0,
                           damping=2.0)
        scene = Scene([ball], gravity=np.zeros(3))
        dt = 5e-4
        impulse = np.zeros(3)
        for k in range(400):
            pose = Pose(np.array([0.002 * k * dt / 0.2 * 2, 0.0, 0.0]),
                        IDENTITY)
            contacts = detect_contacts(tool, pose, scene)
            _, reactions = contact_wrench(
                pose, contacts, (np.array([0.01, 0.0, 0.0]), np.zeros(3)),
                scene)
            if 0 in reactions:
                impulse += reactions[0].force * dt
            scene = step_scene(scene, reactions, dt)
        v = scene.objects[0].velocity
        assert np.linalg.norm(v - impulse / 0.04) <= 0.01 * max(
            np.linalg.norm(impulse / 0.04), 1e-12)
        assert v[0] > 0  # the push moved it forward


class TestSceneFormat:
    def test_round_trip_from_dict(self, tmp_path):
        data = {
            "gravity": [0.0, 0.0, -9.81],
            "objects": [
                {"name": "floor", "shape": "plane", "friction": 0.3,
                 "texture": {"amplitude": 2e-4, "wavelength": 2e-3,
                             "enabled": True}},
                {"name": "ball", "shape": "sphere", "mass": 0.05,
                 "position": [0.0, 0.0, 0.02], "radius": 0.01},
            ],
        }
        path = tmp_path / "scene.json"
        path.write_text(__import__("json").dumps(data))
        scene = load_scene(path)
        assert len(scene.objects) == 2
        assert scene.objects[0].texture.enabled
        assert scene.objects[1].dynamic
        assert not scene.objects[0].dynamic

    def test_unknown_scene_field_rejected(self):
        with pytest.raises(SceneFormatError, match="wind"):
            scene_from_dict({"wind": [1, 0, 0], "objects": []})

    def test_unknown_object_field_rejected(self):
        with pytest.raises(SceneFormatError, match="color"):
            scene_from_dict({"objects": [{"shape": "plane", "color": "red"}]})

    def test_unknown_texture_field_rejected(self):
        with pytest.raises(SceneFormatError, match="phase"):
            scene_from_dict({"objects": [{"shape": "plane",
                                          "texture": {"phase": 0.0}}]})

    def test_bad_shape_rejected(self):
        with pytest.raises(SceneFormatError):
            scene_from_dict({"objects": [{"shape": "torus"}]})

    def test_invalid_texture_wavelength(self):
        with pytest.raises(ValueError):
            Texture(1e-4, 0.0, True)
