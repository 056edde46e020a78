from __future__ import annotations

import math

import numpy as np
import pytest

from showrunner import quat
from showrunner.animation import crossfade, sample_clip
from showrunner.direction import (ACTOR, GOLEM, INACTIVE, LOOPING_IDLE, MASK,
                                  PLAYING_SALIENT, PUPPET, ControllerConfig,
                                  Cue, CueSheet, SalientIdlePlayer,
                                  StageAdjustment, classify_controller,
                                  controller_violations, cue_violations)
from showrunner.skeleton import Bone, Skeleton, bind_pose

from conftest import random_pose, simple_clip

IDENT = (1.0, 0.0, 0.0, 0.0)


def rig() -> Skeleton:
    return Skeleton("rig", [Bone("bone0", None), Bone("bone1", 0)])


def make_clips(skel, salient_duration=2.0, idle_duration=1.0):
    salient = simple_clip(skel, {"bone0": [
        (0.0, (0, 0, 0), IDENT),
        (salient_duration, (1, 0, 0), tuple(quat.from_yaw(0.8))),
    ]}, duration=salient_duration, name="bow", salience="salient")
    idle = simple_clip(skel, {"bone0": [
        (0.0, (0, 0.2, 0), IDENT),
        (idle_duration, (0, 0.2, 0), IDENT),
    ]}, duration=idle_duration, name="breathe", salience="idle", loopable=True)
    return {"bow": salient, "breathe": idle}


def make_cue(fade=0.0, adjust=None) -> Cue:
    return Cue(id="C1", avatar="a1", salient_clip="bow", idle_clip="breathe",
               fade_in=fade, adjust=adjust)


class TestCueSheet:
    def sheet(self):
        cues = [Cue(f"C{i}", "a1", "bow", "breathe", 0.0) for i in range(1, 4)]
        return CueSheet(cues)

    def test_go_in_order_then_exhausted(self):
        sheet = self.sheet()
        fired = [sheet.go() for _ in range(4)]
        assert [c.id for c in fired[:3]] == ["C1", "C2", "C3"]
        assert fired[3] is None
        assert sheet.pointer == 3

    def test_goto_then_go(self):
        sheet = self.sheet()
        sheet.goto("C2")
        assert sheet.go().id == "C2"

    def test_back_floors_at_zero(self):
        sheet = self.sheet()
        sheet.back()
        assert sheet.pointer == 0
        sheet.go()
        sheet.back()
        assert sheet.pointer == 0

    def test_pointer_stays_in_range(self, rng):
        sheet = self.sheet()
        for _ in range(200):
            op = rng.integers(0, 3)
            if op == 0:
                sheet.go()
            elif op == 1:
                sheet.back()
            else:
                sheet.goto(f"C{rng.integers(1, 4)}")
            assert 0 <= sheet.pointer <= len(sheet)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            CueSheet([Cue("C1", "a", "s", "i", 0.0), Cue("C1", "a", "s", "i", 0.0)])

    def test_unknown_goto(self):
        with pytest.raises(KeyError):
            self.sheet().goto("C9")


class TestCueValidation:
    def test_clean(self):
        skel = rig()
        assert cue_violations(make_cue(), make_clips(skel)) == []

    def test_missing_clip_named(self):
        skel = rig()
        clips = make_clips(skel)
        cue = Cue("C7", "a1", "vanish", "breathe", 0.0)
        problems = cue_violations(cue, clips)
        assert any("C7" in p and "vanish" in p for p in problems)

    def test_salience_mismatch(self):
        skel = rig()
        clips = make_clips(skel)
        cue = Cue("C1", "a1", "breathe", "breathe", 0.0)
        assert any("expected salient" in p for p in cue_violations(cue, clips))


class TestPlayer:
    def test_inactive_returns_bind(self):
        skel = rig()
        player = SalientIdlePlayer(skel, make_clips(skel))
        pose = player.tick(1 / 60)
        expected = bind_pose(skel)
        assert np.array_equal(pose.translations, expected.translations)

    def test_trigger_no_fade_jumps_to_salient(self):
        skel = rig()
        clips = make_clips(skel)
        player = SalientIdlePlayer(skel, clips)
        player.trigger_cue(make_cue(fade=0.0), bind_pose(skel))
        assert player.state == PLAYING_SALIENT
        dt = 1 / 60
        pose = player.tick(dt)
        expected = sample_clip(clips["bow"], skel, dt)
        assert np.max(np.abs(pose.translations - expected.translations)) < 1e-12

    def test_fade_midpoint_blend(self):
        # fade 0.3: at elapsed 0.15 pose = crossfade(snapshot, salient(0.15), 0.5)
        skel = rig()
        clips = make_clips(skel)
        player = SalientIdlePlayer(skel, clips)
        snapshot = bind_pose(skel)
        snapshot.translations[0] = [5.0, 5.0, 5.0]
        player.trigger_cue(make_cue(fade=0.3), snapshot)
        pose = None
        for _ in range(3):
            pose = player.tick(0.05)
        expected = crossfade(snapshot, sample_clip(clips["bow"], skel, 0.15), 0.5)
        assert np.max(np.abs(pose.translations - expected.translations)) < 1e-9

    def test_overflow_carries_into_idle(self):
        skel = rig()
        player = SalientIdlePlayer(skel, make_clips(skel, salient_duration=2.0))
        player.trigger_cue(make_cue(), bind_pose(skel))
        player.phase = 1.9
        player.tick(0.2)
        assert player.state == LOOPING_IDLE
        assert abs(player.phase - 0.1) < 1e-12

    def test_transition_tick_count(self):
        skel = rig()
        dt = 1 / 60
        for duration in (0.53, 1.27, 2.001):
            clips = make_clips(skel, salient_duration=duration)
            player = SalientIdlePlayer(skel, clips)
            player.trigger_cue(make_cue(), bind_pose(skel))
            expected_ticks = math.ceil(duration / dt)
            ticks = 0
            while player.state == PLAYING_SALIENT:
                player.tick(dt)
                ticks += 1
                assert ticks <= expected_ticks
            assert ticks == expected_ticks

    def test_trajectory_matches_splice_oracle(self):
        skel = rig()
        clips = make_clips(skel, salient_duration=1.01, idle_duration=0.53)
        player = SalientIdlePlayer(skel, clips)
        player.trigger_cue(make_cue(), bind_pose(skel))
        dt = 1 / 60
        t = 0.0
        for _ in range(180):
            t += dt
            pose = player.tick(dt)
            if t < clips["bow"].duration:
                expected = sample_clip(clips["bow"], skel, t)
            else:
                expected = sample_clip(clips["breathe"], skel,
                                       math.fmod(t - clips["bow"].duration,
                                                 clips["breathe"].duration),
                                       wrap=True)
            assert np.max(np.abs(pose.translations - expected.translations)) < 1e-6

    def test_retrigger_fades_from_interrupted_pose(self):
        skel = rig()
        clips = make_clips(skel)
        player = SalientIdlePlayer(skel, clips)
        player.trigger_cue(make_cue(fade=0.0), bind_pose(skel))
        mid = player.tick(0.5)
        player.trigger_cue(make_cue(fade=0.3), mid)
        assert player.state == PLAYING_SALIENT
        assert player.phase == 0.0
        pose = player.tick(0.15)
        expected = crossfade(mid, sample_clip(clips["bow"], skel, 0.15), 0.5)
        assert np.max(np.abs(pose.translations - expected.translations)) < 1e-9

    def test_adjustment_recorded_for_stage(self):
        skel = rig()
        player = SalientIdlePlayer(skel, make_clips(skel))
        adjust = StageAdjustment(position=[1.0, -2.0], yaw=0.5)
        player.trigger_cue(make_cue(adjust=adjust), bind_pose(skel))
        taken = player.take_adjustment()
        assert taken is adjust
        assert player.take_adjustment() is None

    def test_replay_determinism(self):
        skel = rig()
        clips = make_clips(skel)

        def run():
            player = SalientIdlePlayer(skel, clips)
            log = []
            for k in range(120):
                if k in (3, 40):
                    player.trigger_cue(make_cue(fade=0.2),
                                       bind_pose(skel) if k == 3 else pose)
                pose = player.tick(1 / 60)
                log.append(pose.translations.tobytes()
                           + pose.rotations.tobytes())
            return log

        assert run() == run()


class TestClassification:
    def test_paper_table(self):
        cases = [
            (("external", "external"), PUPPET),
            (("external", "internal"), MASK),
            (("internal", "external"), GOLEM),
            (("internal", "internal"), ACTOR),
        ]
        for (origin, decision), expected in cases:
            cfg = ControllerConfig(origin=origin, decision=decision,
                                   mocap_source="s" if origin == "external" else None,
                                   behaviour_tree="bt" if decision == "internal" else None)
            assert classify_controller(cfg) == expected

    def test_violations(self):
        cfg = ControllerConfig(origin="external", decision="external")
        assert any("mocap source" in p for p in controller_violations(cfg))
        cfg = ControllerConfig(origin="internal", decision="internal")
        assert any("behaviour tree" in p for p in controller_violations(cfg))
        cfg = ControllerConfig(origin="sideways", decision="external")
        assert any("origin" in p for p in controller_violations(cfg))
