"""showrunner: a headless runtime for directing animated avatars live.

Layers, bottom up: skeleton/animation/retarget (the figure and its motion),
locomotion/navigation/behaviour (self-propelled movement and autonomy),
direction/stage (cue playback and the deterministic show tick), protocol
(file and wire formats) and cli (validate / run / serve).
"""

__version__ = "0.1.0"
