"""Trajectory optimization by shooting and collocation transcription."""
