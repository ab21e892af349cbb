"""Unfollow prediction with heterogeneous user information."""
