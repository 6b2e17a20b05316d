"""Shared test configuration."""

from hypothesis import HealthCheck, settings

# first calls into the jit kernels pay a compile cost; wall-clock deadlines
# would flag that as flakiness
settings.register_profile(
    "kernels",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("kernels")
