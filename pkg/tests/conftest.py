import hypothesis

# No per-example deadline: the FFT-backed properties occasionally pay a
# first-call plan-construction cost that would otherwise flake.
hypothesis.settings.register_profile(
    "specklesim", deadline=None, max_examples=50, derandomize=True
)
hypothesis.settings.load_profile("specklesim")
