"""Walk through the read/write interleaving policy.

A streaming speech-token generator alternates between reading blocks of fused
input representations and writing blocks of speech tokens.  This script
builds a few schedules, shows which inputs each output position can see, and
round-trips the compact text form.
"""

from streamvox.schedule import (
    SchedulePolicy,
    build_sequence,
    format_actions,
    parse_actions,
    training_mask,
    validate_sequence,
    visible_prefix,
)

# The flagship cadence: read 3 representations, write 10 speech tokens.
policy = SchedulePolicy(read_block=3, write_block=10)

print("== schedules under read-3 / write-10 ==")
for n, m in [(6, 25), (2, 1), (3, 0), (12, 40)]:
    actions = build_sequence(n, m, policy)
    validate_sequence(actions, n, m, policy)
    print(f"N={n:3d} M={m:3d}  ->  {format_actions(actions)}")

# The training mask is the per-position visibility count: output i may
# condition on min((floor((i-1)/W) + 1) * R, N) inputs.
print("\n== visibility masks ==")
for r, w in [(3, 10), (1, 5), (5, 20)]:
    mask = training_mask(12, 30, SchedulePolicy(r, w))
    print(f"R={r} W={w}: {mask}")

# Visibility grows by exactly one read block at each write-block boundary,
# until everything has been read.
print("\n== visibility staircase (N=12, R=3, W=10) ==")
for i in [1, 10, 11, 20, 21, 31, 41]:
    print(f"position {i:3d} sees {visible_prefix(i, 12, policy):2d} of 12 representations")

# Schedules serialize to a compact text form and back without loss.
text = format_actions(build_sequence(6, 25, policy))
assert parse_actions(text) == build_sequence(6, 25, policy)
print(f"\nround-tripped text form: {text!r}")
