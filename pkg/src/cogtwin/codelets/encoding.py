"""Mixed-radix packing of per-motor commands into one composite class label.

Target ``k`` contributes ``command_k * prod(radices[:k])``, so the first target
is the least significant digit. See docs/encoding.md.
"""


def pack(commands, radices) -> int:
    if len(commands) != len(radices):
        raise ValueError("one radix per command required")
    value, scale = 0, 1
    for cmd, radix in zip(commands, radices):
        if not 0 <= cmd < radix:
            raise ValueError(f"command {cmd} outside radix {radix}")
        value += cmd * scale
        scale *= radix
    return value


def unpack(value, radices) -> list[int]:
    if value < 0:
        raise ValueError("composite label must be non-negative")
    out = []
    for radix in radices:
        value, digit = divmod(value, radix)
        out.append(digit)
    return out
