"""Reusable function and class abstractions."""
import numpy as np


def chain(_input, funcs):
    """Execute recursive function chain on input and return it.

    Side Effects: Mutates funcs.

    Args:
        _input: Input of any data type to be passed into functions.
        funcs: Ordered list of funcs to be applied to input.

    Returns:
        Recursive call if any functions remaining, else the altered input.

    Examples:
        >>> chain(2, [lambda x: x + 1, lambda x: x * 10])
        30
    """
    return chain(funcs.pop(0)(_input), funcs) if funcs else _input


def derive_seed(master_seed, *indices):
    """Derive an independent 64-bit seed from a master seed and indices.

    Counter-based: the result depends only on (master_seed, indices), never on
    how many seeds were derived before, so adding a sweep point leaves every
    other point's seed untouched.

    Args:
        master_seed (int): Non-negative master seed.
        *indices (int): Non-negative integer keys, e.g. (point, repetition).

    Returns:
        int: Derived seed in [0, 2**64).

    Examples:
        >>> derive_seed(7, 0, 1) == derive_seed(7, 0, 1)
        True
        >>> derive_seed(7, 0, 1) == derive_seed(7, 1, 0)
        False
    """
    sequence = np.random.SeedSequence(entropy=int(master_seed),
                                      spawn_key=tuple(int(i) for i in indices))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
