"""Derivation of independent seeds from one root seed."""
# std imports
import hashlib


def stage_seed(root: int, stage: str) -> int:
    """
    Seed of a named stage: the first 4 bytes of ``sha256(f"{root}:{stage}")``.

    >>> stage_seed(7, 'ensemble') == stage_seed(7, 'ensemble')
    True
    """
    digest = hashlib.sha256(f'{root}:{stage}'.encode('utf8')).digest()
    return int.from_bytes(digest[:4], 'big')
