#!/usr/bin/env python
"""
Audit the M5 hierarchy construction on an M5-shaped catalog.

The catalog has the shape of the competition data: 3 states, 10 stores, 3
categories, 7 departments and 3,049 items sold in every store, 30,490 bottom
series in all.  The audit checks the node count of each of the 12 levels,
42,840 nodes in total, and that every upper node of a random bottom matrix
equals the sum of its members.

Run it from the project root; it logs every failed check and exits 1 if there
were any.
"""
# std imports
import sys
import logging

# 3rd party
import numpy as np

#: nodes per level of the competition hierarchy, level 1 first
EXPECTED_COUNTS = (1, 3, 10, 3, 7, 9, 21, 30, 70, 3049, 9147, 30490)

#: stores per state and items per department of the competition data
STORES = {'CA': 4, 'TX': 3, 'WI': 3}
DEPARTMENTS = {'FOODS': (216, 398, 823), 'HOBBIES': (416, 149), 'HOUSEHOLD': (532, 515)}


def m5_catalog():
    """``(item, dept, category, store, state)`` rows, ordered by store then item."""
    items = []
    for category, sizes in DEPARTMENTS.items():
        for number, size in enumerate(sizes, start=1):
            dept = f'{category}_{number}'
            items += [(f'{dept}_{idx:03d}', dept, category) for idx in range(1, size + 1)]
    stores = [(f'{state}_{idx}', state) for state, count in STORES.items()
              for idx in range(1, count + 1)]
    return [(item, dept, category, store, state)
            for store, state in stores for item, dept, category in items]


def main(log: logging.Logger):
    from hfalign.hierarchy import SeriesMatrix, build_m5_hierarchy, enumerate_all_series

    catalog = m5_catalog()
    spec = build_m5_hierarchy(catalog)
    errors = 0
    for level, expected, count in zip(spec.levels, EXPECTED_COUNTS, spec.node_counts):
        if count != expected:
            log.error(f'level {level.id} ({level.label}) has {count} nodes, expected {expected}')
            errors += 1
    if spec.total_nodes != sum(EXPECTED_COUNTS):
        log.error(f'{spec.total_nodes} nodes in total, expected {sum(EXPECTED_COUNTS)}')
        errors += 1

    rng = np.random.default_rng(0)
    days = 7
    bottom = SeriesMatrix(rng.poisson(1.0, size=(spec.n_bottom, days)).astype(np.float64),
                          np.arange(1, days + 1), spec.series_ids(spec.bottom_level))
    every = enumerate_all_series(spec, bottom)
    offset = 0
    for level in spec.levels:
        for node in spec.nodes_at(level.id):
            expected = bottom.values[list(node.members)].sum(axis=0)
            actual = every.values[offset]
            if not np.allclose(actual, expected, rtol=1e-9, atol=0.0):
                log.error(f'node {node.id} of level {level.id} is not the sum of its members')
                errors += 1
            offset += 1
    log.info(f'{len(catalog)} bottom series, {spec.total_nodes} nodes checked')
    if errors:
        log.error(f'{errors} errors, exit 1')
        sys.exit(1)


if __name__ == '__main__':
    _logfmt = '%(levelname)s %(filename)s:%(lineno)d %(message)s'
    logging.basicConfig(level="INFO", format=_logfmt, force=True)
    log = logging.getLogger()
    main(log)
