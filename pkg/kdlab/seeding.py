#!/usr/bin/env python
# -*- coding: utf-8 -*-
import zlib

import numpy as np


class RandomStreams(object):
    """Named, independent random streams derived from one run seed.

    >>> a = RandomStreams(7).get('mask').random()
    >>> b = RandomStreams(7).get('mask').random()
    >>> a == b, a == RandomStreams(7).get('gumbel').random()
    (True, False)
    """

    def __init__(self, seed):
        self.seed = int(seed)

    def get(self, name):
        key = zlib.crc32(name.encode('utf-8'))
        return np.random.default_rng(np.random.SeedSequence([self.seed, key]))
