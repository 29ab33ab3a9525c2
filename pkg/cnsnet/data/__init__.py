from __future__ import annotations

from cnsnet.data.augment import augment
from cnsnet.data.dataset import IstdDataset
from cnsnet.data.dataset import load_istd
from cnsnet.data.dataset import materialize
from cnsnet.data.dataset import SyntheticDataset
from cnsnet.data.dataset import TripletDataset
from cnsnet.data.synthetic import synth_triplet
from cnsnet.data.triplet import ImageTriplet

__all__ = [
    'ImageTriplet',
    'IstdDataset',
    'SyntheticDataset',
    'TripletDataset',
    'augment',
    'load_istd',
    'materialize',
    'synth_triplet',
]
