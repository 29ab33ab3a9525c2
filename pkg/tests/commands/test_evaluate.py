from __future__ import annotations

import numpy as np

from cnsnet.commands import evaluate as evaluate_module
from cnsnet.commands.evaluate import score
from cnsnet.config import SynthSpec
from cnsnet.data.dataset import SyntheticDataset
from cnsnet.metrics.quality import MetricConvention


def test_workers_raise_on_invalid_floats(monkeypatch):
    seen = []
    original = evaluate_module.quantize

    def recording(image):
        seen.append(np.geterr()['invalid'])
        return original(image)

    monkeypatch.setattr(evaluate_module, 'quantize', recording)
    dataset = SyntheticDataset(SynthSpec(size=16), 4, 0, 'test')
    score(None, dataset, workers=2)
    assert seen == ['raise'] * 4


def test_worker_count_does_not_change_the_report():
    dataset = SyntheticDataset(SynthSpec(size=16), 3, 1, 'test')
    for convention in MetricConvention:
        one = score(None, dataset, convention, workers=1)
        many = score(None, dataset, convention, workers=3)
        assert one.to_dict() == many.to_dict()
