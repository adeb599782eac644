import pytest

# this suite only makes sense with the exporter (and its torch dependency)
# and the pruning toolkit, which is the consumer side of the round-trip
pytest.importorskip("torch")
pytest.importorskip("clrw_export")
pytest.importorskip("clr_rnf")
