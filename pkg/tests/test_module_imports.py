import importlib

import pytest


@pytest.mark.parametrize(
    "module",
    [
        "cmvlab",
        "cmvlab.__main__",
        "cmvlab.adops",
        "cmvlab.bandop",
        "cmvlab.bispectral",
        "cmvlab.cli",
        "cmvlab.cmv",
        "cmvlab.core",
        "cmvlab.misc",
    ],
)
def test_import(module):
    importlib.import_module(module)
