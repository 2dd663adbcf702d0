from __future__ import annotations

import pytest

from cdfs.textio import fixture_path, load


def fixture_entry(file: str, name: str):
    return load(fixture_path(file)).entry(name)


@pytest.fixture(scope="session")
def mobile():
    return fixture_entry("mobile.cdl", "mobile")


@pytest.fixture(scope="session")
def den():
    return fixture_entry("den.cdl", "den")


@pytest.fixture(scope="session")
def suffix():
    return fixture_entry("suffix.cdl", "suffix")


@pytest.fixture(scope="session")
def suffix_ctrl():
    return fixture_entry("suffix_ctrl.cdl", "suffix-ctrl")
