// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
