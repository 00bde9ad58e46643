// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_hshmm, m) {
  m.doc() = "Hierarchical subspace HMM toolkit";
}
