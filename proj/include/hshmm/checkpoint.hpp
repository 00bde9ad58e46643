// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hshmm/model.hpp"
#include "hshmm/subspace.hpp"

namespace hshmm {

// Binary model container, magic "HSHM" version 1, little-endian throughout.
// Holds the layout constants, the hyper-subspace posterior, per-language
// posteriors and, for languages trained on a phone loop, the stick-breaking
// state.
struct Checkpoint {
  SubspaceDims dims;
  PriorConfig priors;
  HyperPosterior hyper;
  std::vector<LanguagePosterior> languages;
  std::map<std::string, PhoneLoop> phone_loops;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Serialized hyper-subspace posterior block, exactly as stored on disk.
  std::vector<uint8_t> hyper_block_bytes() const;
  // Hex SHA-256 of that block; used to verify the transfer stage never
  // touches the hyper-subspace.
  std::string hyper_block_digest() const;

  int language_index(const std::string& id) const;  // -1 if absent
  const LanguagePosterior& language(const std::string& id) const;
};

}  // namespace hshmm
