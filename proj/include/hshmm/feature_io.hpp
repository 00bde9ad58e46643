// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hshmm/common.hpp"

namespace hshmm {

// Frame-level feature sequence for one utterance. Stored as float32 so the
// archive round-trip is bit-exact.
struct FeatureMatrix {
  std::string utterance_id;
  Eigen::MatrixXf frames;  // n_frames x dim, row per frame
  double frame_shift_ms = 10.0;

  int n_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

using FeatureMap = std::map<std::string, FeatureMatrix>;

struct FeatureConfig {
  double window_ms = 25.0;    // Hamming analysis window
  double shift_ms = 10.0;
  int n_mels = 26;
  int n_cepstra = 13;         // includes c0
  double preemphasis = 0.0;   // 0 disables
  int lifter = 0;             // 0 disables
  bool mean_normalize = false;  // per-utterance mean normalization of statics
  int delta_window = 2;
};

// 13 MFCC + deltas + delta-deltas = 39 dims.
FeatureMatrix extract_features(const std::vector<double>& samples, int sample_rate,
                               const FeatureConfig& config = {},
                               const std::string& utterance_id = "");

// Appends regression deltas and delta-deltas; output dim is 3x the input dim.
FeatureMatrix add_deltas(const FeatureMatrix& statics, int window = 2);

// Closed-form frame count for a given signal/window/hop length (samples).
inline int frame_count(int n_samples, int window, int hop) {
  if (n_samples < window) return 0;
  return (n_samples - window) / hop + 1;
}

// --- Feature archives --------------------------------------------------
// Binary, little-endian: magic "AUDF", version byte 1, then per record:
// u16 id length, UTF-8 id, u32 n_frames, u32 dim, float32 row-major frames.

void write_feature_archive(const FeatureMap& features, const std::string& path);
FeatureMap read_feature_archive(const std::string& path);

// --- Text formats -------------------------------------------------------

// One line per utterance: id<TAB>space-separated tokens.
std::map<std::string, std::vector<std::string>> read_transcripts(const std::string& path);
void write_transcripts(const std::map<std::string, std::vector<std::string>>& transcripts,
                       const std::string& path);

struct AlignSegment {
  double start_ms = 0.0;
  double end_ms = 0.0;
  std::string label;
};
using AlignmentMap = std::map<std::string, std::vector<AlignSegment>>;

// CTM-like, one segment per line: id start_ms end_ms label.
AlignmentMap read_alignments(const std::string& path);
void write_alignments(const AlignmentMap& alignments, const std::string& path);

// --- Corpus manifest ------------------------------------------------------
// TSV, one utterance per line: id, feature archive path, then optional
// transcript and alignment file columns. Paths resolve relative to the
// manifest location.

struct ManifestEntry {
  std::string utterance_id;
  std::string feature_path;
  std::optional<std::string> transcript_path;
  std::optional<std::string> alignment_path;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
};

CorpusManifest read_manifest(const std::string& path);
void write_manifest(const CorpusManifest& manifest, const std::string& path);

// Loads every referenced archive once and returns the manifest's utterances.
FeatureMap load_manifest_features(const CorpusManifest& manifest);

}  // namespace hshmm
