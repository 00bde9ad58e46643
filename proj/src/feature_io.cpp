// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/feature_io.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hshmm {

namespace {

// --- little-endian binary helpers ---

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  uint8_t buf[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<uint8_t>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
bool read_le(std::istream& is, T& value) {
  uint8_t buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  std::make_unsigned_t<T> u = 0;
  for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
  value = static_cast<T>(u);
  return true;
}

void write_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  write_le(os, u);
}

bool read_f32(std::istream& is, float& v) {
  uint32_t u;
  if (!read_le(is, u)) return false;
  std::memcpy(&v, &u, 4);
  return true;
}

// --- DSP helpers ---

void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

// Triangular mel filterbank over FFT bins [0, n_fft/2].
Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  const double mel_low = hz_to_mel(0.0);
  const double mel_high = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] = mel_low + (mel_high - mel_low) * i / (n_mels + 1);
  for (int b = 0; b < n_bins; ++b) {
    const double mel = hz_to_mel(static_cast<double>(b) * sample_rate / n_fft);
    for (int m = 0; m < n_mels; ++m) {
      if (mel >= centers[m] && mel <= centers[m + 1]) {
        fb(m, b) = (mel - centers[m]) / (centers[m + 1] - centers[m]);
      } else if (mel > centers[m + 1] && mel <= centers[m + 2]) {
        fb(m, b) = (centers[m + 2] - mel) / (centers[m + 2] - centers[m + 1]);
      }
    }
  }
  return fb;
}

}  // namespace

FeatureMatrix extract_features(const std::vector<double>& samples, int sample_rate,
                               const FeatureConfig& config,
                               const std::string& utterance_id) {
  if (sample_rate < 8000) throw DataError("extract_features: sample rate below 8 kHz");
  for (double s : samples)
    if (!std::isfinite(s)) throw DataError("extract_features: non-finite sample");

  const int window = static_cast<int>(std::lround(config.window_ms * sample_rate / 1000.0));
  const int hop = static_cast<int>(std::lround(config.shift_ms * sample_rate / 1000.0));
  const int n_frames = frame_count(static_cast<int>(samples.size()), window, hop);
  if (n_frames < 1) throw DataError("extract_features: utterance too short");

  std::vector<double> signal = samples;
  if (config.preemphasis != 0.0) {
    for (size_t i = signal.size(); i-- > 1;)
      signal[i] -= config.preemphasis * signal[i - 1];
    signal[0] -= config.preemphasis * signal[0];
  }

  int n_fft = 1;
  while (n_fft < window) n_fft <<= 1;

  Eigen::VectorXd hamming(window);
  for (int i = 0; i < window; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (window - 1));

  const Eigen::MatrixXd fb = mel_filterbank(config.n_mels, n_fft, sample_rate);
  const int n_ceps = config.n_cepstra;

  // Orthonormal DCT-II over the mel log-energies.
  Eigen::MatrixXd dct(n_ceps, config.n_mels);
  for (int i = 0; i < n_ceps; ++i) {
    const double scale = std::sqrt((i == 0 ? 1.0 : 2.0) / config.n_mels);
    for (int j = 0; j < config.n_mels; ++j)
      dct(i, j) = scale * std::cos(M_PI * i * (j + 0.5) / config.n_mels);
  }

  constexpr double kEnergyFloor = 1e-10;
  Eigen::MatrixXd statics(n_frames, n_ceps);
  std::vector<std::complex<double>> buf(n_fft);
  for (int t = 0; t < n_frames; ++t) {
    for (int i = 0; i < n_fft; ++i) buf[i] = 0.0;
    const int base = t * hop;
    for (int i = 0; i < window; ++i) buf[i] = signal[base + i] * hamming[i];
    fft_radix2(buf);
    Eigen::VectorXd power(n_fft / 2 + 1);
    for (int b = 0; b <= n_fft / 2; ++b) power[b] = std::norm(buf[b]);
    Eigen::VectorXd mel_log = (fb * power).cwiseMax(kEnergyFloor).array().log();
    statics.row(t) = (dct * mel_log).transpose();
  }

  if (config.lifter > 0) {
    const double L = config.lifter;
    for (int i = 1; i < n_ceps; ++i)
      statics.col(i) *= 1.0 + 0.5 * L * std::sin(M_PI * i / L);
  }
  if (config.mean_normalize)
    statics.rowwise() -= statics.colwise().mean();

  FeatureMatrix out;
  out.utterance_id = utterance_id;
  out.frame_shift_ms = config.shift_ms;
  out.frames = statics.cast<float>();
  return add_deltas(out, config.delta_window);
}

FeatureMatrix add_deltas(const FeatureMatrix& statics, int window) {
  const int n = statics.n_frames();
  const int d = statics.dim();
  if (n < 1) throw DataError("add_deltas: empty feature matrix");
  if (window < 1) throw DataError("add_deltas: window must be positive");

  double denom = 0.0;
  for (int k = 1; k <= window; ++k) denom += 2.0 * k * k;

  auto regression = [&](const Eigen::MatrixXf& in) {
    Eigen::MatrixXf out(n, d);
    for (int t = 0; t < n; ++t) {
      Eigen::VectorXf acc = Eigen::VectorXf::Zero(d);
      for (int k = 1; k <= window; ++k) {
        const int lo = std::max(t - k, 0);
        const int hi = std::min(t + k, n - 1);
        acc += static_cast<float>(k) * (in.row(hi) - in.row(lo)).transpose();
      }
      out.row(t) = (acc / static_cast<float>(denom)).transpose();
    }
    return out;
  };

  Eigen::MatrixXf delta = regression(statics.frames);
  Eigen::MatrixXf delta2 = regression(delta);

  FeatureMatrix out;
  out.utterance_id = statics.utterance_id;
  out.frame_shift_ms = statics.frame_shift_ms;
  out.frames.resize(n, 3 * d);
  out.frames << statics.frames, delta, delta2;
  return out;
}

// --- archives ---

void write_feature_archive(const FeatureMap& features, const std::string& path) {
  if (features.empty()) throw DataError("write_feature_archive: empty feature map");
  int dim = -1;
  for (const auto& [id, fm] : features) {
    if (dim < 0) dim = fm.dim();
    if (fm.dim() != dim)
      throw DataError("write_feature_archive: inconsistent dims in archive");
    if (!fm.frames.allFinite())
      throw NumericError("write_feature_archive: non-finite features in '" + id + "'");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_feature_archive: cannot open " + path);
  os.write("AUDF", 4);
  os.put(1);
  for (const auto& [id, fm] : features) {
    write_le<uint16_t>(os, static_cast<uint16_t>(id.size()));
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
    write_le<uint32_t>(os, static_cast<uint32_t>(fm.n_frames()));
    write_le<uint32_t>(os, static_cast<uint32_t>(fm.dim()));
    for (int r = 0; r < fm.n_frames(); ++r)
      for (int c = 0; c < fm.dim(); ++c) write_f32(os, fm.frames(r, c));
  }
  if (!os) throw DataError("write_feature_archive: write failed for " + path);
}

FeatureMap read_feature_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_feature_archive: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AUDF", 4) != 0)
    throw DataError("read_feature_archive: bad magic in " + path);
  int version = is.get();
  if (version != 1)
    throw DataError("read_feature_archive: unsupported version in " + path);

  FeatureMap out;
  int dim = -1;
  while (true) {
    uint16_t id_len;
    if (!read_le(is, id_len)) break;  // clean EOF
    std::string id(id_len, '\0');
    if (!is.read(id.data(), id_len))
      throw DataError("read_feature_archive: truncated record in " + path);
    uint32_t n_frames, rec_dim;
    if (!read_le(is, n_frames) || !read_le(is, rec_dim))
      throw DataError("read_feature_archive: truncated record in " + path);
    if (dim < 0) dim = static_cast<int>(rec_dim);
    if (static_cast<int>(rec_dim) != dim)
      throw DataError("read_feature_archive: dim mismatch for '" + id + "' in " + path);
    FeatureMatrix fm;
    fm.utterance_id = id;
    fm.frames.resize(n_frames, rec_dim);
    for (uint32_t r = 0; r < n_frames; ++r)
      for (uint32_t c = 0; c < rec_dim; ++c)
        if (!read_f32(is, fm.frames(r, c)))
          throw DataError("read_feature_archive: truncated record in " + path);
    if (out.count(id))
      throw DataError("read_feature_archive: duplicate utterance '" + id + "'");
    out.emplace(id, std::move(fm));
  }
  return out;
}

// --- text formats ---

std::map<std::string, std::vector<std::string>> read_transcripts(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("read_transcripts: cannot open " + path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("read_transcripts: missing tab in line '" + line + "'");
    std::string id = line.substr(0, tab);
    std::istringstream rest(line.substr(tab + 1));
    std::vector<std::string> tokens;
    std::string tok;
    while (rest >> tok) tokens.push_back(tok);
    out[id] = std::move(tokens);
  }
  return out;
}

void write_transcripts(const std::map<std::string, std::vector<std::string>>& transcripts,
                       const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("write_transcripts: cannot open " + path);
  for (const auto& [id, tokens] : transcripts) {
    os << id << '\t';
    for (size_t i = 0; i < tokens.size(); ++i) os << (i ? " " : "") << tokens[i];
    os << '\n';
  }
}

AlignmentMap read_alignments(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("read_alignments: cannot open " + path);
  AlignmentMap out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, label;
    double start, end;
    if (!(ss >> id >> start >> end >> label))
      throw DataError("read_alignments: malformed line '" + line + "'");
    out[id].push_back({start, end, label});
  }
  for (auto& [id, segs] : out) {
    std::stable_sort(segs.begin(), segs.end(),
                     [](const AlignSegment& a, const AlignSegment& b) { return a.start_ms < b.start_ms; });
    double prev_end = -1.0;
    for (const auto& seg : segs) {
      if (seg.end_ms < seg.start_ms)
        throw DataError("read_alignments: reversed segment in utterance '" + id + "'");
      if (seg.start_ms < prev_end)
        throw DataError("read_alignments: overlapping segments in utterance '" + id + "'");
      prev_end = seg.end_ms;
    }
  }
  return out;
}

void write_alignments(const AlignmentMap& alignments, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("write_alignments: cannot open " + path);
  for (const auto& [id, segs] : alignments)
    for (const auto& seg : segs)
      os << id << ' ' << seg.start_ms << ' ' << seg.end_ms << ' ' << seg.label << '\n';
}

// --- manifest ---

CorpusManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("read_manifest: cannot open " + path);
  const auto dir = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return (fp.is_absolute() ? fp : dir / fp).string();
  };

  CorpusManifest manifest;
  std::string line;
  std::map<std::string, bool> seen;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::istringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 2)
      throw DataError("read_manifest: expected at least 2 columns in '" + line + "'");
    ManifestEntry entry;
    entry.utterance_id = cols[0];
    if (seen[entry.utterance_id])
      throw DataError("read_manifest: duplicate utterance id '" + entry.utterance_id + "'");
    seen[entry.utterance_id] = true;
    entry.feature_path = resolve(cols[1]);
    if (cols.size() > 2 && !cols[2].empty() && cols[2] != "-")
      entry.transcript_path = resolve(cols[2]);
    if (cols.size() > 3 && !cols[3].empty() && cols[3] != "-")
      entry.alignment_path = resolve(cols[3]);
    for (const auto& p : {std::optional<std::string>(entry.feature_path),
                          entry.transcript_path, entry.alignment_path})
      if (p && !std::filesystem::exists(*p))
        throw DataError("read_manifest: missing file " + *p);
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const CorpusManifest& manifest, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("write_manifest: cannot open " + path);
  for (const auto& e : manifest.entries) {
    os << e.utterance_id << '\t' << e.feature_path;
    if (e.transcript_path || e.alignment_path)
      os << '\t' << (e.transcript_path ? *e.transcript_path : "-");
    if (e.alignment_path) os << '\t' << *e.alignment_path;
    os << '\n';
  }
}

FeatureMap load_manifest_features(const CorpusManifest& manifest) {
  std::map<std::string, FeatureMap> archives;
  FeatureMap out;
  for (const auto& e : manifest.entries) {
    auto it = archives.find(e.feature_path);
    if (it == archives.end())
      it = archives.emplace(e.feature_path, read_feature_archive(e.feature_path)).first;
    auto rec = it->second.find(e.utterance_id);
    if (rec == it->second.end())
      throw DataError("load_manifest_features: utterance '" + e.utterance_id +
                      "' not found in " + e.feature_path);
    out[e.utterance_id] = rec->second;
  }
  return out;
}

}  // namespace hshmm
