// Copyright 2026 The hshmm authors
// Licensed under the Apache License, Version 2.0

#include "hshmm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace hshmm {

namespace {

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(out, u);
}

void put_vec(std::vector<uint8_t>& out, const Eigen::VectorXd& v) {
  put_u64(out, static_cast<uint64_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) put_f64(out, v[i]);
}

void put_str(std::vector<uint8_t>& out, const std::string& s) {
  if (s.size() > 0xffff) throw DataError("checkpoint: string too long");
  out.push_back(static_cast<uint8_t>(s.size() & 0xff));
  out.push_back(static_cast<uint8_t>(s.size() >> 8));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const uint8_t* p;
  const uint8_t* end;
  std::string context;

  void need(size_t n) const {
    if (static_cast<size_t>(end - p) < n)
      throw DataError("checkpoint: truncated file " + context);
  }
  uint8_t u8() {
    need(1);
    return *p++;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(*p++) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(*p++) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  Eigen::VectorXd vec() {
    uint64_t n = u64();
    need(8 * n);
    Eigen::VectorXd v(static_cast<int>(n));
    for (uint64_t i = 0; i < n; ++i) v[static_cast<int>(i)] = f64();
    return v;
  }
  std::string str() {
    need(2);
    size_t n = p[0] | (static_cast<size_t>(p[1]) << 8);
    p += 2;
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

std::vector<uint8_t> serialize_gaussian(const VariationalGaussian& q) {
  std::vector<uint8_t> out;
  put_vec(out, q.omega);
  put_vec(out, q.psi);
  return out;
}

}  // namespace

std::vector<uint8_t> Checkpoint::hyper_block_bytes() const {
  return serialize_gaussian(hyper.q);
}

std::string Checkpoint::hyper_block_digest() const {
  return sha256_hex(hyper_block_bytes());
}

int Checkpoint::language_index(const std::string& id) const {
  for (size_t i = 0; i < languages.size(); ++i)
    if (languages[i].language_id == id) return static_cast<int>(i);
  return -1;
}

const LanguagePosterior& Checkpoint::language(const std::string& id) const {
  int idx = language_index(id);
  if (idx < 0) throw DataError("checkpoint: unknown language '" + id + "'");
  return languages[idx];
}

void Checkpoint::save(const std::string& path) const {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'H', 'S', 'H', 'M'});
  put_u8(out, 1);
  put_u32(out, static_cast<uint32_t>(dims.layout.feature_dim));
  put_u32(out, static_cast<uint32_t>(dims.layout.n_states));
  put_u32(out, static_cast<uint32_t>(dims.layout.n_components));
  put_u32(out, static_cast<uint32_t>(dims.hyper_dim));
  put_u32(out, static_cast<uint32_t>(dims.embedding_dim));
  put_f64(out, priors.sigma_alpha);
  put_f64(out, priors.sigma_M);
  put_f64(out, priors.sigma_m);
  put_f64(out, priors.sigma_e);

  auto hyper_bytes = hyper_block_bytes();
  out.insert(out.end(), hyper_bytes.begin(), hyper_bytes.end());

  put_u32(out, static_cast<uint32_t>(languages.size()));
  for (const auto& lang : languages) {
    put_str(out, lang.language_id);
    put_u32(out, static_cast<uint32_t>(lang.n_units));
    auto q = serialize_gaussian(lang.q);
    out.insert(out.end(), q.begin(), q.end());
    auto loop = phone_loops.find(lang.language_id);
    put_u8(out, loop != phone_loops.end() ? 1 : 0);
    if (loop != phone_loops.end()) {
      put_f64(out, loop->second.concentration);
      put_vec(out, loop->second.stick_a);
      put_vec(out, loop->second.stick_b);
    }
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 5 || std::memcmp(bytes.data(), "HSHM", 4) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  if (bytes[4] != 1) throw DataError("checkpoint: unsupported version in " + path);

  Reader r{bytes.data() + 5, bytes.data() + bytes.size(), path};
  Checkpoint ck;
  ck.dims.layout.feature_dim = static_cast<int>(r.u32());
  ck.dims.layout.n_states = static_cast<int>(r.u32());
  ck.dims.layout.n_components = static_cast<int>(r.u32());
  ck.dims.hyper_dim = static_cast<int>(r.u32());
  ck.dims.embedding_dim = static_cast<int>(r.u32());
  ck.priors.sigma_alpha = r.f64();
  ck.priors.sigma_M = r.f64();
  ck.priors.sigma_m = r.f64();
  ck.priors.sigma_e = r.f64();

  ck.hyper.dims = ck.dims;
  ck.hyper.q.omega = r.vec();
  ck.hyper.q.psi = r.vec();
  if (ck.hyper.q.dim() != ck.hyper.flat_dim() || ck.hyper.q.psi.size() != ck.hyper.flat_dim())
    throw DataError("checkpoint: hyper-subspace block size mismatch in " + path);

  uint32_t n_langs = r.u32();
  for (uint32_t i = 0; i < n_langs; ++i) {
    LanguagePosterior lp;
    lp.language_id = r.str();
    lp.n_units = static_cast<int>(r.u32());
    lp.hyper_dim = ck.dims.hyper_dim;
    lp.embedding_dim = ck.dims.embedding_dim;
    lp.q.omega = r.vec();
    lp.q.psi = r.vec();
    if (lp.q.dim() != lp.flat_dim() || lp.q.psi.size() != lp.flat_dim())
      throw DataError("checkpoint: language block size mismatch in " + path);
    if (r.u8()) {
      PhoneLoop loop;
      loop.concentration = r.f64();
      loop.stick_a = r.vec();
      loop.stick_b = r.vec();
      loop.truncation = static_cast<int>(loop.stick_a.size());
      if (loop.truncation != lp.n_units)
        throw DataError("checkpoint: stick-breaking size mismatch in " + path);
      ck.phone_loops[lp.language_id] = std::move(loop);
    }
    ck.languages.push_back(std::move(lp));
  }
  if (r.p != r.end) throw DataError("checkpoint: trailing bytes in " + path);
  return ck;
}

}  // namespace hshmm
