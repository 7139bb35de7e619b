// SPDX-License-Identifier: Apache-2.0

#include "scoter/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "scoter/common.hpp"

namespace scoter::numerics {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CorruptStoreError("checkpoint: truncated file");
  return v;
}

}  // namespace

Tensor& ParamStore::create(const std::string& name, Shape shape,
                           std::vector<double> data) {
  if (params_.count(name)) {
    throw ScoterError("param store: duplicate parameter " + name);
  }
  auto [it, ok] =
      params_.emplace(name, Tensor::from_data(std::move(shape), std::move(data), true));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::create_randn(const std::string& name, Shape shape, Rng& rng,
                                 double stddev) {
  if (params_.count(name)) {
    throw ScoterError("param store: duplicate parameter " + name);
  }
  auto [it, ok] =
      params_.emplace(name, Tensor::randn(std::move(shape), rng, stddev, true));
  (void)ok;
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw NotFoundError("param store: no parameter " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw NotFoundError("param store: no parameter " + name);
  return it->second;
}

std::vector<Tensor> ParamStore::all() {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (auto& [name, t] : params_) out.push_back(t);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ScoterError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_raw<std::uint32_t>(os, kVersion);
  write_raw<std::uint64_t>(os, store.named().size());
  for (const auto& [name, t] : store.named()) {
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i)
      write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw ScoterError("checkpoint: write failed for " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ScoterError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw CorruptStoreError("checkpoint: bad magic in " + path);
  }
  const auto version = read_raw<std::uint32_t>(is);
  if (version != kVersion) {
    throw CorruptStoreError("checkpoint: unsupported version " +
                            std::to_string(version));
  }
  const auto count = read_raw<std::uint64_t>(is);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = read_raw<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CorruptStoreError("checkpoint: truncated name");
    const auto rank = read_raw<std::uint32_t>(is);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = read_raw<std::uint32_t>(is);
      shape.push_back(static_cast<int>(d));
      numel *= d;
    }
    std::vector<double> data(numel);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!is) throw CorruptStoreError("checkpoint: truncated tensor data");
    if (store.contains(name)) {
      Tensor& t = store.get(name);
      if (t.shape() != shape) {
        throw CorruptStoreError("checkpoint: shape mismatch for " + name);
      }
      t.mutable_data() = std::move(data);
    } else {
      store.create(name, std::move(shape), std::move(data));
    }
  }
}

}  // namespace scoter::numerics
