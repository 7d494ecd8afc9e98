#pragma once

// Shared binary container for model checkpoints and pruning masks.
//
//   magic "PLCKPT01" | u32 kind | f64 requested | f64 achieved |
//   u32 n_sizes | i32 sizes[n_sizes] | payload
//
// All scalars little-endian. Model payload: per layer, weights row-major f64
// then biases f64. Mask payload: per layer, weights row-major u8.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "prunelab/error.hpp"

namespace prunelab::detail {

static_assert(std::endian::native == std::endian::little, "container format assumes little-endian hosts");

inline constexpr char kContainerMagic[8] = {'P', 'L', 'C', 'K', 'P', 'T', '0', '1'};

enum class ContainerKind : std::uint32_t { model = 0, mask = 1 };

struct ContainerHeader {
  ContainerKind kind = ContainerKind::model;
  double requested = 0.0;
  double achieved = 0.0;
  std::vector<int> sizes;
};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void write_array(std::ostream& out, const T* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path + ": truncated container");
  return v;
}

template <typename T>
void read_array(std::istream& in, T* data, std::size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw ParseError(path + ": truncated container payload");
}

inline void write_header(std::ostream& out, const ContainerHeader& h) {
  out.write(kContainerMagic, sizeof(kContainerMagic));
  write_pod(out, static_cast<std::uint32_t>(h.kind));
  write_pod(out, h.requested);
  write_pod(out, h.achieved);
  write_pod(out, static_cast<std::uint32_t>(h.sizes.size()));
  for (int s : h.sizes) write_pod(out, static_cast<std::int32_t>(s));
}

inline ContainerHeader read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) {
    throw ParseError(path + ": not a prunelab checkpoint (bad magic)");
  }
  ContainerHeader h;
  const auto kind = read_pod<std::uint32_t>(in, path);
  if (kind > 1) throw ParseError(path + ": unknown container kind " + std::to_string(kind));
  h.kind = static_cast<ContainerKind>(kind);
  h.requested = read_pod<double>(in, path);
  h.achieved = read_pod<double>(in, path);
  const auto n = read_pod<std::uint32_t>(in, path);
  if (n < 2 || n > 1024) throw ParseError(path + ": implausible layer count " + std::to_string(n));
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto s = read_pod<std::int32_t>(in, path);
    if (s <= 0) throw ParseError(path + ": non-positive layer size");
    h.sizes.push_back(s);
  }
  return h;
}

}  // namespace prunelab::detail
