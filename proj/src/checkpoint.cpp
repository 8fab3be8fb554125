// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gode/datapipe.hpp"
#include "gode/error.hpp"

namespace gode::datapipe {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8 + 8;

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const EmbeddingSet& emb, const std::filesystem::path& path) {
  if (emb.users.cols() != emb.items.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "user and item tables disagree on dimension");
  }
  std::string buf;
  buf.reserve(kHeaderBytes + (emb.users.size() + emb.items.size()) * sizeof(float));
  buf.append(kCheckpointMagic.data(), kCheckpointMagic.size());
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint64_t>(buf, emb.users.rows());
  put<std::uint64_t>(buf, emb.items.rows());
  put<std::uint64_t>(buf, emb.users.cols());
  buf.append(reinterpret_cast<const char*>(emb.users.data()), emb.users.size() * sizeof(float));
  buf.append(reinterpret_cast<const char*>(emb.items.data()), emb.items.size() * sizeof(float));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

EmbeddingSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < kCheckpointMagic.size() ||
      std::memcmp(buf.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw Error(ErrorCode::BadMagic, path.string() + " is not a GODE checkpoint");
  }
  if (buf.size() < kHeaderBytes) {
    throw Error(ErrorCode::Truncated,
                "header ends at byte offset " + std::to_string(buf.size()) + " of " +
                    std::to_string(kHeaderBytes));
  }
  const auto version = get<std::uint32_t>(buf, 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto n_users = get<std::uint64_t>(buf, 8);
  const auto n_items = get<std::uint64_t>(buf, 16);
  const auto dim = get<std::uint64_t>(buf, 24);
  const std::uint64_t expected = kHeaderBytes + (n_users + n_items) * dim * sizeof(float);
  if (buf.size() < expected) {
    throw Error(ErrorCode::Truncated, "data ends at byte offset " + std::to_string(buf.size()) +
                                          ", expected " + std::to_string(expected));
  }
  if (buf.size() > expected) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(buf.size() - expected) + " trailing bytes after matrices");
  }

  EmbeddingSet emb;
  emb.users = DenseMatrix(n_users, dim);
  emb.items = DenseMatrix(n_items, dim);
  std::memcpy(emb.users.data(), buf.data() + kHeaderBytes, emb.users.size() * sizeof(float));
  std::memcpy(emb.items.data(), buf.data() + kHeaderBytes + emb.users.size() * sizeof(float),
              emb.items.size() * sizeof(float));
  return emb;
}

EmbeddingSet load_checkpoint(const std::filesystem::path& path, std::size_t n_users,
                             std::size_t n_items) {
  auto emb = load_checkpoint(path);
  if (emb.n_users() != n_users || emb.n_items() != n_items) {
    throw Error(ErrorCode::DimensionMismatch,
                "checkpoint holds " + std::to_string(emb.n_users()) + " users x " +
                    std::to_string(emb.n_items()) + " items, dataset has " +
                    std::to_string(n_users) + " x " + std::to_string(n_items));
  }
  return emb;
}

}  // namespace gode::datapipe
