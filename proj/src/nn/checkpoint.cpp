#include "hgit/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "hgit/errors.hpp"

namespace hgit::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

constexpr char kMagic[8] = {'H', 'G', 'I', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint '" + path.string() + "'");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     const std::vector<const Param*>& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string h = header.dump();
  put<std::uint64_t>(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    for (int d : {p->value.n(), p->value.c(), p->value.h(), p->value.w()}) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("'" + path.string() + "' is not a checkpoint file");
  }
  if (get<std::uint32_t>(in, path) != kVersion) throw FormatError("unsupported checkpoint version");
  const auto hlen = get<std::uint64_t>(in, path);
  std::string h(hlen, '\0');
  in.read(h.data(), static_cast<std::streamsize>(hlen));
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header: " + std::string(e.what()));
  }
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = get<std::uint32_t>(in, path);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    int dims[4];
    for (int& d : dims) d = get<std::int32_t>(in, path);
    Tensor t(dims[0], dims[1], dims[2], dims[3]);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw FormatError("truncated checkpoint '" + path.string() + "'");
    ck.names.push_back(std::move(name));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

void assign_parameters(const std::vector<Param*>& params, const Checkpoint& ckpt, std::size_t offset,
                       std::size_t count) {
  if (count == static_cast<std::size_t>(-1)) count = ckpt.tensors.size() - offset;
  if (params.size() != count || offset + count > ckpt.tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor& src = ckpt.tensors[offset + i];
    if (!src.same_shape(params[i]->value)) {
      throw FormatError("checkpoint tensor " + std::to_string(offset + i) + " has shape " + src.shape_string() +
                        ", model expects " + params[i]->value.shape_string());
    }
    params[i]->value = src;
  }
}

}  // namespace hgit::nn
