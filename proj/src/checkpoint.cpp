#include "zsml/checkpoint.hpp"

#include <limits>
#include <set>

#include "binio.hpp"
#include "zsml/error.hpp"

namespace zsml {

namespace {

constexpr char kMagic[] = "ZSMP";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_zsmp(const NamedTensors& tensors) {
  detail::ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kVersion);
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("ZSMP: tensor name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto dim : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
    w.put_array<float>(t.data());
  }
  return w.take();
}

NamedTensors decode_zsmp(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "ZSMP");
  if (r.get_bytes(4) != kMagic) throw FormatError("ZSMP: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError("ZSMP: unsupported version " + std::to_string(version));
  NamedTensors out;
  std::set<std::string> names;
  while (!r.at_end()) {
    std::string name = r.get_bytes(r.get<std::uint16_t>());
    if (!names.insert(name).second) throw FormatError("ZSMP: duplicate tensor '" + name + "'");
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > 2) throw FormatError("ZSMP: tensor '" + name + "' has unsupported rank");
    Shape shape;
    std::uint64_t count = 1;
    for (int i = 0; i < rank; ++i) {
      shape.push_back(r.get<std::uint32_t>());
      count *= shape.back();
    }
    auto values = r.get_array<float>(count);
    try {
      out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    } catch (const NumericalError&) {
      throw FormatError("ZSMP: tensor holds non-finite values");
    }
  }
  return out;
}

void save_zsmp(const NamedTensors& tensors, const std::filesystem::path& path) {
  detail::write_file(path, encode_zsmp(tensors));
}

NamedTensors load_zsmp(const std::filesystem::path& path) { return decode_zsmp(detail::read_file(path)); }

std::uint64_t checksum(const NamedTensors& tensors) { return detail::fnv1a(encode_zsmp(tensors)); }

std::uint64_t file_checksum(const std::filesystem::path& path) { return detail::fnv1a(detail::read_file(path)); }

}  // namespace zsml
