#include "s2pec/archive.hpp"

#include <bit>
#include <cstring>

#include "s2pec/audio.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

static_assert(std::endian::native == std::endian::little, "archive payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', '2', 'P', 'E', 'C', 'A', 'R', 'C'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::vector<uint8_t>& out, T v) {
  uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T get(const std::vector<uint8_t>& in, size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

}  // namespace

const NamedArray* Archive::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::vector<uint8_t> encode_archive(const Archive& a) {
  nlohmann::json index = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& arr : a.arrays) {
    if (static_cast<int64_t>(arr.values.size()) != shape_numel(arr.shape)) {
      throw ContractError("archive array '" + arr.name + "' has " + std::to_string(arr.values.size()) +
                          " values for shape " + shape_str(arr.shape));
    }
    index.push_back({{"name", arr.name}, {"shape", arr.shape}, {"offset", offset}});
    offset += arr.values.size();
  }
  nlohmann::json header = {{"format", a.format}, {"meta", a.meta}, {"arrays", index}};
  const std::string h = header.dump();

  std::vector<uint8_t> out;
  out.reserve(20 + h.size() + offset * sizeof(double));
  out.insert(out.end(), kMagic, kMagic + 8);
  put<uint32_t>(out, kVersion);
  put<uint64_t>(out, h.size());
  out.insert(out.end(), h.begin(), h.end());
  for (const auto& arr : a.arrays) {
    const auto* p = reinterpret_cast<const uint8_t*>(arr.values.data());
    out.insert(out.end(), p, p + arr.values.size() * sizeof(double));
  }
  return out;
}

Archive decode_archive(const std::vector<uint8_t>& bytes, const std::string& source) {
  auto fail = [&](const std::string& why) { return InputError(source + ": " + why); };
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw fail("not an s2pec archive");
  const uint32_t version = get<uint32_t>(bytes, 8);
  if (version != kVersion) throw fail("unsupported archive version " + std::to_string(version));
  const uint64_t hlen = get<uint64_t>(bytes, 12);
  if (hlen > bytes.size() - 20) throw fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<int64_t>(hlen));
  } catch (const nlohmann::json::exception& ex) {
    throw fail(std::string("bad header: ") + ex.what());
  }
  const size_t payload = 20 + hlen;
  const uint64_t n_doubles = (bytes.size() - payload) / sizeof(double);

  Archive a;
  a.format = header.value("format", "");
  a.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("arrays")) {
    NamedArray arr;
    arr.name = e.at("name").get<std::string>();
    arr.shape = e.at("shape").get<Shape>();
    const uint64_t off = e.at("offset").get<uint64_t>();
    const auto n = static_cast<uint64_t>(shape_numel(arr.shape));
    if (off + n > n_doubles) throw fail("array '" + arr.name + "' exceeds payload");
    arr.values.resize(n);
    std::memcpy(arr.values.data(), bytes.data() + payload + off * sizeof(double), n * sizeof(double));
    a.arrays.push_back(std::move(arr));
  }
  return a;
}

void write_archive(const std::filesystem::path& path, const Archive& a) {
  write_file_atomic(path, encode_archive(a));
}

Archive read_archive(const std::filesystem::path& path, const std::string& expected_format) {
  Archive a = decode_archive(read_file_bytes(path), path.string());
  if (!expected_format.empty() && a.format != expected_format) {
    throw InputError(path.string() + ": expected format '" + expected_format + "', found '" + a.format + "'");
  }
  return a;
}

}  // namespace s2pec
