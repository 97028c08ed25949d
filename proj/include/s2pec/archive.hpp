#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "s2pec/tensor.hpp"

namespace s2pec {

// Array container used for checkpoints and feature dumps.
//
//   bytes 0-7    magic "S2PECARC"
//   bytes 8-11   container version (uint32 LE, currently 1)
//   bytes 12-19  header length H (uint64 LE)
//   next H bytes UTF-8 JSON header:
//                  {"format": <tag>, "meta": {...},
//                   "arrays": [{"name", "shape", "offset"}, ...]}
//   remainder    float64 LE payload; "offset" counts doubles from its start
struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Archive {
  std::string format;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

std::vector<uint8_t> encode_archive(const Archive& a);
Archive decode_archive(const std::vector<uint8_t>& bytes, const std::string& source = "<memory>");

void write_archive(const std::filesystem::path& path, const Archive& a);
// Throws InputError on a bad container, or when expected_format is
// non-empty and does not match the stored tag.
Archive read_archive(const std::filesystem::path& path, const std::string& expected_format = "");

}  // namespace s2pec
