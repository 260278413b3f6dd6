#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace nvsim {

using ojson = nlohmann::ordered_json;

// Serializes with insertion-ordered keys, floating-point values at 17
// significant digits and non-finite values as null.
std::string dump_json(const ojson& j, int indent = 2);

}  // namespace nvsim
