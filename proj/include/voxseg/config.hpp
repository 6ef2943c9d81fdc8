// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// Flat `key = value` configuration text. '#' starts a comment; blank lines
// are ignored; a repeated key keeps its last value.
namespace voxseg::config {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse(std::string_view text);
KeyValues read_file(const std::filesystem::path& path);

/// Later maps override earlier ones.
void merge_into(KeyValues& base, const KeyValues& overrides);

std::int64_t to_int(std::string_view key, std::string_view value);
double to_double(std::string_view key, std::string_view value);
bool to_bool(std::string_view key, std::string_view value);
/// Comma separated integers.
std::vector<int> to_int_list(std::string_view key, std::string_view value);

/// Shortest decimal text that reads back to the same float.
std::string format_float(float value);
std::string format_int_list(const std::vector<int>& values);

}  // namespace voxseg::config
