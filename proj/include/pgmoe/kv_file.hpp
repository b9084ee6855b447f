// Copyright 2026 The pgmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace pgmoe {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// `key=value` per line, '#' starts a comment, blank lines ignored.
/// Whitespace around keys and values is trimmed. Duplicate keys are an error.
std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source);
std::vector<KeyValue> read_key_value_file(const std::string& path);

std::vector<std::string> split_list(const std::string& value);
double parse_double(const KeyValue& kv);
long long parse_int(const KeyValue& kv);
bool parse_bool(const KeyValue& kv);

}  // namespace pgmoe
