#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "goat/common.hpp"

namespace goat {

inline nlohmann::json parse_json_text(const std::string& text,
                                      const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedSpec(what + ": " + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedSpec("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json parse_json_file(const std::string& path) {
  return parse_json_text(read_text_file(path), path);
}

}  // namespace goat
